
import pytest

from figforge.errors import EmptyKeywordList, MissingMedicalCategory
from figforge.filtering import (
    CategoryScores,
    KeywordSet,
    default_keyword_path,
    default_taxonomy_path,
    gate_medical,
    load_keywords,
    load_taxonomy,
    match_caption,
    tag_modality,
)

# Twenty-caption fixture scored against the bundled keyword list; the
# expected match count comes from the naive oracle below.
TWENTY_CAPTIONS = [
    "Axial CT scan of the chest",
    "T2-weighted MRI of the brain",
    "Chest X-ray on admission",
    "Abdominal ultrasound demonstrating free fluid",
    "Coronary angiogram before stenting",
    "Screening mammography image",
    "Upper endoscopy revealing an ulcer",
    "Renal biopsy under histopathology review",
    "Doppler study of the carotid artery",
    "Bone scintigraphy of the pelvis",
    "Intraoperative fluoroscopy of the spine",
    "Routine ECG with ST elevation",
    "Lateral radiograph of the knee",
    "Octopus anatomy illustration",
    "Study flowchart of enrolled participants",
    "Phylogenetic tree of bacterial isolates",
    "Western blot of protein expression",
    "Kaplan-Meier survival curves",
    "Bar chart of cytokine levels",
    "Map of study sites in the region",
]


def naive_match(caption: str, terms: set[str]) -> bool:
    """Independent oracle: split on non-alphanumerics and compare n-grams."""
    lowered = caption.lower()
    for term in terms:
        for start in range(len(lowered) - len(term) + 1):
            if lowered[start:start + len(term)] != term:
                continue
            before = lowered[start - 1] if start > 0 else " "
            after_idx = start + len(term)
            after = lowered[after_idx] if after_idx < len(lowered) else " "
            if not before.isalnum() and not after.isalnum():
                return True
    return False


def test_load_keywords_normalizes(tmp_path):
    f = tmp_path / "kw.txt"
    f.write_text("CT\nct \nMRI\n# comment\n", encoding="utf-8")
    ks = load_keywords(f)
    assert ks.terms == frozenset({"ct", "mri"})


def test_load_keywords_empty(tmp_path):
    f = tmp_path / "kw.txt"
    f.write_text("# only comments\n\n", encoding="utf-8")
    with pytest.raises(EmptyKeywordList):
        load_keywords(f)


def test_default_keyword_list_size():
    ks = load_keywords(default_keyword_path())
    lines = [ln.split("#", 1)[0].strip().lower()
             for ln in default_keyword_path().read_text("utf-8").splitlines()]
    distinct = {ln for ln in lines if ln}
    assert len(ks.terms) == len(distinct)
    assert len(ks.terms) >= 40


def test_match_caption_examples():
    ks = KeywordSet(terms=frozenset({"ct", "mri"}))
    result = match_caption("Axial CT scan of chest", ks)
    assert result.matched
    assert [(h.term, h.offset) for h in result.hits] == [("ct", 6)]
    assert not match_caption("Octopus anatomy", KeywordSet(frozenset({"ct"}))).matched
    assert not match_caption("", ks).matched


def test_match_caption_hits_sorted_by_offset():
    ks = KeywordSet(terms=frozenset({"ct", "mri"}))
    result = match_caption("MRI and CT of the abdomen", ks)
    assert [h.term for h in result.hits] == ["mri", "ct"]
    assert result.hits[0].offset == 0


def test_twenty_caption_fixture_matches_thirteen():
    ks = load_keywords(default_keyword_path())
    oracle = [naive_match(c, set(ks.terms)) for c in TWENTY_CAPTIONS]
    got = [match_caption(c, ks).matched for c in TWENTY_CAPTIONS]
    assert got == oracle
    assert sum(got) == 13


def test_match_monotone_in_keyword_set():
    small = KeywordSet(terms=frozenset({"ct"}))
    large = KeywordSet(terms=frozenset({"ct", "mri", "ultrasound"}))
    for caption in TWENTY_CAPTIONS:
        if match_caption(caption, small).matched:
            assert match_caption(caption, large).matched


def _scores(medical_rank: int) -> CategoryScores:
    """Scores where Medical lands exactly at the given 1-based rank."""
    names = tuple(f"cat{i:02d}" for i in range(27)) + ("Medical",)
    values = [float(28 - i) for i in range(28)]  # descending by index
    medical_score = values[medical_rank - 1]
    others = [v for v in values if v != medical_score]
    scores = tuple(others[:27]) + (medical_score,)
    return CategoryScores(scores=scores, category_names=names)


def test_gate_medical_boundary():
    assert gate_medical(_scores(4), k=4) is True
    assert gate_medical(_scores(5), k=4) is False


def test_gate_medical_tie_rule():
    names = ("Medical",) + tuple(f"cat{i:02d}" for i in range(27))
    equal = CategoryScores(scores=(1.0,) * 28, category_names=names)
    assert gate_medical(equal, k=1) is True  # Medical at index 0 wins ties
    names_last = tuple(f"cat{i:02d}" for i in range(27)) + ("Medical",)
    equal_last = CategoryScores(scores=(1.0,) * 28, category_names=names_last)
    assert gate_medical(equal_last, k=27) is False
    assert gate_medical(equal_last, k=28) is True


def test_gate_medical_monotone_in_k():
    for rank in (1, 3, 7, 20):
        scores = _scores(rank)
        results = [gate_medical(scores, k=k) for k in range(1, 29)]
        assert results == sorted(results)  # False... then True... never flips back


def test_gate_medical_missing_category():
    names = tuple(f"cat{i:02d}" for i in range(28))
    with pytest.raises(MissingMedicalCategory):
        gate_medical(CategoryScores(scores=(1.0,) * 28, category_names=names))


def test_tag_modality_examples():
    taxonomy = load_taxonomy(default_taxonomy_path())
    assert tag_modality("MRI and CT of the abdomen", taxonomy) == ["MRI", "CT"]
    assert tag_modality("a mitotic figure is shown", taxonomy) == ["MitoticFigure"]
    assert tag_modality("no imaging terms here", taxonomy) == []


def test_tag_modality_idempotent_under_duplication():
    taxonomy = load_taxonomy(default_taxonomy_path())
    single = tag_modality("CT of the chest", taxonomy)
    doubled = tag_modality("CT of the chest CT of the chest", taxonomy)
    assert single == doubled == ["CT"]


def test_tag_modality_range_is_taxonomy_range():
    taxonomy = load_taxonomy(default_taxonomy_path())
    tags = tag_modality(" ".join(TWENTY_CAPTIONS), taxonomy)
    assert set(tags) <= set(taxonomy.values())
