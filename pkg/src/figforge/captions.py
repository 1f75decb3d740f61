"""The caption distributor: carve a full caption into labeled
subcaptions, or declare it unseparable.

Grammar summary.  Label tokens are only recognized at clause-initial
positions (start of caption, or after ``.``, ``;``, ``:`` or a newline
plus optional whitespace).  Recognized forms:

* parenthesized: ``(a)`` ``(A)`` ``(i)`` ``(1)`` plus ranges ``(a-c)``
  ``(i-iii)`` and lists ``(a, c)`` ``(a and b)``
* half-parenthesized: ``a)`` ``1)`` ``ii)``
* delimited single letters followed by whitespace: ``A.`` ``A:`` ``a,``

Labels normalize to lowercase; a single alphabetic character is treated
as a letter, so ranges like ``i-x`` expand alphabetically while
``i-iii`` (multi-character endpoint) expands as roman numerals.  All
offsets are Unicode character offsets into the caption string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import InvertedRange, MixedAlphabet

NO_LABELS = "no_labels"
SINGLE_LABEL = "single_label"
DUPLICATE_LABELS = "duplicate_labels"
EMPTY_TEXT = "empty_text"


@dataclass(frozen=True)
class LabelToken:
    raw: str
    labels: tuple[str, ...]
    span: tuple[int, int]


@dataclass(frozen=True)
class Subcaption:
    label: str
    text: str
    span: tuple[int, int]


@dataclass(frozen=True)
class SplitResult:
    subcaptions: tuple[Subcaption, ...] | None
    reason: str | None

    @property
    def separable(self) -> bool:
        return self.subcaptions is not None

    @classmethod
    def ok(cls, subcaptions) -> "SplitResult":
        return cls(subcaptions=tuple(subcaptions), reason=None)

    @classmethod
    def failed(cls, reason: str) -> "SplitResult":
        return cls(subcaptions=None, reason=reason)


_TOKEN_RE = re.compile(
    r"(?P<paren>\(\s*[^()\n]{1,40}?\s*\))"
    r"|(?P<half>[A-Za-z0-9]{1,7}\))"
    r"|(?P<delim>[A-Za-z][.:,](?=\s))"
)

_CLAUSE_END_RE = re.compile(r"[.;:\n][ \t\r]*$")

_ROMAN_RE = re.compile(r"^m{0,3}(cm|cd|d?c{0,3})(xc|xl|l?x{0,3})(ix|iv|v?i{0,3})$")

_ROMAN_VALUES = [(1000, "m"), (900, "cm"), (500, "d"), (400, "cd"),
                 (100, "c"), (90, "xc"), (50, "l"), (40, "xl"),
                 (10, "x"), (9, "ix"), (5, "v"), (4, "iv"), (1, "i")]

_LIST_SEP_RE = re.compile(r"(?:\s*,\s*(?:and\s+)?)|(?:\s+and\s+)", re.IGNORECASE)

_RANGE_SEP_RE = re.compile(r"\s*[-–]\s*")


def _roman_value(text: str) -> int:
    total, prev = 0, 0
    for ch in reversed(text):
        val = {"i": 1, "v": 5, "x": 10, "l": 50, "c": 100, "d": 500, "m": 1000}[ch]
        total += val if val >= prev else -val
        prev = max(prev, val)
    return total


def _roman_text(value: int) -> str:
    out = []
    for val, sym in _ROMAN_VALUES:
        while value >= val:
            out.append(sym)
            value -= val
    return "".join(out)


def _classify_atom(atom: str) -> tuple[str, str] | None:
    """Return (kind, normalized label) or None for non-labels.

    Kinds: 'letter' (single a-z), 'digit' (1-2 digits), 'roman'
    (multi-character strict roman numeral).  Single roman characters
    classify as letters.
    """
    atom = atom.strip().lower()
    if not atom:
        return None
    if len(atom) == 1 and atom.isalpha() and atom.isascii():
        return ("letter", atom)
    if atom.isdigit() and len(atom) <= 2:
        return ("digit", atom)
    if _ROMAN_RE.fullmatch(atom) and atom:
        return ("roman", atom)
    return None


def _is_romanish(kind: str, label: str) -> bool:
    return kind == "roman" or (kind == "letter" and label in "ivxlcdm")


def expand_range(token_text: str) -> list[str]:
    """Expand a range or list expression into its labels.

    ``a-c`` -> [a, b, c]; ``i-iii`` -> [i, ii, iii]; ``b, d`` -> [b, d].
    A lone label comes back as a singleton.  Raises InvertedRange when
    the range runs backwards and MixedAlphabet when the endpoints use
    different alphabets.
    """
    text = token_text.strip()
    if _RANGE_SEP_RE.search(text):
        parts = _RANGE_SEP_RE.split(text)
        if len(parts) != 2:
            raise MixedAlphabet(f"unparseable range {token_text!r}")
        lo = _classify_atom(parts[0])
        hi = _classify_atom(parts[1])
        if lo is None or hi is None:
            raise MixedAlphabet(f"unparseable range {token_text!r}")
        (lo_kind, lo_label), (hi_kind, hi_label) = lo, hi
        if lo_kind == "letter" and hi_kind == "letter":
            a, b = ord(lo_label), ord(hi_label)
            if a > b:
                raise InvertedRange(token_text)
            return [chr(c) for c in range(a, b + 1)]
        if _is_romanish(lo_kind, lo_label) and _is_romanish(hi_kind, hi_label) \
                and (lo_kind == "roman" or hi_kind == "roman"):
            a, b = _roman_value(lo_label), _roman_value(hi_label)
            if a > b:
                raise InvertedRange(token_text)
            return [_roman_text(v) for v in range(a, b + 1)]
        if lo_kind == "digit" and hi_kind == "digit":
            a, b = int(lo_label), int(hi_label)
            if a > b:
                raise InvertedRange(token_text)
            return [str(v) for v in range(a, b + 1)]
        raise MixedAlphabet(token_text)
    parts = _LIST_SEP_RE.split(text)
    labels = []
    for part in parts:
        atom = _classify_atom(part)
        if atom is None:
            raise MixedAlphabet(f"unparseable list item {part!r} in {token_text!r}")
        labels.append(atom[1])
    return labels


def _parse_content(content: str) -> tuple[str, ...] | None:
    try:
        labels = expand_range(content)
    except (InvertedRange, MixedAlphabet):
        return None
    return tuple(labels) if labels else None


def _clause_initial(caption: str, start: int) -> bool:
    prefix = caption[:start]
    if prefix.strip() == "":
        return True
    return _CLAUSE_END_RE.search(prefix) is not None


def scan_labels(caption: str) -> list[LabelToken]:
    """Find clause-initial label tokens, sorted by span start.

    Candidates whose content does not parse as a label, range or list
    are skipped; this function never raises.
    """
    tokens: list[LabelToken] = []
    last_end = 0
    for m in _TOKEN_RE.finditer(caption):
        if m.start() < last_end:
            continue
        if not _clause_initial(caption, m.start()):
            continue
        raw = m.group(0)
        if m.lastgroup == "paren":
            content = raw[1:-1]
        elif m.lastgroup == "half":
            content = raw[:-1]
            # half-parenthesized form takes a single label, not ranges
            if _classify_atom(content) is None:
                continue
        else:  # delim: single letter + . : ,
            content = raw[0]
        labels = _parse_content(content)
        if labels is None:
            continue
        tokens.append(LabelToken(raw=raw, labels=labels, span=(m.start(), m.end())))
        last_end = m.end()
    return tokens


def split_caption(caption: str, share_preamble: bool = True) -> SplitResult:
    """Split a caption into labeled subcaptions.

    Needs at least two label tokens with globally distinct labels.
    Subcaption k's text runs from the end of token k to the start of
    token k+1 (the last one runs to the end of the caption); range and
    list tokens replicate their following text to every label.  Any
    preamble before the first token is prepended to every subcaption
    when ``share_preamble`` is on.
    """
    tokens = scan_labels(caption)
    if not tokens:
        return SplitResult.failed(NO_LABELS)
    if len(tokens) == 1:
        return SplitResult.failed(SINGLE_LABEL)
    flat = [label for tok in tokens for label in tok.labels]
    if len(set(flat)) != len(flat):
        return SplitResult.failed(DUPLICATE_LABELS)

    spans = []
    for k, tok in enumerate(tokens):
        start = tok.span[1]
        end = tokens[k + 1].span[0] if k + 1 < len(tokens) else len(caption)
        spans.append((start, end))
    if any(caption[a:b].strip() == "" for a, b in spans):
        return SplitResult.failed(EMPTY_TEXT)

    preamble = caption[:tokens[0].span[0]].strip() if share_preamble else ""
    subcaptions = []
    for tok, (a, b) in zip(tokens, spans):
        body = caption[a:b].strip()
        text = f"{preamble} {body}" if preamble else body
        for label in tok.labels:
            subcaptions.append(Subcaption(label=label, text=text, span=(a, b)))
    return SplitResult.ok(subcaptions)


def label_sort_key(label: str):
    """Sort key used when pairing subcaptions with panels in reading
    order: digits numerically, single letters alphabetically, roman
    numerals by value, anything else lexicographically last."""
    if label.isdigit():
        return (0, int(label), label)
    if len(label) == 1 and label.isalpha():
        return (1, ord(label), label)
    if _ROMAN_RE.fullmatch(label):
        return (2, _roman_value(label), label)
    return (3, 0, label)


def sort_label_indices(labels: list[str]) -> list[int]:
    """Indices that sort ``labels``, resolving letter/roman ambiguity
    from the whole set: when every label is a valid roman numeral and at
    least one is multi-character, the set sorts by roman value."""
    if (len(labels) > 1
            and all(lab and _ROMAN_RE.fullmatch(lab) for lab in labels)
            and any(len(lab) > 1 for lab in labels)):
        return sorted(range(len(labels)), key=lambda i: (_roman_value(labels[i]), i))
    return sorted(range(len(labels)), key=lambda i: (label_sort_key(labels[i]), i))
