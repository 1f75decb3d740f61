"""figforge command line.

Subcommands: ``run`` executes the whole pipeline from a config file;
``ingest|filter|split|parse|align|emit|eval`` run one stage against the
previous stage's checkpoint; ``gen-fixtures`` writes the synthetic mini
corpus.  Every config key has a matching flag that overrides it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import validate_config
from .errors import FigforgeError
from .pipeline import STAGES, run_pipeline, run_single_stage


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the JSON config file")
    parser.add_argument("--archive-root", dest="archive_root")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--keyword-file", dest="keyword_file")
    parser.add_argument("--taxonomy-file", dest="taxonomy_file")
    parser.add_argument("--split-mode", dest="split_mode", choices=["gutter", "detector"])
    parser.add_argument("--conf-threshold", dest="conf_threshold", type=float)
    parser.add_argument("--align-mode", dest="align_mode",
                        choices=["auto", "label", "similarity", "fallback"])
    parser.add_argument("--endpoint", dest="inference_endpoint",
                        help="inference sidecar URL, e.g. http://127.0.0.1:8020")
    parser.add_argument("--seed", dest="seed", type=int)
    parser.add_argument("--exclusion-hash-file", dest="exclusion_hash_file")
    parser.add_argument("--workers", dest="workers", type=int)
    parser.add_argument("--no-figures", dest="render_figures", action="store_false",
                        default=None, help="skip report figure rendering")


_OVERRIDE_KEYS = ("archive_root", "output_dir", "keyword_file", "taxonomy_file",
                  "split_mode", "conf_threshold", "align_mode", "inference_endpoint",
                  "seed", "exclusion_hash_file", "workers", "render_figures")


def _config_from_args(args: argparse.Namespace):
    overrides = {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}
    return validate_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figforge",
                                     description="subfigure-subcaption dataset pipeline")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the full pipeline")
    _add_config_flags(run_p)

    for stage in STAGES:
        stage_p = sub.add_parser(stage, help=f"run only the {stage} stage")
        _add_config_flags(stage_p)

    gen_p = sub.add_parser("gen-fixtures", help="generate the synthetic mini corpus")
    gen_p.add_argument("--out", required=True, help="destination directory")
    gen_p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-fixtures":
            from .synth import generate_mini_corpus
            ledger = generate_mini_corpus(args.out, seed=args.seed)
            print(f"wrote mini corpus to {args.out} "
                  f"({ledger['packages']} packages, "
                  f"{ledger['figure_records']} figures)")
            return 0
        config = _config_from_args(args)
        if args.command == "run":
            report = run_pipeline(config)
            print(json.dumps(report["funnel"], indent=2, sort_keys=True))
            print(f"report: {config.output_dir / 'report.json'}")
            return 0
        run_single_stage(config, args.command)
        print(f"stage {args.command} complete "
              f"(checkpoints under {config.output_dir / 'stages'})")
        return 0
    except FigforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
