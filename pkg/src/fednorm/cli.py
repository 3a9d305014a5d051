"""Command-line entry point: ``fednorm <stage> --config cfg.json``.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from .experiment import STAGES, ConfigError, Experiment, ExperimentConfig, StageError, normalize_directory
from .norm import METHOD_ORDER, NormMethod
from .volume import CohortSplit

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def default_config_text() -> str:
    return resources.files("fednorm").joinpath("default_config.json").read_text(encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment JSON config (default: shipped desk-scale config)")
    common.add_argument("--out", type=Path, help="artifact directory (default: output_dir from the config)")
    common.add_argument("--force", action="store_true", help="rerun stages even if their outputs are current")
    common.add_argument("--threads", type=int, default=1, help="concurrent FL clients per round")
    common.add_argument("--seed-override", type=int, metavar="K", help="set every seed in the config to K")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fednorm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
        if stage == "normalize":
            g = p.add_argument_group("standalone mode (normalize one cohort directory with one method)")
            g.add_argument("--method", choices=[m.value for m in METHOD_ORDER])
            g.add_argument("--in", dest="in_dir", type=Path, help="directory of study folders")
            g.add_argument("--fit-split", choices=["train", "test", "val", "all"], default="train",
                           help="subjects the Nyul scale is fitted on (default: train)")
            g.add_argument("--split", type=Path,
                           help="split.json (default: <in>/split.json, then <in>/../../split.json)")
            g.add_argument("--subset", type=int,
                           help="subset whose fit-split ids are used (default: the method's arm index)")
    sub.add_parser("run", parents=[common], help="run every stage in order")
    sub.add_parser("verify", parents=[common], help="re-check manifest hashes of an artifact tree")
    sub.add_parser("default-config", help="print the shipped default config")
    return parser


def load_config(args) -> ExperimentConfig:
    if args.config is None:
        import json

        cfg = ExperimentConfig.from_dict(json.loads(default_config_text()))
    else:
        cfg = ExperimentConfig.load(args.config)
    if args.seed_override is not None:
        cfg = cfg.with_seed(args.seed_override)
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    return cfg


def _find_split(args) -> Path:
    candidates = [args.split] if args.split else [args.in_dir / "split.json", args.in_dir.parent.parent / "split.json"]
    for c in candidates:
        if c.exists():
            return c
    raise ConfigError(f"--fit-split {args.fit_split} needs a split file; pass --split")


def run_standalone_normalize(args) -> int:
    if args.in_dir is None or args.out is None:
        raise ConfigError("standalone normalize needs --in and --out")
    method = NormMethod(args.method)
    fit_ids = None
    if method is NormMethod.NYUL and args.fit_split != "all":
        split = CohortSplit.from_json(_find_split(args).read_text())
        k = METHOD_ORDER.index(method) if args.subset is None else args.subset
        if not 0 <= k < len(split.subsets):
            raise ConfigError(f"--subset {k} out of range")
        fit_ids = getattr(split.subsets[k], args.fit_split)
    try:
        ids = normalize_directory(method, args.in_dir, args.out, fit_ids)
    except Exception as exc:
        raise StageError("normalize", f"{type(exc).__name__}: {exc}") from exc
    print(f"normalized {len(ids)} studies with {method.label} into {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "default-config":
        print(default_config_text(), end="")
        return EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if getattr(args, "method", None) is not None:
            return run_standalone_normalize(args)
        cfg = load_config(args)
        exp = Experiment(cfg, args.out, force=args.force, threads=args.threads)
        if args.command == "verify":
            bad = exp.verify_manifest()
            for rel in bad:
                print(f"hash mismatch: {rel}", file=sys.stderr)
            return EXIT_STAGE if bad else EXIT_OK
        stages = STAGES if args.command == "run" else (args.command,)
        for stage in stages:
            exp.run_stage(stage)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
