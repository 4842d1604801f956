"""Command-line entry point: ``wganc train | eval | compare``.

Exit codes: 0 success, 1 bad config or input file, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from wganc.config import ConfigError, RunConfig
from wganc.experiment import compare_seeds, run_arm
from wganc.sinusoid import SampleFileError, nearest_sine_error, read_samples, write_report
from wganc.trainer import NumericalError

log = logging.getLogger("wganc")


def _load(path: str, seed: int | None) -> RunConfig:
    cfg = RunConfig.load(path)
    return cfg.with_seed(seed) if seed is not None else cfg


def cmd_train(args) -> int:
    cfg = _load(args.config, args.seed)
    if args.baseline:
        cfg = cfg.as_baseline()
    arm = run_arm(cfg, args.out)
    print(arm.report.to_text())
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args.config, None)
    samples = read_samples(args.samples, cfg.length)
    report = nearest_sine_error(samples, cfg.ranges(), int(cfg.raw["eval"]["grid"]))
    out = Path(args.out) if args.out else Path(args.samples).with_name("eval.csv")
    write_report(out, report)
    print(report.to_text())
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args.config, None)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None
    if not seeds:
        raise ConfigError("--seeds is empty")
    results = compare_seeds(cfg, args.out, seeds, jobs=args.jobs)
    for r in results:
        print(f"seed {r.seed}: curriculum {r.curriculum.report.mean:.4f}  "
              f"baseline {r.baseline.report.mean:.4f}  improvement {r.improvement:+.1%}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wganc", description="Curriculum WGAN on sine waves")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one arm")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--baseline", action="store_true",
                   help="single full-length critic, no curriculum")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="nearest-sine error of a samples CSV")
    e.add_argument("--samples", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--out", help="eval.csv path (default: next to the samples)")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="curriculum vs baseline over several seeds")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--seeds", default="0,1,2")
    c.add_argument("--jobs", type=int, default=1, help="parallel processes")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SampleFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
