"""Run directories for the sine-wave task: one arm, or a paired comparison."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from wganc.config import RunConfig
from wganc.sinusoid import (EvalReport, make_dataset, nearest_sine_error, relative_improvement,
                            write_report, write_samples)
from wganc.trainer import generate, train


@dataclass(frozen=True)
class ArmResult:
    out_dir: Path
    report: EvalReport
    seconds: float


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def run_arm(config: RunConfig, out_dir: str | Path) -> ArmResult:
    """Train one arm and write config.json, metrics.csv, samples.csv, eval.csv,
    eval.txt, run.json and checkpoints/ into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "config.json", config.dumps())
    d = config.raw["dataset"]
    dataset = make_dataset(int(d["size"]), config.length, config.ranges(), int(d["seed"]))
    result = train(config.train_config(), config.schedule(), config.bank(), config.generator(),
                   dataset.sample, metrics_path=out / "metrics.csv",
                   wall_clock=config.wall_clock, checkpoint_dir=out / "checkpoints")
    z_dim = config.train_config().z_dim
    z = np.random.default_rng(config.eval_noise_seed()).standard_normal(
        (int(config.raw["eval"]["samples"]), z_dim))
    samples = generate(result.gen, z)
    write_samples(out / "samples.csv", samples)
    report = nearest_sine_error(samples, config.ranges(), int(config.raw["eval"]["grid"]))
    write_report(out / "eval.csv", report)
    _write_atomic(out / "eval.txt", report.to_text() + "\n")
    _write_atomic(out / "run.json", json.dumps({"train_seconds": result.seconds}) + "\n")
    return ArmResult(out, report, result.seconds)


@dataclass(frozen=True)
class Comparison:
    seed: int
    curriculum: ArmResult
    baseline: ArmResult

    @property
    def improvement(self) -> float:
        return relative_improvement(self.curriculum.report.mean, self.baseline.report.mean)


def run_comparison(config: RunConfig, out_dir: str | Path) -> Comparison:
    """Curriculum arm and no-curriculum baseline with matched seed and budget."""
    out = Path(out_dir)
    cur = run_arm(config, out / "curriculum")
    base = run_arm(config.as_baseline(), out / "baseline")
    return Comparison(config.seed, cur, base)


SUMMARY_HEADER = ("seed", "curriculum_mean", "curriculum_stderr", "baseline_mean",
                  "baseline_stderr", "improvement", "curriculum_seconds", "baseline_seconds")


def _compare_one(args) -> Comparison:
    raw, seed, out = args
    return run_comparison(RunConfig.from_dict(raw).with_seed(seed), Path(out) / f"seed{seed}")


def compare_seeds(config: RunConfig, out_dir: str | Path, seeds: Sequence[int],
                  jobs: int = 1) -> list[Comparison]:
    """Paired runs per seed plus summary.csv (one row per seed, then 'mean')."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(config.resolved(), int(s), str(out)) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_compare_one, tasks))
    else:
        results = [_compare_one(t) for t in tasks]
    write_summary(out / "summary.csv", results)
    return results


def write_summary(path: Path, results: Sequence[Comparison]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in results:
            w.writerow([r.seed, repr(r.curriculum.report.mean), repr(r.curriculum.report.stderr),
                        repr(r.baseline.report.mean), repr(r.baseline.report.stderr),
                        repr(r.improvement), f"{r.curriculum.seconds:.3f}",
                        f"{r.baseline.seconds:.3f}"])
        cur = float(np.mean([r.curriculum.report.mean for r in results]))
        base = float(np.mean([r.baseline.report.mean for r in results]))
        w.writerow(["mean", repr(cur), "", repr(base), "", repr(relative_improvement(cur, base)),
                    f"{sum(r.curriculum.seconds for r in results):.3f}",
                    f"{sum(r.baseline.seconds for r in results):.3f}"])
    os.replace(tmp, path)
