"""Alternating critic/generator training under a curriculum of critic weights.

Each outer iteration takes the current lambda from the schedule, runs
``n_critic`` critic updates on the mixed critic, then one generator update
against it.  With a single-stage schedule on the full-input critic this is
plain WGAN-GP; ``loss="vanilla_gan"`` swaps in the original GAN objective.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from wganc import autodiff as ad
from wganc.curriculum import Lambda, Schedule, attach_bank, composite_critic
from wganc.families import CriticBank, derive_seed, reinit_stage
from wganc.nn import AdamConfig, AdamState, MlpParams, adam_init, adam_step, attach, mlp_apply, mlp_forward, save_checkpoint

log = logging.getLogger(__name__)

DataSource = Callable[[np.random.Generator, int], np.ndarray]

LOSSES = ("wasserstein_gp", "vanilla_gan")
PENALTY_STYLES = ("one_sided", "two_sided")

# seed-derivation keys, so each consumer gets its own stream
_TRAIN_STREAM = 1
_REINIT_STREAM = 2
_ESTIMATE_STREAM = 3

METRICS_HEADER = ("iter", "stage", "lambda", "critic_objective", "gen_loss", "penalty", "ms")


class NumericalError(RuntimeError):
    """A loss went non-finite; ``record`` holds the offending step's values."""

    def __init__(self, message: str, record: dict):
        self.record = record
        super().__init__(f"{message}: {record}")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    n_critic: int = 5
    penalty: float = 10.0
    penalty_style: str = "one_sided"
    loss: str = "wasserstein_gp"
    z_dim: int = 32
    iterations: int = 1000
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.n_critic < 1 or self.z_dim < 1:
            raise ValueError("batch_size, n_critic and z_dim must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.penalty >= 0:
            raise ValueError("penalty coefficient must be >= 0")
        if self.penalty_style not in PENALTY_STYLES:
            raise ValueError(f"penalty_style must be one of {PENALTY_STYLES}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")


@dataclass(frozen=True)
class Batch:
    real: np.ndarray
    z: Optional[np.ndarray] = None
    eps: Optional[np.ndarray] = None
    fake: Optional[np.ndarray] = None  # bypasses the generator when set

    def __post_init__(self):
        m = self.real.shape[0]
        for name in ("z", "eps", "fake"):
            v = getattr(self, name)
            if v is not None and v.shape[0] != m:
                raise ValueError(f"batch {name} has {v.shape[0]} rows, real has {m}")


@dataclass
class IterationRecord:
    iter: int
    stage: int
    lam: Lambda
    critic_objective: float
    gen_loss: float
    penalty: float
    ms: float

    def row(self, wall_clock: bool = True) -> list[str]:
        return [str(self.iter), str(self.stage), str(self.lam), repr(self.critic_objective),
                repr(self.gen_loss), repr(self.penalty),
                f"{self.ms:.3f}" if wall_clock else ""]


@dataclass
class CriticStepResult:
    bank: CriticBank
    states: dict[int, AdamState]
    objective: float
    penalty: float
    loss: float


def interpolate(real: np.ndarray, fake: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Per-sample mix ``eps * real + (1 - eps) * fake``; eps has one entry per row."""
    e = eps.reshape((-1,) + (1,) * (real.ndim - 1))
    return e * real + (1.0 - e) * fake


def sample_batch(rng: np.random.Generator, data: DataSource, config: TrainConfig) -> Batch:
    m = config.batch_size
    real = data(rng, m)
    z = rng.standard_normal((m, config.z_dim))
    eps = rng.uniform(0.0, 1.0, size=m)
    return Batch(real, z, eps)


def generate(gen: MlpParams, z: np.ndarray, shape: tuple | None = None) -> np.ndarray:
    out = mlp_apply(gen, z)
    return out.reshape(shape) if shape is not None else out


def _check_finite(value: float, what: str, **context) -> float:
    if not math.isfinite(value):
        raise NumericalError(f"non-finite {what}", {what: value, **context})
    return value


def gradient_penalty(bank: CriticBank, lam: Lambda, x_hat: ad.Node, leaves, style: str) -> ad.Node:
    """``mean(hinge(||grad_x f(x_hat)||_2 - 1)^2)`` as a differentiable node."""
    out = composite_critic(bank, lam, x_hat, leaves)
    grad = x_hat.graph.grad_as_graph(ad.sum(out), x_hat)
    gap = ad.add_scalar(ad.row_norm(grad), -1.0)
    if style == "one_sided":
        gap = ad.maximum(gap, 0.0)
    return ad.mean(ad.square(gap))


@dataclass
class CriticLoss:
    loss: ad.Node
    objective: ad.Node
    penalty: ad.Node | None
    leaves: dict[int, list[ad.Node]]


def critic_loss(bank: CriticBank, lam: Lambda, real: np.ndarray, fake: np.ndarray,
                eps: np.ndarray | None, config: TrainConfig, graph: ad.Graph,
                leaves: dict[int, list[ad.Node]] | None = None) -> CriticLoss:
    """Build the critic's minimisation target in ``graph``.

    Wasserstein: ``mean f(fake) - mean f(real) + penalty * gp``.
    Vanilla: ``-(mean log D(real) + mean log(1 - D(fake)))`` with D = sigmoid(f).
    """
    if leaves is None:
        leaves = attach_bank(bank, lam, graph, trainable=True)
    f_real = composite_critic(bank, lam, graph.const(real), leaves)
    f_fake = composite_critic(bank, lam, graph.const(fake), leaves)
    pen = None
    if config.loss == "wasserstein_gp":
        objective = ad.sub(ad.mean(f_real), ad.mean(f_fake))
        loss = ad.scale(objective, -1.0)
        if config.penalty > 0:
            x_hat = graph.param(interpolate(real, fake, eps))
            pen = gradient_penalty(bank, lam, x_hat, leaves, config.penalty_style)
            loss = ad.add(loss, ad.scale(pen, config.penalty))
    else:
        d_real = ad.sigmoid(f_real)
        d_fake = ad.sigmoid(f_fake)
        objective = ad.add(ad.mean(ad.log(d_real)), ad.mean(ad.log(1.0 - d_fake)))
        loss = ad.scale(objective, -1.0)
    return CriticLoss(loss, objective, pen, leaves)


def critic_step(bank: CriticBank, lam: Lambda, gen: MlpParams | None, batch: Batch,
                config: TrainConfig, states: dict[int, AdamState]) -> CriticStepResult:
    """One update of every active critic; the generator stays frozen.

    Returns the unpenalised objective mean f(x) - mean f(x_fake) (for the
    vanilla loss: mean log D(x) + mean log(1 - D(x_fake))).
    """
    fake = batch.fake
    if fake is None:
        fake = generate(gen, batch.z, batch.real.shape)
    g = ad.Graph()
    built = critic_loss(bank, lam, batch.real, fake, batch.eps, config, g)
    obj_value = float(built.objective.value)
    pen_value = float(built.penalty.value) if built.penalty is not None else 0.0
    loss_value = _check_finite(float(built.loss.value), "critic_loss",
                               objective=obj_value, penalty=pen_value)
    leaves = built.leaves
    wrt = [n for i in sorted(leaves) for n in leaves[i]]
    grads = g.backward(built.loss, wrt)

    new_states = dict(states)
    for i in sorted(leaves):
        params, new_states[i] = adam_step(states[i], bank[i].params,
                                          [grads[n.id] for n in leaves[i]])
        bank = bank.with_params(i, params)
    return CriticStepResult(bank, new_states, obj_value, pen_value, loss_value)


def generator_loss_node(bank: CriticBank, lam: Lambda, x_fake: ad.Node, loss: str) -> ad.Node:
    f = composite_critic(bank, lam, x_fake)  # critic params enter as constants
    if loss == "wasserstein_gp":
        return ad.scale(ad.mean(f), -1.0)
    return ad.scale(ad.mean(ad.log(ad.sigmoid(f))), -1.0)


def generator_step(bank: CriticBank, lam: Lambda, gen: MlpParams, z: np.ndarray,
                   config: TrainConfig, state: AdamState, sample_shape: tuple | None = None
                   ) -> tuple[MlpParams, AdamState, float]:
    """One Adam step on ``-mean f(g(z))`` (non-saturating ``-mean log D`` for vanilla)."""
    g = ad.Graph()
    gl = attach(gen, g, trainable=True)
    x = mlp_forward(gen, g.const(z), gl)
    if sample_shape is not None:
        x = ad.reshape(x, (z.shape[0], *sample_shape))
    loss = generator_loss_node(bank, lam, x, config.loss)
    value = _check_finite(float(loss.value), "gen_loss")
    grads = g.backward(loss, gl)
    gen, state = adam_step(state, gen, [grads[n.id] for n in gl])
    return gen, state, value


class MetricsWriter:
    """Streams metrics rows to ``<path>.partial``; renamed to ``path`` on close."""

    def __init__(self, path: str | Path, wall_clock: bool = False):
        self.path = Path(path)
        self.partial = self.path.with_name(self.path.name + ".partial")
        self.wall_clock = wall_clock
        self._fh = open(self.partial, "w", newline="", encoding="utf-8")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(METRICS_HEADER)

    def write(self, rec: IterationRecord) -> None:
        self._csv.writerow(rec.row(self.wall_clock))
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()
            os.replace(self.partial, self.path)


@dataclass
class TrainResult:
    gen: MlpParams
    bank: CriticBank
    metrics: list[IterationRecord]
    checkpoints: list[Path]
    seconds: float


def _save_state(path: Path, gen: MlpParams, bank: CriticBank) -> Path:
    nets = [("generator", gen, None)]
    nets += [(f"critic{i}", c.params, c.transform.to_dict()) for i, c in enumerate(bank.critics)]
    save_checkpoint(path, nets)
    return path


def train(config: TrainConfig, schedule: Schedule, bank: CriticBank, gen: MlpParams,
          data: DataSource, *, sample_shape: tuple | None = None,
          metrics_path: str | Path | None = None, wall_clock: bool = False,
          checkpoint_dir: str | Path | None = None) -> TrainResult:
    """Run ``config.iterations`` outer iterations of curriculum training.

    On every stage change of a one-hot style schedule the newly active critics
    are re-initialised and their optimiser state reset.  Checkpoints go to
    ``checkpoint_dir`` at stage boundaries and at the end.
    """
    if schedule.dim != len(bank):
        raise ValueError(f"schedule has dimension {schedule.dim}, bank has {len(bank)} critics")
    rng = np.random.default_rng(derive_seed(config.seed, _TRAIN_STREAM))
    states = {i: adam_init(c.params, config.adam) for i, c in enumerate(bank.critics)}
    gen_state = adam_init(gen, config.adam)
    writer = MetricsWriter(metrics_path, wall_clock) if metrics_path is not None else None
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    records: list[IterationRecord] = []
    checkpoints: list[Path] = []
    prev_stage = None
    start = time.perf_counter()
    try:
        for it in range(config.iterations):
            stage, lam = schedule.at(it)
            if prev_stage is not None and stage != prev_stage:
                if ckpt_dir is not None:
                    checkpoints.append(_save_state(ckpt_dir / f"stage{prev_stage:03d}.ckpt", gen, bank))
                if schedule.reinit_on_switch:
                    for i in lam.active():
                        bank = reinit_stage(bank, i, derive_seed(config.seed, _REINIT_STREAM, stage, i))
                        states[i] = adam_init(bank[i].params, config.adam)
                log.debug("iteration %d: stage %d -> %d, lambda %s", it, prev_stage, stage, lam)
            prev_stage = stage

            t0 = time.perf_counter()
            objectives, penalties = [], []
            for _ in range(config.n_critic):
                batch = sample_batch(rng, data, config)
                res = critic_step(bank, lam, gen, batch, config, states)
                bank, states = res.bank, res.states
                objectives.append(res.objective)
                penalties.append(res.penalty)
            z = rng.standard_normal((config.batch_size, config.z_dim))
            gen, gen_state, gen_loss = generator_step(bank, lam, gen, z, config, gen_state, sample_shape)
            rec = IterationRecord(it, stage, lam, float(np.mean(objectives)), gen_loss,
                                  float(np.mean(penalties)), (time.perf_counter() - t0) * 1e3)
            records.append(rec)
            if writer is not None:
                writer.write(rec)
    finally:
        if writer is not None:
            writer.close()
    if ckpt_dir is not None:
        checkpoints.append(_save_state(ckpt_dir / "final.ckpt", gen, bank))
    return TrainResult(gen, bank, records, checkpoints, time.perf_counter() - start)


def estimate_wasserstein(fake: DataSource, lam: Lambda, data: DataSource, bank: CriticBank,
                         config: TrainConfig, train_iters: int, seed: int = 0) -> float:
    """Train fresh critics under ``lam`` against frozen fakes; average the tail objective.

    The critics ``lam`` uses are re-initialised, trained for ``train_iters``
    steps, and the unpenalised objective is averaged over the last 10% of
    steps.  ``fake`` draws generator samples, e.g. :func:`generator_source`.
    """
    if train_iters < 1:
        raise ValueError("train_iters must be >= 1")
    rng = np.random.default_rng(derive_seed(seed, _ESTIMATE_STREAM))
    states = {}
    for i in lam.active():
        bank = reinit_stage(bank, i, derive_seed(seed, _ESTIMATE_STREAM, i))
        states[i] = adam_init(bank[i].params, config.adam)
    window = max(1, train_iters // 10)
    tail = []
    m = config.batch_size
    for it in range(train_iters):
        real = data(rng, m)
        batch = Batch(real, eps=rng.uniform(0.0, 1.0, size=m), fake=fake(rng, m))
        res = critic_step(bank, lam, None, batch, config, states)
        bank, states = res.bank, res.states
        if it >= train_iters - window:
            tail.append(res.objective)
    return float(np.mean(tail))


def generator_source(gen: MlpParams, z_dim: int, shape: tuple | None = None) -> DataSource:
    def draw(rng: np.random.Generator, m: int) -> np.ndarray:
        out = generate(gen, rng.standard_normal((m, z_dim)))
        return out.reshape((m, *shape)) if shape is not None else out
    return draw
