"""Curriculum weights over a critic bank.

A weight vector ``lam`` on the simplex mixes the bank into one critic,
``f(x) = sum_i lam_i f_i(x)``.  Moving mass toward later (stronger) critics
makes the mixed critic stronger; :func:`compare` certifies that ordering by
comparing backwards cumulative sums.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from wganc import autodiff as ad
from wganc.families import CriticBank
from wganc.nn import attach

SUM_TOL = 1e-9
ORDER_TOL = 1e-12


class LambdaError(ValueError):
    pass


class NegativeEntry(LambdaError):
    def __init__(self, index: int, value: float):
        self.index, self.value = index, value
        super().__init__(f"lambda[{index}] = {value!r} is negative")


class SumNotOne(LambdaError):
    def __init__(self, total: float):
        self.total = total
        super().__init__(f"lambda sums to {total!r}, not 1")


class DimensionMismatch(ValueError):
    pass


class OrderResult(enum.Enum):
    DOMINATES = "dominates"
    DOMINATED_BY = "dominated_by"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


def check_valid(weights: Sequence[float]) -> None:
    """Raise NegativeEntry / SumNotOne unless ``weights`` lies on the simplex."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise LambdaError("lambda must be a non-empty vector")
    for i, v in enumerate(w):
        if not v >= 0.0:
            raise NegativeEntry(i, float(v))
    total = float(w.sum())
    if abs(total - 1.0) > SUM_TOL:
        raise SumNotOne(total)


@dataclass(frozen=True)
class Lambda:
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(v) for v in self.weights))
        check_valid(self.weights)

    @classmethod
    def one_hot(cls, d: int, i: int) -> Lambda:
        w = [0.0] * d
        w[i] = 1.0
        return cls(tuple(w))

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)

    def active(self) -> list[int]:
        return [i for i, v in enumerate(self.weights) if v != 0.0]

    def is_one_hot(self) -> bool:
        return len(self.active()) == 1

    def __str__(self) -> str:
        return ";".join(repr(v) for v in self.weights)


def _backward_sums(w: Iterable[float]) -> np.ndarray:
    return np.cumsum(np.asarray(list(w), dtype=np.float64)[::-1])[::-1]


def compare(a: Lambda | Sequence[float], b: Lambda | Sequence[float]) -> OrderResult:
    """Order ``a`` against ``b`` using backwards cumulative sums.

    ``a`` dominates ``b`` when sum_{i>=k} a_i >= sum_{i>=k} b_i for every k.
    This is a sufficient condition for the mixed critic under ``a`` being able
    to represent everything the one under ``b`` can.
    """
    wa, wb = np.asarray(list(a), float), np.asarray(list(b), float)
    if wa.shape != wb.shape:
        raise DimensionMismatch(f"cannot compare lambdas of size {wa.size} and {wb.size}")
    if np.all(np.abs(wa - wb) <= ORDER_TOL):
        return OrderResult.EQUAL
    sa, sb = _backward_sums(wa), _backward_sums(wb)
    a_ge = bool(np.all(sa >= sb - ORDER_TOL))
    b_ge = bool(np.all(sb >= sa - ORDER_TOL))
    if a_ge and b_ge:
        return OrderResult.EQUAL
    if a_ge:
        return OrderResult.DOMINATES
    if b_ge:
        return OrderResult.DOMINATED_BY
    return OrderResult.INCOMPARABLE


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    """Ordered (lambda, duration) stages, each no weaker than the last.

    ``reinit_on_switch`` marks curricula where a stage change hands control to
    a freshly initialised critic (the one-hot recipe).
    """

    stages: tuple[tuple[Lambda, int], ...]
    reinit_on_switch: bool = True

    def __post_init__(self):
        if not self.stages:
            raise ScheduleError("schedule has no stages")
        d = len(self.stages[0][0])
        for k, (lam, dur) in enumerate(self.stages):
            if len(lam) != d:
                raise ScheduleError(f"stage {k} has dimension {len(lam)}, expected {d}")
            if int(dur) < 1:
                raise ScheduleError(f"stage {k} duration {dur} < 1")
        for k in range(1, len(self.stages)):
            rel = compare(self.stages[k][0], self.stages[k - 1][0])
            if rel not in (OrderResult.DOMINATES, OrderResult.EQUAL):
                raise ScheduleError(
                    f"stage {k} ({self.stages[k][0]}) does not dominate stage {k - 1} "
                    f"({self.stages[k - 1][0]}): {rel.value}"
                )

    @property
    def dim(self) -> int:
        return len(self.stages[0][0])

    @property
    def total(self) -> int:
        return sum(int(dur) for _, dur in self.stages)

    def lambdas(self) -> list[Lambda]:
        return [lam for lam, _ in self.stages]

    def at(self, iteration: int) -> tuple[int, Lambda]:
        """Stage index and lambda for an outer iteration; the last stage persists."""
        acc = 0
        for k, (lam, dur) in enumerate(self.stages):
            acc += int(dur)
            if iteration < acc:
                return k, lam
        return len(self.stages) - 1, self.stages[-1][0]


def one_hot_schedule(d: int, iterations_per_stage: int) -> Schedule:
    if d < 1 or iterations_per_stage < 1:
        raise ScheduleError("need d >= 1 and iterations_per_stage >= 1")
    return Schedule(tuple((Lambda.one_hot(d, i), int(iterations_per_stage)) for i in range(d)),
                    reinit_on_switch=True)


def blended_schedule(d: int, stage_len: int, ramp_len: int) -> Schedule:
    """Hold each e_i for ``stage_len`` iterations, then ramp linearly to e_{i+1}.

    The ramp spans ``ramp_len`` steps; its ``ramp_len - 1`` interior points
    are one-iteration stages, so the endpoints are the one-hot stages.
    """
    if d < 1 or stage_len < 1 or ramp_len < 1:
        raise ScheduleError("need d, stage_len, ramp_len >= 1")
    stages: list[tuple[Lambda, int]] = []
    for i in range(d):
        stages.append((Lambda.one_hot(d, i), int(stage_len)))
        if i == d - 1:
            break
        for j in range(1, ramp_len):
            t = j / ramp_len
            w = [0.0] * d
            w[i], w[i + 1] = 1.0 - t, t
            stages.append((Lambda(tuple(w)), 1))
    # Schedule.__post_init__ re-checks every adjacent pair
    return Schedule(tuple(stages), reinit_on_switch=False)


def schedule_from_stages(stages: Sequence[tuple[Sequence[float], int]],
                         reinit_on_switch: bool | None = None) -> Schedule:
    lams = [(Lambda(tuple(w)), int(n)) for w, n in stages]
    if reinit_on_switch is None:
        reinit_on_switch = all(lam.is_one_hot() for lam, _ in lams)
    return Schedule(tuple(lams), reinit_on_switch=reinit_on_switch)


def attach_bank(bank: CriticBank, lam: Lambda, graph: ad.Graph, trainable: bool
                ) -> dict[int, list[ad.Node]]:
    """Leaves for the critics ``lam`` actually uses."""
    if len(lam) != len(bank):
        raise DimensionMismatch(f"lambda has {len(lam)} entries, bank has {len(bank)} critics")
    return {i: attach(bank[i].params, graph, trainable) for i in lam.active()}


def composite_critic(bank: CriticBank, lam: Lambda, x: ad.Node,
                     leaves: dict[int, list[ad.Node]] | None = None) -> ad.Node:
    """``sum_i lam_i f_i(x)`` over critics with nonzero weight -> (batch, 1).

    Critics with zero weight are never evaluated.
    """
    if len(lam) != len(bank):
        raise DimensionMismatch(f"lambda has {len(lam)} entries, bank has {len(bank)} critics")
    if leaves is None:
        leaves = attach_bank(bank, lam, x.graph, trainable=False)
    out = None
    for i in lam.active():
        term = bank[i](x, leaves[i])
        if lam.weights[i] != 1.0:
            term = ad.scale(term, lam.weights[i])
        out = term if out is None else ad.add(out, term)
    return out
