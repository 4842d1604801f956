"""Nested critic families built by restricting what each critic sees.

A critic on the first ``i`` time steps, or on a ``k``-times average-downsampled
image, is a special case of a critic on the full input that ignores the rest.
So growing the prefix (or shrinking the downsample factor) gives nested
function classes F_1 ⊆ F_2 ⊆ ... without any change to the networks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from wganc import autodiff as ad
from wganc.nn import MlpParams, MlpSpec, init_mlp, mlp_forward


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


def _on_arrays(fn, x, *args):
    if isinstance(x, ad.Node):
        return fn(x, *args)
    return fn(ad.Graph().const(x), *args).value


def prefix(x, i: int):
    """First ``i`` columns of a (batch, T) sequence batch."""
    def run(x: ad.Node, i: int) -> ad.Node:
        if x.value.ndim != 2:
            raise ad.ShapeError("prefix", [x.shape])
        T = x.shape[1]
        if not 1 <= i <= T:
            raise ValueError(f"prefix length {i} outside [1, {T}]")
        return x if i == T else ad.slice_cols(x, 0, i)
    return _on_arrays(run, x, i)


def downsample(x, k: int):
    """Average every k×k block of a (batch, W, H, C) image batch."""
    def run(x: ad.Node, k: int) -> ad.Node:
        if x.value.ndim != 4:
            raise ad.ShapeError("downsample", [x.shape])
        b, w, h, c = x.shape
        if k < 1 or w % k or h % k:
            raise ValueError(f"downsample factor {k} does not divide image size {w}x{h}")
        if k == 1:
            return x
        blocks = ad.reshape(x, (b, w // k, k, h // k, k, c))
        return ad.mean(blocks, axis=(2, 4))
    return _on_arrays(run, x, k)


@dataclass(frozen=True)
class Prefix:
    length: int
    kind: str = "prefix"

    def input_dim(self) -> int:
        return self.length

    def apply(self, x: ad.Node) -> ad.Node:
        return prefix(x, self.length)

    def to_dict(self) -> dict:
        return {"kind": "prefix", "param": self.length}


@dataclass(frozen=True)
class Downsample:
    factor: int
    width: int
    channels: int = 1
    kind: str = "downsample"

    def input_dim(self) -> int:
        side = self.width // self.factor
        return side * side * self.channels

    def apply(self, x: ad.Node) -> ad.Node:
        d = downsample(x, self.factor)
        return ad.reshape(d, (d.shape[0], self.input_dim()))

    def to_dict(self) -> dict:
        return {"kind": "downsample", "param": self.factor,
                "width": self.width, "channels": self.channels}


Transform = Union[Prefix, Downsample]


def transform_from_dict(d: dict) -> Transform:
    if d["kind"] == "prefix":
        return Prefix(int(d["param"]))
    if d["kind"] == "downsample":
        return Downsample(int(d["param"]), int(d["width"]), int(d.get("channels", 1)))
    raise ValueError(f"unknown transform kind {d['kind']!r}")


@dataclass(frozen=True)
class Critic:
    transform: Transform
    params: MlpParams

    def __call__(self, x: ad.Node, leaves=None) -> ad.Node:
        return mlp_forward(self.params, self.transform.apply(x), leaves)


@dataclass(frozen=True)
class CriticBank:
    critics: tuple[Critic, ...]

    def __post_init__(self):
        if not self.critics:
            raise ValueError("a critic bank needs at least one critic")
        kinds = {c.transform.kind for c in self.critics}
        if len(kinds) != 1:
            raise ValueError("mixed transform kinds in one bank")
        if kinds == {"prefix"}:
            lengths = [c.transform.length for c in self.critics]
            if any(a >= b for a, b in zip(lengths, lengths[1:])):
                raise ValueError(f"prefix lengths must strictly increase, got {lengths}")
        else:
            factors = [c.transform.factor for c in self.critics]
            if any(a <= b for a, b in zip(factors, factors[1:])):
                raise ValueError(f"downsample factors must strictly decrease, got {factors}")
        for c in self.critics:
            if c.params.spec.input_dim != c.transform.input_dim():
                raise ValueError(
                    f"critic input_dim {c.params.spec.input_dim} != transformed size "
                    f"{c.transform.input_dim()}"
                )

    def __len__(self) -> int:
        return len(self.critics)

    def __getitem__(self, i: int) -> Critic:
        return self.critics[i]

    def with_params(self, i: int, params: MlpParams) -> CriticBank:
        critics = list(self.critics)
        critics[i] = replace(critics[i], params=params)
        return CriticBank(tuple(critics))


def _critic_spec(input_dim: int, hidden: Sequence[int] | int) -> MlpSpec:
    hidden = (hidden,) if isinstance(hidden, int) else tuple(hidden)
    return MlpSpec(input_dim, hidden, 1, "leaky_relu")


def build_seq_bank(T: int, stage_lengths: Sequence[int], hidden=128, seed: int = 0) -> CriticBank:
    lengths = [int(n) for n in stage_lengths]
    if not lengths or lengths[0] < 1 or lengths[-1] > T:
        raise ValueError(f"stage lengths {lengths} must lie in [1, {T}]")
    if any(a >= b for a, b in zip(lengths, lengths[1:])):
        raise ValueError(f"stage lengths must strictly increase, got {lengths}")
    critics = tuple(
        Critic(Prefix(n), init_mlp(_critic_spec(n, hidden), derive_seed(seed, i)))
        for i, n in enumerate(lengths)
    )
    return CriticBank(critics)


def build_image_bank(W: int, factors: Sequence[int], hidden=128, seed: int = 0,
                     channels: int = 1) -> CriticBank:
    factors = [int(k) for k in factors]
    if not factors or any(k < 1 or W % k for k in factors):
        raise ValueError(f"every factor in {factors} must divide image width {W}")
    if any(a <= b for a, b in zip(factors, factors[1:])):
        raise ValueError(f"downsample factors must strictly decrease, got {factors}")
    critics = []
    for i, k in enumerate(factors):
        t = Downsample(k, W, channels)
        critics.append(Critic(t, init_mlp(_critic_spec(t.input_dim(), hidden), derive_seed(seed, i))))
    return CriticBank(tuple(critics))


def reinit_stage(bank: CriticBank, stage_index: int, seed: int) -> CriticBank:
    if not 0 <= stage_index < len(bank):
        raise IndexError(f"stage {stage_index} out of range for a bank of {len(bank)}")
    spec = bank[stage_index].params.spec
    return bank.with_params(stage_index, init_mlp(spec, seed))
