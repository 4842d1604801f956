"""MLP players, Xavier init, Adam, and a text checkpoint format."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from wganc import autodiff as ad

ACTIVATIONS = ("leaky_relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    activation: str = "leaky_relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = self.dims
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer widths must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)


@dataclass(frozen=True)
class MlpParams:
    """Weights shaped (out, in), biases shaped (out,), one pair per layer."""

    spec: MlpSpec
    seed: int
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = self.spec.dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count does not match spec")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[k + 1], dims[k]) or b.shape != (dims[k + 1],):
                raise ValueError(
                    f"layer {k}: weight {w.shape} / bias {b.shape} do not chain as {dims}"
                )

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> MlpParams:
        tensors = list(tensors)
        return replace(self, weights=tuple(tensors[0::2]), biases=tuple(tensors[1::2]))


def init_mlp(spec: MlpSpec, seed: int) -> MlpParams:
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.dims[:-1], spec.dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(spec, int(seed), tuple(weights), tuple(biases))


def attach(params: MlpParams, graph: ad.Graph, trainable: bool = True) -> list[ad.Node]:
    """Register params as leaves; returns [W1, b1, W2, b2, ...] nodes."""
    make = graph.param if trainable else graph.const
    return [make(t) for t in params.tensors()]


def mlp_forward(params: MlpParams, x: ad.Node, leaves: Sequence[ad.Node] | None = None) -> ad.Node:
    """Affine -> activation for each hidden layer, affine output.

    Without ``leaves`` the params enter the graph as constants.
    """
    spec = params.spec
    if x.value.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ad.ShapeError("mlp_forward", [x.shape, (None, spec.input_dim)])
    if leaves is None:
        leaves = attach(params, x.graph, trainable=False)
    h = x
    n_layers = len(params.weights)
    for k in range(n_layers):
        h = ad.affine(h, leaves[2 * k], leaves[2 * k + 1])
        if k < n_layers - 1:
            h = ad.leaky_relu(h) if spec.activation == "leaky_relu" else ad.tanh(h)
    return h


def mlp_apply(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Forward pass on plain arrays (throwaway graph)."""
    g = ad.Graph()
    return mlp_forward(params, g.const(x)).value


# --- Adam --------------------------------------------------------------------

@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8


@dataclass(frozen=True)
class AdamState:
    config: AdamConfig
    t: int = 0
    m: tuple[np.ndarray, ...] = field(default=())
    v: tuple[np.ndarray, ...] = field(default=())


def adam_init(params: MlpParams, config: AdamConfig) -> AdamState:
    zeros = tuple(np.zeros_like(p) for p in params.tensors())
    return AdamState(config, 0, zeros, zeros)


def adam_step(state: AdamState, params: MlpParams, grads: Sequence[np.ndarray]
              ) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam descent step; returns new (params, state)."""
    tensors = params.tensors()
    if len(grads) != len(tensors):
        raise ValueError(f"expected {len(tensors)} gradients, got {len(grads)}")
    cfg = state.config
    t = state.t + 1
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(tensors, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ad.ShapeError("adam_step", [p.shape, g.shape])
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p.append(p - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps))
        new_m.append(m)
        new_v.append(v)
    return params.with_tensors(new_p), AdamState(cfg, t, tuple(new_m), tuple(new_v))


# --- checkpoints ----------------------------------------------------------------
#
# Text format, one record per network:
#   line 1: JSON header {"name", "spec", "seed", "transform", "shapes"}
#   then one line per tensor (W1, b1, W2, b2, ...): row-major values as float.hex()
# A file starts with the magic line below.  float.hex round-trips bit-exactly.

CHECKPOINT_MAGIC = "# wganc-checkpoint v1"


def _spec_to_dict(spec: MlpSpec) -> dict:
    d = asdict(spec)
    d["hidden_dims"] = list(spec.hidden_dims)
    return d


def save_checkpoint(path: str | Path, networks: Sequence[tuple[str, MlpParams, dict | None]]) -> None:
    """Write ``(name, params, transform)`` records atomically."""
    path = Path(path)
    lines = [CHECKPOINT_MAGIC]
    for name, params, transform in networks:
        tensors = params.tensors()
        header = {
            "name": name,
            "spec": _spec_to_dict(params.spec),
            "seed": params.seed,
            "transform": transform,
            "shapes": [list(t.shape) for t in tensors],
        }
        lines.append(json.dumps(header, sort_keys=True))
        for t in tensors:
            lines.append(" ".join(float(v).hex() for v in t.ravel()))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> list[tuple[str, MlpParams, dict | None]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    out, i = [], 1
    while i < len(lines):
        header = json.loads(lines[i])
        i += 1
        tensors = []
        for shape in header["shapes"]:
            values = [float.fromhex(tok) for tok in lines[i].split()]
            tensors.append(np.array(values, dtype=np.float64).reshape(shape))
            i += 1
        spec = MlpSpec(**header["spec"])
        params = MlpParams(spec, header["seed"], tuple(tensors[0::2]), tuple(tensors[1::2]))
        out.append((header["name"], params, header["transform"]))
    return out
