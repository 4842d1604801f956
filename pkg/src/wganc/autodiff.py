"""Reverse-mode automatic differentiation over float64 numpy arrays.

Values are computed eagerly as nodes are appended to a :class:`Graph`.  Every
gradient rule is itself expressed with graph ops, so a gradient obtained from
:meth:`Graph.grad_as_graph` is an ordinary node that can be differentiated
again.  That is what the gradient penalty needs: the norm of an input
gradient, differentiated with respect to network parameters.

    g = Graph()
    x = g.param([[1.0, 2.0]])
    y = ad.sum(x * x)
    g.backward(y)[x.id]          # -> [[2., 4.]]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Tensor = np.ndarray
GradientMap = dict  # leaf node id -> Tensor

DEFAULT_SLOPE = 0.2
SQRT_EPS = 1e-12
LOG_FLOOR = 1e-12


class ShapeError(ValueError):
    """Operand shapes incompatible for an op."""

    def __init__(self, op: str, shapes: Sequence[tuple]):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {', '.join(map(str, self.shapes))}")


class GradientError(RuntimeError):
    pass


@dataclass(frozen=True)
class OpDef:
    forward: Callable[..., Tensor]
    vjp: Callable[..., list] | None


_OPS: dict[str, OpDef] = {}


def _register(name: str, forward, vjp=None) -> None:
    _OPS[name] = OpDef(forward, vjp)


class Node:
    """One entry of a graph: a leaf (param/const) or the result of an op."""

    __slots__ = ("graph", "id", "op", "inputs", "attrs", "value", "kind", "requires_grad")

    def __init__(self, graph, id, op, inputs, attrs, value, kind, requires_grad):
        self.graph = graph
        self.id = id
        self.op = op
        self.inputs = inputs
        self.attrs = attrs
        self.value = value
        self.kind = kind
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return self.kind != "op"

    def __repr__(self) -> str:
        return f"Node(#{self.id} {self.op} shape={self.shape})"

    def _lift(self, other) -> Node:
        if isinstance(other, Node):
            return other
        return self.graph.const(other)

    def __add__(self, other):
        if np.isscalar(other):
            return add_scalar(self, float(other))
        return add(self, self._lift(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if np.isscalar(other):
            return add_scalar(self, -float(other))
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        if np.isscalar(other):
            return add_scalar(scale(self, -1.0), float(other))
        return sub(self._lift(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / float(other))
        return div(self, self._lift(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, self._lift(other))

    __array_priority__ = 1000  # keep ndarray.__mul__ from swallowing nodes


class Graph:
    """Append-only list of nodes; ids are topologically ordered by construction."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, op, inputs, attrs, value, kind, requires_grad) -> Node:
        node = Node(self, len(self.nodes), op, inputs, attrs, value, kind, requires_grad)
        self.nodes.append(node)
        return node

    def param(self, value) -> Node:
        """Differentiable leaf."""
        return self._append("param", (), None, _as_tensor(value), "param", True)

    def const(self, value) -> Node:
        return self._append("const", (), None, _as_tensor(value), "const", False)

    def apply(self, op: str, inputs: Sequence[Node], **attrs) -> Node:
        for n in inputs:
            if n.graph is not self:
                raise ValueError(f"{op}: operand #{n.id} belongs to another graph")
        try:
            value = _OPS[op].forward(*[n.value for n in inputs], **attrs)
        except ValueError as exc:
            raise ShapeError(op, [n.shape for n in inputs]) from exc
        requires_grad = any(n.requires_grad for n in inputs)
        return self._append(op, tuple(n.id for n in inputs), attrs, value, "op", requires_grad)

    def forward(self, node: Node | int) -> Tensor:
        return self.nodes[_id(node)].value

    def _gradient_nodes(self, root: Node, targets: set[int]) -> dict[int, Node]:
        root_id = _id(root)
        if self.nodes[root_id].value.size != 1:
            raise GradientError(
                f"gradient root must be scalar, got shape {self.nodes[root_id].shape}"
            )
        # which nodes lie on a path from a target leaf
        depends = [False] * (root_id + 1)
        for i in range(root_id + 1):
            n = self.nodes[i]
            if i in targets:
                depends[i] = True
            elif n.kind == "op":
                depends[i] = any(depends[j] for j in n.inputs)

        grads: dict[int, Node] = {root_id: self.const(np.ones_like(self.nodes[root_id].value))}
        if not depends[root_id]:
            return {}
        for i in range(root_id, -1, -1):
            if i not in grads or not depends[i]:
                continue
            node = self.nodes[i]
            if node.kind != "op":
                continue
            rule = _OPS[node.op].vjp
            if rule is None:
                raise GradientError(f"op '{node.op}' has no differentiable gradient rule")
            needs = tuple(depends[j] for j in node.inputs)
            parts = rule(node, grads[i], needs, *[self.nodes[j] for j in node.inputs])
            for j, part, need in zip(node.inputs, parts, needs):
                if not need or part is None:
                    continue
                grads[j] = add(grads[j], part) if j in grads else part
        return {i: g for i, g in grads.items() if i in targets}

    def backward(self, root: Node | int, wrt: Sequence[Node] | None = None) -> GradientMap:
        """Gradients of a scalar node, keyed by leaf id.

        Without ``wrt`` every param leaf upstream of the root gets an entry;
        leaves listed in ``wrt`` that the root does not depend on get zeros.
        """
        root_id = _id(root)
        if wrt is None:
            targets = {n.id for n in self.nodes[: root_id + 1] if n.kind == "param"}
        else:
            targets = {_id(n) for n in wrt}
        nodes = self._gradient_nodes(self.nodes[root_id], targets)
        out = {i: g.value for i, g in nodes.items()}
        if wrt is not None:
            for i in targets:
                out.setdefault(i, np.zeros_like(self.nodes[i].value))
        elif root_id in targets:
            out.setdefault(root_id, np.ones_like(self.nodes[root_id].value))
        return out

    def grad_as_graph(self, root: Node | int, wrt_leaf: Node) -> Node:
        """Gradient of ``root`` w.r.t. ``wrt_leaf`` as a differentiable node."""
        if not wrt_leaf.is_leaf:
            raise GradientError(f"grad_as_graph needs a leaf, got op '{wrt_leaf.op}'")
        nodes = self._gradient_nodes(self.nodes[_id(root)], {wrt_leaf.id})
        if wrt_leaf.id in nodes:
            return nodes[wrt_leaf.id]
        return self.const(np.zeros_like(wrt_leaf.value))


def _id(node: Node | int) -> int:
    return node.id if isinstance(node, Node) else int(node)


def _as_tensor(value) -> Tensor:
    arr = np.array(value, dtype=np.float64)
    return arr


def _sum_to_shape(x: Tensor, shape: tuple) -> Tensor:
    """Reduce a broadcast result back to ``shape``."""
    if x.shape == tuple(shape):
        return x
    lead = x.ndim - len(shape)
    if lead < 0:
        raise ValueError("target has more dims than source")
    axes = list(range(lead))
    axes += [lead + i for i, s in enumerate(shape) if s == 1 and x.shape[lead + i] != 1]
    out = x.sum(axis=tuple(axes), keepdims=True) if axes else x
    return out.reshape(shape)


def _unbroadcast(g: Node, shape: tuple) -> Node:
    return g if g.shape == tuple(shape) else sum_to(g, shape)


# --- elementwise arithmetic -------------------------------------------------

def _add_vjp(node, g, needs, a, b):
    return [_unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(g, b.shape) if needs[1] else None]


def _sub_vjp(node, g, needs, a, b):
    return [_unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(scale(g, -1.0), b.shape) if needs[1] else None]


def _mul_vjp(node, g, needs, a, b):
    return [_unbroadcast(mul(g, b), a.shape) if needs[0] else None,
            _unbroadcast(mul(g, a), b.shape) if needs[1] else None]


def _div_vjp(node, g, needs, a, b):
    ga = div(g, b) if needs[0] else None
    gb = None
    if needs[1]:
        gb = _unbroadcast(scale(div(mul(g, node), b), -1.0), b.shape)
    return [_unbroadcast(ga, a.shape) if ga is not None else None, gb]


_register("add", np.add, _add_vjp)
_register("sub", np.subtract, _sub_vjp)
_register("mul", np.multiply, _mul_vjp)
_register("div", np.divide, _div_vjp)
_register("scale", lambda a, c: a * c, lambda node, g, needs, a: [scale(g, node.attrs["c"])])
_register("add_scalar", lambda a, c: a + c, lambda node, g, needs, a: [g])


def add(a: Node, b: Node) -> Node:
    return a.graph.apply("add", (a, b))


def sub(a: Node, b: Node) -> Node:
    return a.graph.apply("sub", (a, b))


def mul(a: Node, b: Node) -> Node:
    return a.graph.apply("mul", (a, b))


def div(a: Node, b: Node) -> Node:
    return a.graph.apply("div", (a, b))


def scale(a: Node, c: float) -> Node:
    return a.graph.apply("scale", (a,), c=float(c))


def add_scalar(a: Node, c: float) -> Node:
    return a.graph.apply("add_scalar", (a,), c=float(c))


# --- linear algebra ---------------------------------------------------------

def _matmul_fwd(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError
    return a @ b


def _matmul_vjp(node, g, needs, a, b):
    return [matmul(g, transpose(b)) if needs[0] else None,
            matmul(transpose(a), g) if needs[1] else None]


def _affine_fwd(x, w, b):
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1 or x.shape[1] != w.shape[1] \
            or w.shape[0] != b.shape[0]:
        raise ValueError
    return x @ w.T + b


def _affine_vjp(node, g, needs, x, w, b):
    return [matmul(g, w) if needs[0] else None,
            matmul(transpose(g), x) if needs[1] else None,
            sum(g, axis=0) if needs[2] else None]


_register("matmul", _matmul_fwd, _matmul_vjp)
_register("transpose", lambda a: a.T, lambda node, g, needs, a: [transpose(g)])
_register("affine", _affine_fwd, _affine_vjp)


def matmul(a: Node, b: Node) -> Node:
    return a.graph.apply("matmul", (a, b))


def transpose(a: Node) -> Node:
    return a.graph.apply("transpose", (a,))


def affine(x: Node, weight: Node, bias: Node) -> Node:
    """``x @ weight.T + bias`` with weight shaped (out, in)."""
    return x.graph.apply("affine", (x, weight, bias))


# --- nonlinearities ---------------------------------------------------------

def _leaky_vjp(node, g, needs, x):
    slope = node.attrs["slope"]
    mask = np.where(x.value > 0, 1.0, slope)
    return [mul(g, node.graph.const(mask))]


def _tanh_vjp(node, g, needs, x):
    return [mul(g, add_scalar(scale(square(node), -1.0), 1.0))]


def _sigmoid_vjp(node, g, needs, x):
    return [mul(g, mul(node, add_scalar(scale(node, -1.0), 1.0)))]


def _sigmoid_fwd(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _square_vjp(node, g, needs, x):
    return [mul(g, scale(x, 2.0))]


def _sqrt_vjp(node, g, needs, x):
    return [div(scale(g, 0.5), node)]


def _log_vjp(node, g, needs, x):
    floor = node.attrs["floor"]
    mask = node.graph.const((x.value > floor).astype(np.float64))
    return [mul(div(g, maximum(x, floor)), mask)]


def _maximum_vjp(node, g, needs, x):
    mask = (x.value > node.attrs["c"]).astype(np.float64)
    return [mul(g, node.graph.const(mask))]


_register("leaky_relu", lambda x, slope: np.where(x > 0, x, slope * x), _leaky_vjp)
_register("tanh", np.tanh, _tanh_vjp)
_register("sigmoid", _sigmoid_fwd, _sigmoid_vjp)
_register("square", np.square, _square_vjp)
_register("sqrt", lambda x, eps: np.sqrt(x + eps), _sqrt_vjp)
_register("log", lambda x, floor: np.log(np.maximum(x, floor)), _log_vjp)
_register("maximum", lambda x, c: np.maximum(x, c), _maximum_vjp)


def leaky_relu(x: Node, slope: float = DEFAULT_SLOPE) -> Node:
    return x.graph.apply("leaky_relu", (x,), slope=float(slope))


def tanh(x: Node) -> Node:
    return x.graph.apply("tanh", (x,))


def sigmoid(x: Node) -> Node:
    return x.graph.apply("sigmoid", (x,))


def square(x: Node) -> Node:
    return x.graph.apply("square", (x,))


def sqrt(x: Node, eps: float = SQRT_EPS) -> Node:
    """``sqrt(x + eps)``; the offset keeps the derivative finite at 0."""
    return x.graph.apply("sqrt", (x,), eps=float(eps))


def log(x: Node, floor: float = LOG_FLOOR) -> Node:
    """``log(max(x, floor))``."""
    return x.graph.apply("log", (x,), floor=float(floor))


def maximum(x: Node, c: float) -> Node:
    """Elementwise max against a constant; derivative 0 where ``x <= c``."""
    return x.graph.apply("maximum", (x,), c=float(c))


# --- reductions and shape ops -------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _sum_fwd(x, axis, keepdims):
    return np.sum(x, axis=axis, keepdims=keepdims)


def _sum_vjp(node, g, needs, x):
    axes = _norm_axis(node.attrs["axis"], x.value.ndim)
    kept = tuple(1 if i in axes else s for i, s in enumerate(x.shape))
    if g.shape != kept:
        g = reshape(g, kept)
    return [broadcast_to(g, x.shape)]


def _broadcast_fwd(x, shape):
    return np.broadcast_to(x, shape).copy()


_register("sum", _sum_fwd, _sum_vjp)
_register("reshape", lambda x, shape: x.reshape(shape),
          lambda node, g, needs, x: [reshape(g, x.shape)])
_register("broadcast_to", _broadcast_fwd, lambda node, g, needs, x: [sum_to(g, x.shape)])
_register("sum_to", lambda x, shape: _sum_to_shape(x, shape),
          lambda node, g, needs, x: [broadcast_to(g, x.shape)])


def sum(x: Node, axis=None, keepdims: bool = False) -> Node:  # noqa: A001
    if isinstance(axis, list):
        axis = tuple(axis)
    return x.graph.apply("sum", (x,), axis=axis, keepdims=keepdims)


def mean(x: Node, axis=None, keepdims: bool = False) -> Node:
    axes = _norm_axis(axis, x.value.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Node, shape) -> Node:
    return x.graph.apply("reshape", (x,), shape=tuple(shape))


def broadcast_to(x: Node, shape) -> Node:
    return x.graph.apply("broadcast_to", (x,), shape=tuple(shape))


def sum_to(x: Node, shape) -> Node:
    return x.graph.apply("sum_to", (x,), shape=tuple(shape))


# --- feature-axis slicing -------------------------------------------------------

def _slice_fwd(x, start, stop):
    if x.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise ValueError
    return x[:, start:stop].copy()


def _slice_vjp(node, g, needs, x):
    start, stop = node.attrs["start"], node.attrs["stop"]
    return [pad_cols(g, start, x.shape[1] - stop)]


def _pad_fwd(x, before, after):
    return np.pad(x, ((0, 0), (before, after)))


def _pad_vjp(node, g, needs, x):
    before = node.attrs["before"]
    return [slice_cols(g, before, before + x.shape[1])]


def _concat_vjp(node, g, needs, *xs):
    out, start = [], 0
    for x, need in zip(xs, needs):
        stop = start + x.shape[1]
        out.append(slice_cols(g, start, stop) if need else None)
        start = stop
    return out


_register("slice_cols", _slice_fwd, _slice_vjp)
_register("pad_cols", _pad_fwd, _pad_vjp)
_register("concat_cols", lambda *xs: np.concatenate(xs, axis=1), _concat_vjp)


def slice_cols(x: Node, start: int, stop: int) -> Node:
    return x.graph.apply("slice_cols", (x,), start=int(start), stop=int(stop))


def pad_cols(x: Node, before: int, after: int) -> Node:
    return x.graph.apply("pad_cols", (x,), before=int(before), after=int(after))


def concat_cols(xs: Sequence[Node]) -> Node:
    return xs[0].graph.apply("concat_cols", tuple(xs))


# --- composites -------------------------------------------------------------------

def row_norm(x: Node, eps: float = SQRT_EPS) -> Node:
    """Per-sample L2 norm over the feature axes -> shape (batch, 1)."""
    if x.value.ndim != 2:
        x = reshape(x, (x.shape[0], -1))
    return sqrt(sum(square(x), axis=1, keepdims=True), eps)
