"""Tape-based reverse-mode differentiation over numpy arrays.

A forward pass builds a DAG of :class:`Tensor` nodes; :func:`backward`
replays it in reverse topological order, accumulating adjoints additively.
Everything is real-valued float64.  The op set is exactly what the models
need: elementwise arithmetic, trig, sigmoid/tanh, powers, reductions,
einsum-style contraction, and the SVD-based unitarization used for circuit
gates.  :func:`fd_gradient` provides the independent central-difference
oracle the tests check every adjoint against.
"""

import math
from contextlib import contextmanager

import numpy as np

from .errors import TrainingError

__all__ = [
    "Tensor", "parameter", "constant", "no_grad", "backward", "fd_gradient",
    "sin", "cos", "exp", "log", "sqrt", "square", "sigmoid", "tanh",
    "matmul", "contract", "tsum", "tmean", "reshape", "stack", "unitarize",
    "rmse_loss", "svd_gap_warnings",
]

_GRAD_ENABLED = True

# Singular-value gaps below this are regularized in the unitarize adjoint;
# each occurrence bumps the counter so training can report near-degenerate
# gates.
SVD_GAP_EPS = 1e-10
_svd_gap_warnings = 0


def svd_gap_warnings() -> int:
    return _svd_gap_warnings


def reset_svd_gap_warnings():
    global _svd_gap_warnings
    _svd_gap_warnings = 0


@contextmanager
def no_grad():
    """Disable taping inside the block (forward values only)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """One node of the tape: a value plus how to push adjoints to parents.

    ``vjp(grad_out)`` returns one adjoint array (or None) per parent.
    Custom operations elsewhere in the package build nodes directly with
    this constructor.
    """

    __slots__ = ("value", "parents", "vjp", "grad", "requires_grad", "name")

    def __init__(self, value, parents=(), vjp=None, name=None, requires_grad=None):
        self.value = np.asarray(value, dtype=np.float64)
        taped = _GRAD_ENABLED and (
            requires_grad if not parents else any(p.requires_grad for p in parents)
        )
        self.parents = tuple(parents) if taped else ()
        self.vjp = vjp if taped else None
        self.requires_grad = bool(taped)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def parameter(value, name=None) -> Tensor:
    """Trainable leaf."""
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise ops ------------------------------------------------------

def add(a, b):
    a, b = _lift(a), _lift(b)
    return Tensor(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _lift(a), _lift(b)
    return Tensor(a.value - b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _lift(a), _lift(b)
    return Tensor(a.value * b.value, (a, b),
                  lambda g: (_unbroadcast(g * b.value, a.shape),
                             _unbroadcast(g * a.value, b.shape)))


def div(a, b):
    a, b = _lift(a), _lift(b)
    return Tensor(a.value / b.value, (a, b),
                  lambda g: (_unbroadcast(g / b.value, a.shape),
                             _unbroadcast(-g * a.value / b.value ** 2, b.shape)))


def power(a, p):
    a = _lift(a)
    p = float(p)
    out = np.power(a.value, p)
    return Tensor(out, (a,), lambda g: (g * p * np.power(a.value, p - 1.0),))


def sin(a):
    a = _lift(a)
    return Tensor(np.sin(a.value), (a,), lambda g: (g * np.cos(a.value),))


def cos(a):
    a = _lift(a)
    return Tensor(np.cos(a.value), (a,), lambda g: (-g * np.sin(a.value),))


def exp(a):
    a = _lift(a)
    out = np.exp(a.value)
    return Tensor(out, (a,), lambda g: (g * out,))


def log(a):
    a = _lift(a)
    return Tensor(np.log(a.value), (a,), lambda g: (g / a.value,))


def sqrt(a):
    a = _lift(a)
    out = np.sqrt(a.value)
    # floor keeps the exact-minimum case (0 upstream slope at 0) finite
    return Tensor(out, (a,), lambda g: (g * 0.5 / np.maximum(out, 1e-150),))


def square(a):
    a = _lift(a)
    return Tensor(a.value ** 2, (a,), lambda g: (g * 2.0 * a.value,))


def sigmoid(a):
    a = _lift(a)
    v = a.value
    out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                   np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    a = _lift(a)
    out = np.tanh(a.value)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out ** 2),))


# -- shape / reduction ops ------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = _lift(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return Tensor(out, (a,), vjp)


def tmean(a, axis=None, keepdims=False):
    a = _lift(a)
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape):
    a = _lift(a)
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a, idx):
    a = _lift(a)

    def vjp(g):
        out = np.zeros(a.shape)
        out[idx] += g  # basic indexing only: no repeated destinations
        return (out,)

    return Tensor(a.value[idx], (a,), vjp)


def stack(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    out = np.stack([t.value for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor(out, tuple(tensors), vjp)


def matmul(a, b):
    a, b = _lift(a), _lift(b)

    def vjp(g):
        ga = g @ b.value.T if a.requires_grad else None
        gb = a.value.T @ g if b.requires_grad else None
        return (ga, gb)

    return Tensor(a.value @ b.value, (a, b), vjp)


def contract(subscripts, *tensors):
    """Einsum with adjoints obtained by swapping each operand with the output.

    Every index of every operand must appear in the output or in another
    operand, which holds for all contractions used here and is asserted.
    """
    tensors = [_lift(t) for t in tensors]
    in_spec, out_spec = subscripts.replace(" ", "").split("->")
    specs = in_spec.split(",")
    if len(specs) != len(tensors):
        raise ValueError("operand count mismatch in contract()")
    for i, s in enumerate(specs):
        covered = set(out_spec).union(*(set(o) for j, o in enumerate(specs) if j != i))
        if not set(s) <= covered:
            raise ValueError(f"operand {i} of {subscripts!r} has indices summed "
                             "out on its own; gradient swap would be invalid")
    values = [t.value for t in tensors]
    out = np.einsum(subscripts, *values, optimize=True)

    def vjp(g):
        grads = []
        for i, t in enumerate(tensors):
            if not t.requires_grad:
                grads.append(None)
                continue
            sub = ",".join(specs[:i] + [out_spec] + specs[i + 1:]) + "->" + specs[i]
            ops = values[:i] + [g] + values[i + 1:]
            grads.append(np.einsum(sub, *ops, optimize=True))
        return tuple(grads)

    return Tensor(out, tuple(tensors), vjp)


# -- SVD unitarization ----------------------------------------------------

def unitarize(g):
    """Closest-orthogonal projection ``G -> U @ Vt`` from the SVD of G.

    The adjoint follows the standard SVD differential: with
    ``P = U^T grad V`` and ``A = P - P^T``, the contribution of the U and V
    factors combines to ``U (W * A) V^T`` where
    ``W_ij = (s_j - s_i) / ((s_j - s_i)(s_j + s_i))``.  The gap factor in
    the denominator is regularized to ``sign * SVD_GAP_EPS`` when the
    singular values nearly coincide, and each regularization bumps the
    module warning counter.
    """
    g = _lift(g)
    if g.value.ndim != 2 or g.value.shape[0] != g.value.shape[1]:
        raise ValueError("unitarize expects a square matrix")
    try:
        u, s, vt = np.linalg.svd(g.value)
    except np.linalg.LinAlgError as err:
        raise TrainingError(f"SVD failed during unitarization: {err}") from None
    out = u @ vt

    def vjp(grad_out):
        global _svd_gap_warnings
        p = u.T @ grad_out @ vt.T
        a = p - p.T
        gap = s[None, :] - s[:, None]
        small = np.abs(gap) < SVD_GAP_EPS
        off = ~np.eye(len(s), dtype=bool)
        n_warn = int(np.count_nonzero(small & off)) // 2
        if n_warn:
            _svd_gap_warnings += n_warn
        gap_reg = np.where(small, np.where(gap >= 0, SVD_GAP_EPS, -SVD_GAP_EPS), gap)
        w = gap / (gap_reg * np.maximum(s[None, :] + s[:, None], 1e-300))
        return ((u @ (w * a) @ vt),)

    return Tensor(out, (g,), vjp)


# -- backward pass --------------------------------------------------------

def _topo(root):
    order, seen, stack_ = [], set(), [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            stack_.append((p, False))
    return order


def backward(loss: Tensor) -> dict:
    """Reverse sweep from ``loss``; returns {name: grad} for named leaves.

    Also stores the adjoint on every visited node's ``.grad``.  Non-finite
    adjoints on a named parameter raise :class:`TrainingError` naming it.
    """
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any differentiable tensor")
    if np.ndim(loss.value) != 0:
        raise ValueError(f"loss must be scalar, got shape {np.shape(loss.value)}")
    order = _topo(loss)
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g
        if node.vjp is None:
            continue
        parent_grads = node.vjp(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            pg = _unbroadcast(np.asarray(pg), p.shape)
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    named = {}
    for node in order:
        if node.name is not None and node.grad is not None and not node.parents:
            if not np.all(np.isfinite(node.grad)):
                raise TrainingError(f"non-finite gradient for parameter {node.name!r}")
            named[node.name] = node.grad
    return named


def rmse_loss(pred: Tensor, target) -> Tensor:
    """sqrt(mean((pred - target)^2)) over every scalar component."""
    target = _lift(target)
    return sqrt(tmean(square(sub(pred, target))))


# -- finite-difference oracle ---------------------------------------------

def fd_gradient(func, params: dict, h: float = 1e-6) -> dict:
    """Central-difference gradients of ``func(params) -> float``.

    ``params`` maps names to arrays; every scalar entry is perturbed by
    ±h.  Independent of the tape by construction.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    grads = {}
    for name, value in params.items():
        value = np.asarray(value, dtype=np.float64)
        flat = value.reshape(-1)
        grad = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            bumped = dict(params)
            plus = value.copy().reshape(-1)
            plus[i] = orig + h
            bumped[name] = plus.reshape(value.shape)
            f_plus = float(func(bumped))
            minus = value.copy().reshape(-1)
            minus[i] = orig - h
            bumped[name] = minus.reshape(value.shape)
            f_minus = float(func(bumped))
            grad[i] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = grad.reshape(value.shape)
    return grads
