"""Exact logistic-map dynamics and ground-truth Lyapunov exponents.

Two discrete maps are supported:

* 1D: ``x -> mu * x * (1 - x)`` with ``0 <= mu <= 4``.
* 2D coupled: ``x -> 4*mu*x*(1-x) + beta*x'`` and symmetrically for ``x'``,
  with ``0 < mu <= 0.9``, ``beta >= 0`` and ``mu + beta <= 1`` so states
  stay inside the unit interval.

Lyapunov exponents come from averaging log derivatives along the orbit
(1D) or from the propagated-QR method on per-step Jacobians (2D).  The
accumulator is shared with model-based Lyapunov estimation so the oracle
model reproduces the ground truth exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

LOGISTIC_1D = "logistic1d"
LOGISTIC_2D = "logistic2d"

DEFAULT_LE_STEPS = 264
DEFAULT_BURN_IN = 200

# Floor for |derivative| before taking logs; a superstable orbit drives the
# exponent to a very negative value instead of -inf.
DERIVATIVE_FLOOR = 1e-300


@dataclass(frozen=True)
class MapSpec:
    """Which map to simulate and at which hyper-parameters."""

    kind: str
    mu: float
    beta: float = 0.0

    def __post_init__(self):
        if self.kind == LOGISTIC_1D:
            if not 0.0 <= self.mu <= 4.0:
                raise DomainError(f"1D logistic map requires 0 <= mu <= 4, got {self.mu}")
        elif self.kind == LOGISTIC_2D:
            if not 0.0 < self.mu <= 0.9:
                raise DomainError(f"2D logistic map requires 0 < mu <= 0.9, got {self.mu}")
            if self.beta < 0.0 or self.mu + self.beta > 1.0:
                raise DomainError(
                    f"2D logistic map requires beta >= 0 and mu + beta <= 1, "
                    f"got mu={self.mu}, beta={self.beta}"
                )
        else:
            raise DomainError(f"unknown map kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return 1 if self.kind == LOGISTIC_1D else 2

    @staticmethod
    def logistic1d(mu: float) -> "MapSpec":
        return MapSpec(LOGISTIC_1D, float(mu))

    @staticmethod
    def logistic2d(mu: float, beta: float = 0.1) -> "MapSpec":
        return MapSpec(LOGISTIC_2D, float(mu), float(beta))


@dataclass
class Trajectory:
    """Orbit of the exact map; ``states[t+1] == step(spec, states[t])``."""

    states: np.ndarray  # (steps+1,) for 1D, (steps+1, 2) for 2D
    mu: float


@dataclass
class LyapunovSpectrum:
    exponents: np.ndarray  # (dim,), sorted descending for 2D
    steps: int
    burn_in: int


def _check_state(spec: MapSpec, state: np.ndarray):
    if spec.dim == 2 and (state.ndim == 0 or state.shape[-1] != 2):
        raise DomainError(f"2D map state needs a trailing axis of size 2, got shape {state.shape}")
    if np.any(state < 0.0) or np.any(state > 1.0):
        raise DomainError("state outside [0, 1]")


def step(spec: MapSpec, state) -> np.ndarray:
    """One application of the map.

    1D states are plain scalars/arrays of scalars; 2D states carry a
    trailing axis of size 2.  Both components of the 2D map are evaluated
    from the same input state.
    """
    state = np.asarray(state, dtype=np.float64)
    _check_state(spec, state)
    if spec.dim == 1:
        return spec.mu * state * (1.0 - state)
    x, xp = state[..., 0], state[..., 1]
    out = np.empty_like(state)
    out[..., 0] = 4.0 * spec.mu * x * (1.0 - x) + spec.beta * xp
    out[..., 1] = 4.0 * spec.mu * xp * (1.0 - xp) + spec.beta * x
    return out


def jacobian(spec: MapSpec, state) -> np.ndarray:
    """Derivative of the map at ``state``.

    Returns a scalar (array) for 1D, and a (..., 2, 2) matrix for 2D with
    rows indexing outputs and columns inputs.
    """
    state = np.asarray(state, dtype=np.float64)
    _check_state(spec, state)
    if spec.dim == 1:
        return spec.mu * (1.0 - 2.0 * state)
    x, xp = state[..., 0], state[..., 1]
    jac = np.empty(state.shape[:-1] + (2, 2), dtype=np.float64)
    jac[..., 0, 0] = 4.0 * spec.mu * (1.0 - 2.0 * x)
    jac[..., 0, 1] = spec.beta
    jac[..., 1, 0] = spec.beta
    jac[..., 1, 1] = 4.0 * spec.mu * (1.0 - 2.0 * xp)
    return jac


def trajectory(spec: MapSpec, x0, steps: int) -> Trajectory:
    """Iterate the map ``steps`` times starting from ``x0``."""
    if steps < 1:
        raise DomainError("steps must be >= 1")
    x0 = np.asarray(x0, dtype=np.float64)
    shape = (steps + 1,) if spec.dim == 1 else (steps + 1, 2)
    states = np.empty(shape, dtype=np.float64)
    states[0] = x0
    for t in range(steps):
        states[t + 1] = step(spec, states[t])
    if np.any(states < 0.0) or np.any(states > 1.0):
        raise DomainError("trajectory left [0, 1]; mu/beta outside the stable range?")
    return Trajectory(states=states, mu=spec.mu)


class LyapunovAccumulator:
    """Running Lyapunov sums over a stream of per-step derivatives.

    1D: accumulates ``ln|f'(x_t)|``.  2D: propagates an orthogonal frame Q,
    QR-factors ``J_t @ Q`` with a positive R diagonal each step, and
    accumulates ``ln R_kk``.  Works on any batch shape; the 2D Jacobians
    must have shape ``batch + (2, 2)``.
    """

    def __init__(self, dim: int, batch_shape=()):
        self.dim = dim
        self.batch_shape = tuple(batch_shape)
        if dim == 1:
            self.log_sum = np.zeros(self.batch_shape)
        else:
            self.log_sum = np.zeros(self.batch_shape + (2,))
            self.q = np.zeros(self.batch_shape + (2, 2))
            self.q[...] = np.eye(2)
        self.count = 0

    def update(self, deriv):
        deriv = np.asarray(deriv, dtype=np.float64)
        if self.dim == 1:
            self.log_sum += np.log(np.maximum(np.abs(deriv), DERIVATIVE_FLOOR))
        else:
            a = deriv @ self.q
            q, rdiag = _qr_2x2(a)
            self.q = q
            self.log_sum += np.log(np.maximum(rdiag, DERIVATIVE_FLOOR))
        self.count += 1

    def exponents(self) -> np.ndarray:
        """Averaged exponents; 2D spectra sorted descending per batch entry."""
        if self.count == 0:
            raise ValueError("no derivative updates accumulated")
        lam = self.log_sum / self.count
        if self.dim == 2:
            lam = np.sort(lam, axis=-1)[..., ::-1]
        return lam


def _qr_2x2(a: np.ndarray):
    """Batched Gram-Schmidt QR of (..., 2, 2) with non-negative R diagonal.

    Returns (Q, diag(R)).  Degenerate columns fall back to a valid
    orthogonal frame with a zero R entry, which the caller clamps in logs.
    """
    a1 = a[..., :, 0]
    a2 = a[..., :, 1]
    r11 = np.linalg.norm(a1, axis=-1)
    safe1 = np.maximum(r11, DERIVATIVE_FLOOR)[..., None]
    q1 = np.where(r11[..., None] > 0.0, a1 / safe1, np.array([1.0, 0.0]))
    r12 = np.sum(q1 * a2, axis=-1)
    u = a2 - r12[..., None] * q1
    r22 = np.linalg.norm(u, axis=-1)
    safe2 = np.maximum(r22, DERIVATIVE_FLOOR)[..., None]
    # perpendicular of q1 as the fallback second column
    perp = np.stack([-q1[..., 1], q1[..., 0]], axis=-1)
    q2 = np.where(r22[..., None] > 0.0, u / safe2, perp)
    q = np.stack([q1, q2], axis=-1)
    rdiag = np.stack([r11, r22], axis=-1)
    return q, rdiag


def lyapunov_true(spec: MapSpec, x0, steps: int = DEFAULT_LE_STEPS,
                  burn_in: int = DEFAULT_BURN_IN) -> LyapunovSpectrum:
    """Ground-truth Lyapunov spectrum from the exact map.

    Runs ``burn_in`` transient steps from ``x0``, then accumulates
    derivative logs over the next ``steps`` orbit points (the derivative is
    evaluated at each point before stepping).  Deterministic given
    ``(spec, x0, steps, burn_in)``.
    """
    if steps < 1:
        raise DomainError("steps must be >= 1")
    if burn_in < 0:
        raise DomainError("burn_in must be >= 0")
    x = np.asarray(x0, dtype=np.float64)
    _check_state(spec, x)
    for _ in range(burn_in):
        x = step(spec, x)
    acc = LyapunovAccumulator(spec.dim)
    for _ in range(steps):
        acc.update(jacobian(spec, x))
        x = step(spec, x)
    exponents = np.atleast_1d(acc.exponents())
    return LyapunovSpectrum(exponents=exponents, steps=steps, burn_in=burn_in)
