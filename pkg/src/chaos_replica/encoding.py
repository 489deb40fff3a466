"""Trainable pre-processing: scalars to d-vectors, tuned by the map's mu.

Each scalar feature ``a`` first passes through the trigonometric map

    xi_j(a; theta) = sqrt(C(d-1, j-1)) * cos(theta*pi/2 * a)^(d-j)
                                       * sin(theta*pi/2 * a)^(j-1)

which lands on the unit sphere for any real ``a`` and ``theta`` (binomial
identity).  The encoded vector contracts the feature's xi with the
hyper-parameter's xi through a trainable order-3 tensor, so a single model
can follow the dynamics across the whole mu grid.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .utils import ROLE_INIT, stream

DEFAULT_DIM = 3


@dataclass
class EncoderParams:
    """Trainable state of the pre-processing map."""

    theta: float
    tensor: np.ndarray  # (d, d, d)

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=np.float64)
        if self.tensor.ndim != 3 or len(set(self.tensor.shape)) != 1:
            raise ValueError(f"encoder tensor must be (d, d, d), got {self.tensor.shape}")
        if self.d < 2:
            raise ValueError("encoder dimension must be >= 2")
        if not np.all(np.isfinite(self.tensor)):
            raise ValueError("encoder tensor must be finite")

    @property
    def d(self) -> int:
        return self.tensor.shape[0]

    @staticmethod
    def initial(d: int = DEFAULT_DIM, seed: int = 0) -> "EncoderParams":
        # theta=1 maps [0,1] over a quarter period; tensor std 1/d keeps
        # encoded vectors O(1)
        rng = stream(seed, ROLE_INIT, 7)
        return EncoderParams(theta=1.0, tensor=rng.normal(0.0, 1.0 / d, size=(d, d, d)))

    def to_json(self) -> dict:
        return {"theta": float(self.theta), "d": self.d, "tensor": self.tensor.tolist()}

    @staticmethod
    def from_json(obj: dict) -> "EncoderParams":
        return EncoderParams(theta=float(obj["theta"]), tensor=np.array(obj["tensor"]))


def _binomial_roots(d: int) -> np.ndarray:
    return np.sqrt([math.comb(d - 1, j) for j in range(d)])


def feature_map_t(a, theta, d: int) -> ad.Tensor:
    """Tape version of the scalar-to-unit-vector map; adds an axis of size d.

    ``a`` may have any shape; ``theta`` is a scalar.  Powers with exponent
    zero are dropped rather than evaluated so adjoints stay finite at
    cos/sin zeros.
    """
    a = a if isinstance(a, ad.Tensor) else ad.constant(a)
    theta = theta if isinstance(theta, ad.Tensor) else ad.constant(theta)
    ang = ad.mul(ad.mul(theta, math.pi / 2.0), a)
    c, s = ad.cos(ang), ad.sin(ang)
    roots = _binomial_roots(d)
    comps = []
    for j in range(d):  # component j uses c^(d-1-j) * s^j
        term = None
        pc, ps = d - 1 - j, j
        if pc == 1:
            term = c
        elif pc > 1:
            term = ad.power(c, pc)
        if ps >= 1:
            sfac = s if ps == 1 else ad.power(s, ps)
            term = sfac if term is None else ad.mul(term, sfac)
        if term is None:  # d == 1 edge: constant 1
            term = ad.constant(np.ones_like(a.value))
        comps.append(ad.mul(term, roots[j]))
    return ad.stack(comps, axis=-1)


def feature_map(a, theta: float, d: int) -> np.ndarray:
    """Unit vector(s) of length d; output shape is ``a.shape + (d,)``."""
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature_map input must be finite")
    with ad.no_grad():
        return feature_map_t(arr, float(theta), d).value


def encode_batch_t(features, mu, theta, tensor) -> ad.Tensor:
    """Encode (N, F) scalar features with per-sample mu into (N, F, d).

    ``theta``/``tensor`` may be tape parameters; ``features`` may be a
    Tensor when input derivatives are needed.
    """
    tensor_t = tensor if isinstance(tensor, ad.Tensor) else ad.constant(tensor)
    d = tensor_t.value.shape[0]
    xi_x = feature_map_t(features, theta, d)   # (N, F, d)
    xi_mu = feature_map_t(mu, theta, d)        # (N, d)
    return ad.contract("nfi,nj,ijk->nfk", xi_x, xi_mu, tensor_t)


def encode(features, mu, params: EncoderParams) -> np.ndarray:
    """Encode (N, F) scalar features with per-sample mu into (N, F, d).

    Scalars are also accepted and return a single d-vector.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim == 0:
        with ad.no_grad():
            out = encode_batch_t(feats.reshape(1, 1), np.asarray([float(mu)]),
                                 params.theta, params.tensor)
        return out.value[0, 0]
    if feats.ndim != 2:
        raise ValueError(f"features must be scalar or (N, F), got {feats.shape}")
    with ad.no_grad():
        out = encode_batch_t(feats, np.asarray(mu, dtype=np.float64),
                             params.theta, params.tensor)
    return out.value


def encode_sample(features, mu: float, params: EncoderParams) -> np.ndarray:
    """Encode every scalar feature of one sample, preserving feature order.

    Returns (F, d): M vectors for a 1D sample, 2M for an interleaved 2D
    sample.
    """
    feats = np.asarray(features, dtype=np.float64).reshape(1, -1)
    with ad.no_grad():
        out = encode_batch_t(feats, np.array([float(mu)]), params.theta, params.tensor)
    return out.value[0]
