"""Simulated brick-wall quantum circuit with SVD-unitarized latent gates.

The model embeds encoded feature vectors as a product state of ``n_sites``
d-level sites, applies alternating layers of two-site orthogonal gates
(each the U V^T polar factor of an unconstrained latent matrix), and reads
the prediction off as the probability of the target site(s) sitting in
level 0.  States are dense order-n tensors, flattened to (batch, d^n);
gate application picks a contraction strategy per site position (trailing
gemm, stacked matmul, or a kron-expanded gemm) which is what keeps
single-core training tractable.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .encoding import EncoderParams, encode_batch_t
from .errors import EmbeddingError
from .utils import ROLE_INIT, stream

GATE_INIT_NOISE = 0.01
MIN_SITE_NORM = 1e-12


@dataclass(frozen=True)
class CircuitLayout:
    """Brick-wall gate placement, fully determined by (n_sites, n_layers)."""

    n_sites: int
    d: int = 3
    n_layers: int = 4

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("layout needs at least two sites")
        if self.d < 2 or self.n_layers < 1:
            raise ValueError("invalid layout dimensions")

    def gate_positions(self):
        """Left site index of every gate, in application order.

        Even layers pair (0,1),(2,3),...; odd layers pair (1,2),(3,4),...
        (0-based layers).
        """
        pos = []
        for layer in range(self.n_layers):
            start = layer % 2
            pos.extend(range(start, self.n_sites - 1, 2))
        return pos

    @property
    def n_gates(self) -> int:
        return len(self.gate_positions())

    @property
    def state_size(self) -> int:
        return self.d ** self.n_sites


def init_latent_gates(layout: CircuitLayout, seed: int = 0) -> np.ndarray:
    """Near-identity latent gates, (n_gates, d^2, d^2)."""
    d2 = layout.d ** 2
    rng = stream(seed, ROLE_INIT, 11)
    gates = np.tile(np.eye(d2), (layout.n_gates, 1, 1))
    gates += GATE_INIT_NOISE * rng.normal(size=gates.shape)
    return gates


def unitarize(latent: np.ndarray) -> np.ndarray:
    """Closest orthogonal matrix U V^T to a latent gate (no tape)."""
    with ad.no_grad():
        return ad.unitarize(np.asarray(latent, dtype=np.float64)).value


# -- gate application -----------------------------------------------------

def _apply_gate_numpy(x: np.ndarray, gate: np.ndarray, b: int, d2: int) -> np.ndarray:
    """Contract an orthogonal gate into the pair axes of (N, d^n).

    ``b`` is the trailing block size d^(n-k-2) for a gate at site k.  The
    three branches were benchmarked on this state size; see module docs.
    """
    shape = x.shape
    if b == 1:
        return (x.reshape(-1, d2) @ gate.T).reshape(shape)
    if b >= d2:
        return np.matmul(gate, x.reshape(-1, d2, b)).reshape(shape)
    k = np.kron(gate, np.eye(b))
    return (x.reshape(-1, d2 * b) @ k.T).reshape(shape)


def _gate_grad_numpy(gy: np.ndarray, x: np.ndarray, b: int, d2: int) -> np.ndarray:
    """Adjoint w.r.t. the gate: dG[p,q] = sum_{m,b} gy[m,p,b] x[m,q,b]."""
    if b == 1:
        return gy.reshape(-1, d2).T @ x.reshape(-1, d2)
    if b >= d2:
        y3 = gy.reshape(-1, d2, b)
        x3 = x.reshape(-1, d2, b)
        return np.matmul(y3, x3.swapaxes(1, 2)).sum(axis=0)
    t = gy.reshape(-1, d2 * b).T @ x.reshape(-1, d2 * b)
    return np.einsum("pbqb->pq", t.reshape(d2, b, d2, b))


def apply_pair_gate_t(state: ad.Tensor, gate: ad.Tensor, site: int,
                      layout: CircuitLayout) -> ad.Tensor:
    """One two-site gate on (site, site+1) of a flattened (N, d^n) state."""
    d, n = layout.d, layout.n_sites
    if not 0 <= site <= n - 2:
        raise ValueError(f"gate site {site} out of range for {n} sites")
    d2 = d * d
    b = d ** (n - site - 2)
    out = _apply_gate_numpy(state.value, gate.value, b, d2)

    def vjp(g):
        gs = _apply_gate_numpy(g, gate.value.T, b, d2) if state.requires_grad else None
        gg = _gate_grad_numpy(g, state.value, b, d2) if gate.requires_grad else None
        return (gs, gg)

    return ad.Tensor(out, (state, gate), vjp)


def apply_circuit_t(state: ad.Tensor, gates, layout: CircuitLayout) -> ad.Tensor:
    """All layers in order; ``gates`` is a sequence of unitarized Tensors."""
    positions = layout.gate_positions()
    if len(gates) != len(positions):
        raise ValueError(f"expected {len(positions)} gates, got {len(gates)}")
    for gate, site in zip(gates, positions):
        state = apply_pair_gate_t(state, gate, site, layout)
    return state


# -- embedding and readout ------------------------------------------------

def embed_t(site_vectors: ad.Tensor) -> ad.Tensor:
    """Product state from per-site vectors (N, n_sites, d) -> (N, d^n).

    Site vectors are normalized first, so the embedded state has unit norm
    regardless of encoder scaling.
    """
    vals = site_vectors.value
    n, n_sites, d = vals.shape
    norms = np.linalg.norm(vals, axis=-1)
    if np.any(norms < MIN_SITE_NORM):
        raise EmbeddingError("site vector with ~zero norm; encoder output degenerate")
    nrm = ad.sqrt(ad.tsum(ad.square(site_vectors), axis=-1, keepdims=True))
    unit = ad.div(site_vectors, nrm)
    state = unit[:, 0, :]
    for t in range(1, n_sites):
        state = ad.contract("np,ns->nps", state, unit[:, t, :])
        state = ad.reshape(state, (n, -1))
    return state


def embed(site_vectors) -> np.ndarray:
    """Plain-array wrapper around :func:`embed_t`; accepts one sample or a batch."""
    arr = np.asarray(site_vectors, dtype=np.float64)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    with ad.no_grad():
        out = embed_t(ad.constant(arr)).value
    return out[0] if single else out


def readout_t(state: ad.Tensor, layout: CircuitLayout, n_outputs: int) -> ad.Tensor:
    """Probability of target sites in level 0: (N,) for one output, (N, 2)
    for (penultimate, last)."""
    n = state.value.shape[0]
    d = layout.d
    den = ad.tsum(ad.square(state), axis=1)
    last = ad.reshape(state, (n, -1, d))[:, :, 0]
    p_last = ad.div(ad.tsum(ad.square(last), axis=1), den)
    if n_outputs == 1:
        return p_last
    if n_outputs != 2:
        raise ValueError("readout supports 1 or 2 target sites")
    pen = ad.reshape(state, (n, -1, d, d))[:, :, 0, :]
    p_pen = ad.div(ad.tsum(ad.square(pen), axis=(1, 2)), den)
    return ad.stack([p_pen, p_last], axis=-1)


# -- full model -----------------------------------------------------------

@dataclass
class AdqcModel:
    """Trainable circuit predictor: encoder + latent gates + layout."""

    layout: CircuitLayout
    encoder: EncoderParams
    latent: np.ndarray        # (n_gates, d^2, d^2)
    n_outputs: int = 1        # 1 for the 1D map, 2 for the 2D map

    @staticmethod
    def initial(layout: CircuitLayout, n_outputs: int = 1, seed: int = 0) -> "AdqcModel":
        return AdqcModel(layout=layout,
                         encoder=EncoderParams.initial(layout.d, seed=seed),
                         latent=init_latent_gates(layout, seed=seed),
                         n_outputs=n_outputs)

    def param_arrays(self) -> dict:
        return {"theta": np.array(self.encoder.theta),
                "enc_tensor": self.encoder.tensor,
                "gates": self.latent}

    def set_param_arrays(self, params: dict):
        self.encoder = EncoderParams(theta=float(params["theta"]),
                                     tensor=np.array(params["enc_tensor"]))
        self.latent = np.array(params["gates"])

    def forward_t(self, params_t: dict, features, mu) -> ad.Tensor:
        """Tape forward from named parameter Tensors; features (N, F)."""
        vecs = encode_batch_t(features, mu, params_t["theta"], params_t["enc_tensor"])
        state = embed_t(vecs)
        gates = [ad.unitarize(params_t["gates"][g]) for g in range(self.layout.n_gates)]
        state = apply_circuit_t(state, gates, self.layout)
        return readout_t(state, self.layout, self.n_outputs)

    def params_t(self) -> dict:
        return {name: ad.parameter(arr, name=name)
                for name, arr in self.param_arrays().items()}

    def predict(self, features, mu) -> np.ndarray:
        """Frozen-parameter prediction; (N,) or (N, 2)."""
        features = np.asarray(features, dtype=np.float64)
        mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), features.shape[:1])
        with ad.no_grad():
            return self.forward_t(self.params_t(), features, mu).value

    def derivative(self, features, mu) -> np.ndarray:
        """d(prediction)/d(latest state), batched.

        Returns (N,) for one output or (N, 2, 2) Jacobians with rows
        indexing outputs and columns the (x, x') components of the newest
        state.  Parameters are held constant, so the backward sweep only
        propagates through the input path.
        """
        features = np.asarray(features, dtype=np.float64)
        mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), features.shape[:1])
        n, f = features.shape
        n_in = self.n_outputs
        leaves = [ad.Tensor(features[:, f - n_in + i].copy(), requires_grad=True,
                            name=f"x_last_{i}") for i in range(n_in)]
        cols = [ad.constant(features[:, j]) for j in range(f - n_in)] + leaves
        feats_t = ad.stack(cols, axis=1)
        const = {name: ad.constant(arr) for name, arr in self.param_arrays().items()}
        out = self.forward_t(const, feats_t, mu)
        if self.n_outputs == 1:
            ad.backward(ad.tsum(out))
            return leaves[0].grad
        jac = np.empty((n, 2, 2))
        for row in range(2):
            for leaf in leaves:
                leaf.grad = None
            ad.backward(ad.tsum(out[:, row]))
            for col in range(2):
                g = leaves[col].grad
                jac[:, row, col] = 0.0 if g is None else g
        return jac
