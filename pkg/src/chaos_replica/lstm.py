"""Classical LSTM baseline for one-step-ahead prediction.

A single-layer (stackable) standard cell runs over the sample's feature
sequence — raw scalars, or the tuned encoding when an encoder is attached —
and a sigmoid affine head maps the final hidden state to the next-state
prediction, keeping outputs inside the valid (0, 1) range for stable
autoregressive rollouts.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .encoding import EncoderParams, encode_batch_t
from .utils import ROLE_INIT, stream


@dataclass(frozen=True)
class LstmConfig:
    """Architecture hyper-parameters (see the experiment presets)."""

    d_in: int
    d_out: int
    seq_len: int
    d_h: int = 8
    n_layers: int = 1

    def __post_init__(self):
        if min(self.d_in, self.d_out, self.seq_len, self.d_h, self.n_layers) < 1:
            raise ValueError("all LSTM dimensions must be >= 1")


def lstm_step(x_t: ad.Tensor, h: ad.Tensor, c: ad.Tensor,
              wx: ad.Tensor, wh: ad.Tensor, b: ad.Tensor):
    """One standard cell update; gate order (i, f, g, o) along the 4H axis.

    ``x_t`` is (N, d_in); ``wx`` (d_in, 4H), ``wh`` (H, 4H), ``b`` (4H,).
    Returns (h', c'), each (N, H).
    """
    hdim = h.value.shape[1]
    z = ad.matmul(x_t, wx) + ad.matmul(h, wh) + b
    i = ad.sigmoid(z[:, 0 * hdim:1 * hdim])
    f = ad.sigmoid(z[:, 1 * hdim:2 * hdim])
    g = ad.tanh(z[:, 2 * hdim:3 * hdim])
    o = ad.sigmoid(z[:, 3 * hdim:4 * hdim])
    c_new = f * c + i * g
    h_new = o * ad.tanh(c_new)
    return h_new, c_new


def init_lstm_arrays(config: LstmConfig, seed: int = 0) -> dict:
    """Weights uniform(-1/sqrt(D_h), 1/sqrt(D_h)); zero biases except the
    forget-gate bias, set to 1.0."""
    rng = stream(seed, ROLE_INIT, 13)
    bound = 1.0 / np.sqrt(config.d_h)
    params = {}
    for layer in range(config.n_layers):
        d_in = config.d_in if layer == 0 else config.d_h
        params[f"wx{layer}"] = rng.uniform(-bound, bound, size=(d_in, 4 * config.d_h))
        params[f"wh{layer}"] = rng.uniform(-bound, bound, size=(config.d_h, 4 * config.d_h))
        b = np.zeros(4 * config.d_h)
        b[config.d_h:2 * config.d_h] = 1.0
        params[f"b{layer}"] = b
    params["w_out"] = rng.uniform(-bound, bound, size=(config.d_h, config.d_out))
    params["b_out"] = np.zeros(config.d_out)
    return params


@dataclass
class LstmModel:
    """LSTM predictor; ``encoder`` present means the tuned pre-processing
    feeds the sequence, absent means raw scalars do."""

    config: LstmConfig
    arrays: dict = field(repr=False)
    encoder: Optional[EncoderParams] = None

    @staticmethod
    def initial(config: LstmConfig, mu_tuned: bool, seed: int = 0) -> "LstmModel":
        enc = EncoderParams.initial(seed=seed) if mu_tuned else None
        if mu_tuned and config.d_in != enc.d:
            raise ValueError(f"tuned preset needs d_in={enc.d}, got {config.d_in}")
        return LstmModel(config=config, arrays=init_lstm_arrays(config, seed), encoder=enc)

    @property
    def mu_tuned(self) -> bool:
        return self.encoder is not None

    @property
    def n_outputs(self) -> int:
        return self.config.d_out

    @property
    def n_features(self) -> int:
        # scalar features per sample: tuned runs encode one scalar per step
        return self.config.seq_len if self.mu_tuned else self.config.seq_len * self.config.d_in

    def param_arrays(self) -> dict:
        params = dict(self.arrays)
        if self.mu_tuned:
            params["theta"] = np.array(self.encoder.theta)
            params["enc_tensor"] = self.encoder.tensor
        return params

    def set_param_arrays(self, params: dict):
        self.arrays = {k: np.array(v) for k, v in params.items()
                       if k not in ("theta", "enc_tensor")}
        if self.mu_tuned:
            self.encoder = EncoderParams(theta=float(params["theta"]),
                                         tensor=np.array(params["enc_tensor"]))

    def params_t(self) -> dict:
        return {name: ad.parameter(arr, name=name)
                for name, arr in self.param_arrays().items()}

    def _step_inputs(self, feats_t, mu, params_t):
        """Sequence of (N, d_in) Tensors from (N, F) features."""
        cfg = self.config
        if feats_t.value.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features per sample, "
                             f"got {feats_t.value.shape[1]}")
        if self.mu_tuned:
            enc = encode_batch_t(feats_t, mu, params_t["theta"], params_t["enc_tensor"])
            return [enc[:, t, :] for t in range(cfg.seq_len)]
        return [feats_t[:, t * cfg.d_in:(t + 1) * cfg.d_in] for t in range(cfg.seq_len)]

    def forward_t(self, params_t: dict, feats_t, mu) -> ad.Tensor:
        feats_t = feats_t if isinstance(feats_t, ad.Tensor) else ad.constant(feats_t)
        cfg = self.config
        n = feats_t.value.shape[0]
        inputs = self._step_inputs(feats_t, mu, params_t)
        h = [ad.constant(np.zeros((n, cfg.d_h))) for _ in range(cfg.n_layers)]
        c = [ad.constant(np.zeros((n, cfg.d_h))) for _ in range(cfg.n_layers)]
        for x_t in inputs:
            for layer in range(cfg.n_layers):
                h[layer], c[layer] = lstm_step(
                    x_t if layer == 0 else h[layer - 1], h[layer], c[layer],
                    params_t[f"wx{layer}"], params_t[f"wh{layer}"], params_t[f"b{layer}"])
        out = ad.sigmoid(ad.matmul(h[-1], params_t["w_out"]) + params_t["b_out"])
        return out[:, 0] if cfg.d_out == 1 else out

    def predict(self, features, mu) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), features.shape[:1])
        with ad.no_grad():
            return self.forward_t(self.params_t(), features, mu).value

    def derivative(self, features, mu) -> np.ndarray:
        """d(prediction)/d(latest state); (N,) or (N, 2, 2) as in the
        circuit model — rows index outputs, columns the newest (x, x')."""
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
