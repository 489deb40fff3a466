"""Checkpoint envelope and the uniform model interface evaluation consumes.

Every model — trained circuit, trained LSTM, or the exact-map oracle —
exposes ``predict(features, mu)`` and ``derivative(features, mu)`` over a
window of the last M states.  The oracle kind wraps the true dynamics, so
the whole evaluation pipeline can be verified to be exact (zero loss, zero
exponent error) independently of any training run.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adqc import AdqcModel, CircuitLayout
from .dynamics import jacobian, step
from .dataset import map_spec, window_length
from .encoding import EncoderParams
from .errors import SchemaError
from .lstm import LstmConfig, LstmModel

CKPT_SCHEMA = 1
KINDS = ("adqc", "lstm", "oracle")


@dataclass
class OracleModel:
    """The exact map exposed through the model interface.

    ``predict`` applies the true dynamics to the newest state in each
    window; ``derivative`` returns the true Jacobian there.  Samples are
    grouped by mu so each group runs through the same scalar-mu code path
    that generated the data (bit-exact agreement with dataset labels).
    """

    system: str
    beta: float = 0.1

    @property
    def n_outputs(self) -> int:
        return 2 if self.system == "2d" else 1

    def _last_states(self, features):
        dim = self.n_outputs
        feats = np.asarray(features, dtype=np.float64)
        last = feats[:, -dim:]
        return last[:, 0] if dim == 1 else last

    def _per_mu(self, features, mu, fn, out_shape):
        feats = np.asarray(features, dtype=np.float64)
        mu_arr = np.broadcast_to(np.asarray(mu, dtype=np.float64), feats.shape[:1])
        last = self._last_states(feats)
        out = np.empty(out_shape)
        for val in np.unique(mu_arr):
            mask = mu_arr == val
            out[mask] = fn(map_spec(self.system, float(val), self.beta), last[mask])
        return out

    def predict(self, features, mu) -> np.ndarray:
        n = np.asarray(features).shape[0]
        shape = (n,) if self.n_outputs == 1 else (n, 2)
        return self._per_mu(features, mu, step, shape)

    def derivative(self, features, mu) -> np.ndarray:
        n = np.asarray(features).shape[0]
        shape = (n,) if self.n_outputs == 1 else (n, 2, 2)
        return self._per_mu(features, mu, jacobian, shape)


@dataclass
class ModelCheckpoint:
    """Everything needed to rebuild a frozen model, JSON-serializable."""

    kind: str
    system: str
    m: int
    mu_tuned: bool
    params: dict = field(default_factory=dict, repr=False)
    layout: Optional[CircuitLayout] = None
    config: Optional[LstmConfig] = None
    beta: float = 0.1
    mu_grid: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown checkpoint kind {self.kind!r}")
        if self.system not in ("1d", "2d"):
            raise SchemaError(f"unknown system {self.system!r}")
        if self.kind == "adqc" and self.layout is None:
            raise SchemaError("adqc checkpoint needs a circuit layout")
        if self.kind == "lstm" and self.config is None:
            raise SchemaError("lstm checkpoint needs an LSTM config")

    @property
    def dim(self) -> int:
        return 2 if self.system == "2d" else 1

    @property
    def n_features(self) -> int:
        return self.m * self.dim


def oracle_checkpoint(system: str, beta: float = 0.1) -> ModelCheckpoint:
    return ModelCheckpoint(kind="oracle", system=system, m=window_length(system),
                           mu_tuned=False, beta=beta,
                           meta={"note": "exact dynamics, no trained parameters"})


def make_checkpoint(model, system: str, mu_grid=None, meta=None,
                    beta: float = 0.1) -> ModelCheckpoint:
    """Wrap a trained model object into the shared envelope."""
    meta = dict(meta or {})
    grid = tuple(float(v) for v in mu_grid) if mu_grid is not None else None
    m = window_length(system)
    if isinstance(model, AdqcModel):
        return ModelCheckpoint(kind="adqc", system=system, m=m, mu_tuned=True,
                               params={k: np.array(v) for k, v in model.param_arrays().items()},
                               layout=model.layout, beta=beta, mu_grid=grid, meta=meta)
    if isinstance(model, LstmModel):
        return ModelCheckpoint(kind="lstm", system=system, m=m,
                               mu_tuned=model.mu_tuned,
                               params={k: np.array(v) for k, v in model.param_arrays().items()},
                               config=model.config, beta=beta, mu_grid=grid, meta=meta)
    if isinstance(model, OracleModel):
        return oracle_checkpoint(system, beta)
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def build_model(ckpt: ModelCheckpoint):
    """Instantiate the frozen model a checkpoint describes."""
    if ckpt.kind == "oracle":
        return OracleModel(system=ckpt.system, beta=ckpt.beta)
    if ckpt.kind == "adqc":
        enc = EncoderParams(theta=float(ckpt.params["theta"]),
                            tensor=np.array(ckpt.params["enc_tensor"]))
        return AdqcModel(layout=ckpt.layout, encoder=enc,
                         latent=np.array(ckpt.params["gates"]),
                         n_outputs=ckpt.dim)
    enc = None
    if ckpt.mu_tuned:
        enc = EncoderParams(theta=float(ckpt.params["theta"]),
                            tensor=np.array(ckpt.params["enc_tensor"]))
    arrays = {k: np.array(v) for k, v in ckpt.params.items()
              if k not in ("theta", "enc_tensor")}
    return LstmModel(config=ckpt.config, arrays=arrays, encoder=enc)


def _check_window(ckpt: ModelCheckpoint, window: np.ndarray):
    if window.ndim != 2 or window.shape[1] != ckpt.n_features:
        raise ValueError(f"window must be (N, {ckpt.n_features}) for this "
                         f"checkpoint, got {window.shape}")


def predict_window(ckpt: ModelCheckpoint, window, mu) -> np.ndarray:
    """Next-state prediction for windows of the last M states."""
    window = np.atleast_2d(np.asarray(window, dtype=np.float64))
    _check_window(ckpt, window)
    return build_model(ckpt).predict(window, mu)


def derivative_window(ckpt: ModelCheckpoint, window, mu) -> np.ndarray:
    """Model derivative w.r.t. the newest state: (N,) or (N, 2, 2)."""
    window = np.atleast_2d(np.asarray(window, dtype=np.float64))
    _check_window(ckpt, window)
    return build_model(ckpt).derivative(window, mu)


def extrapolates(ckpt: ModelCheckpoint, mu) -> bool:
    """True when mu falls outside the grid the checkpoint was trained on."""
    if not ckpt.mu_grid:
        return False
    lo, hi = min(ckpt.mu_grid), max(ckpt.mu_grid)
    mu = np.asarray(mu, dtype=np.float64)
    return bool(np.any(mu < lo - 1e-12) or np.any(mu > hi + 1e-12))


# -- serialization --------------------------------------------------------

def save_checkpoint(ckpt: ModelCheckpoint, path):
    obj = {"schema": CKPT_SCHEMA, "kind": ckpt.kind, "system": ckpt.system,
           "m": ckpt.m, "mu_tuned": ckpt.mu_tuned, "beta": ckpt.beta,
           "mu_grid": list(ckpt.mu_grid) if ckpt.mu_grid else None,
           "layout": dataclasses.asdict(ckpt.layout) if ckpt.layout else None,
           "config": dataclasses.asdict(ckpt.config) if ckpt.config else None,
           "params": {k: np.asarray(v).tolist() for k, v in ckpt.params.items()},
           "meta": ckpt.meta}
    with open(path, "w") as fh:
        json.dump(obj, fh)


def load_checkpoint(path) -> ModelCheckpoint:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path}: not a checkpoint file: {err}") from None
    if obj.get("schema") != CKPT_SCHEMA:
        raise SchemaError(f"{path}: unsupported checkpoint schema "
                          f"{obj.get('schema')!r} (want {CKPT_SCHEMA})")
    for key in ("kind", "system", "m", "mu_tuned", "params"):
        if key not in obj:
            raise SchemaError(f"{path}: checkpoint missing {key!r}")
    return ModelCheckpoint(
        kind=obj["kind"], system=obj["system"], m=int(obj["m"]),
        mu_tuned=bool(obj["mu_tuned"]),
        params={k: np.array(v) for k, v in obj["params"].items()},
        layout=CircuitLayout(**obj["layout"]) if obj.get("layout") else None,
        config=LstmConfig(**obj["config"]) if obj.get("config") else None,
        beta=float(obj.get("beta", 0.1)),
        mu_grid=tuple(obj["mu_grid"]) if obj.get("mu_grid") else None,
        meta=obj.get("meta", {}))
