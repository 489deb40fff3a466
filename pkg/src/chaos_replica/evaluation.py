"""Long-term characteristic replication and scoring.

A trained checkpoint (or the truth oracle) is rolled out autoregressively
from windows seeded with true states; this module turns those rollouts
into the replicated characteristics — relative-error curves with their
exponential growth index, bifurcation diagrams rendered as 8-bit images
scored by PSNR, and Lyapunov spectra obtained from the model's derivative
at the newest state — each compared against the exact map.

Every model path here also accepts the oracle checkpoint, which makes the
pipeline self-verifying: with the oracle the loss is zero, the spectra
match the ground-truth computation bit-for-bit, and images agree up to
ensemble sampling.
"""

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import INIT_MARGIN, MuGrid, map_spec
from .dynamics import (DEFAULT_BURN_IN, DEFAULT_LE_STEPS, LyapunovAccumulator,
                       step)
from .errors import SchemaError, UndefinedFitError
from .models import ModelCheckpoint, build_model, oracle_checkpoint
from .utils import ROLE_EVAL, stream

N_BINS = 256
EPS_GUARD = 1e-8          # |y| below this is excluded from relative-error means
ETA_BAND = (1e-3, 0.3)    # fit window: growth before O(1) saturation
ETA_MIN_POINTS = 4
LE_ROLLOUT_SEEDS = 5
BIF_INITS = 500
BIF_BURN_IN = 200
BIF_COLLECT = 64
ROLLOUT_STEPS = 40

# sub-keys under ROLE_EVAL so the different evaluations never share draws
_KEY_LE = 1
_KEY_BIF = 2
_KEY_ROLL = 3


def default_grid(system: str) -> MuGrid:
    return MuGrid.preset_1d() if system == "1d" else MuGrid.preset_2d()


def _draw_states(system: str, n: int, rng) -> np.ndarray:
    dim = 2 if system == "2d" else 1
    x0 = rng.uniform(INIT_MARGIN, 1.0 - INIT_MARGIN, size=(n, dim))
    return x0 if dim == 2 else x0[:, 0]


def _seed_windows(system: str, mu, x0, m: int, beta: float):
    """Windows of the first m true states from each x0; returns
    (windows (N, m*dim), current_state) with current = the newest state."""
    x0 = np.asarray(x0, dtype=np.float64)
    n = x0.shape[0]
    dim = 2 if system == "2d" else 1
    mu_arr = np.broadcast_to(np.asarray(mu, dtype=np.float64), (n,))
    windows = np.empty((n, m * dim))
    state = x0.copy()
    for t in range(m):
        windows[:, t * dim:(t + 1) * dim] = state.reshape(n, dim)
        if t < m - 1:
            state = _true_step(system, state, mu_arr, beta)
    return windows, state


def _true_step(system: str, state, mu_arr, beta):
    """Exact map applied with per-sample mu (grouped to scalar-mu calls)."""
    out = np.empty_like(state)
    for val in np.unique(mu_arr):
        mask = mu_arr == val
        out[mask] = step(map_spec(system, float(val), beta), state[mask])
    return out


def _slide(windows: np.ndarray, new_state: np.ndarray, dim: int) -> np.ndarray:
    n = windows.shape[0]
    return np.concatenate([windows[:, dim:], new_state.reshape(n, dim)], axis=1)


# -- autoregressive rollout and error growth -------------------------------

@dataclass
class RolloutResult:
    mu: float
    eps: np.ndarray    # (steps,) ensemble-averaged relative error per time
    pred: np.ndarray   # (n_ens, steps) or (n_ens, steps, 2)
    true: np.ndarray


def rollout(ckpt: ModelCheckpoint, mu: float, x0, steps: int) -> RolloutResult:
    """Slide the model over its own predictions for ``steps`` steps.

    The window starts from the true states of each ensemble member; the
    relative error at each time averages |(pred-true)/true| over the
    ensemble (and both components in 2D), skipping terms with |true| <
    1e-8.
    """
    model = build_model(ckpt)
    dim = ckpt.dim
    windows, true_state = _seed_windows(ckpt.system, mu, x0, ckpt.m, ckpt.beta)
    n = windows.shape[0]
    spec = map_spec(ckpt.system, mu, ckpt.beta)
    shape = (n, steps) if dim == 1 else (n, steps, dim)
    pred = np.empty(shape)
    true = np.empty(shape)
    eps = np.empty(steps)
    for t in range(steps):
        y_hat = model.predict(windows, mu)
        true_state = step(spec, true_state)
        pred[:, t] = y_hat
        true[:, t] = true_state
        y_flat = np.asarray(true_state).reshape(-1)
        ok = np.abs(y_flat) >= EPS_GUARD
        if np.any(ok):
            rel = np.abs((np.asarray(y_hat).reshape(-1)[ok] - y_flat[ok]) / y_flat[ok])
            eps[t] = float(np.mean(rel))
        else:
            eps[t] = math.nan
        windows = _slide(windows, np.asarray(y_hat), dim)
    return RolloutResult(mu=float(mu), eps=eps, pred=pred, true=true)


def fit_eta(eps_curve) -> float:
    """Least-squares slope of ln(eps) over the band 1e-3 <= eps <= 0.3.

    Time is the 1-based step index of the curve.  Fewer than 4 in-band
    points means the growth segment is undefined.
    """
    eps = np.asarray(eps_curve, dtype=np.float64)
    t = np.arange(1, len(eps) + 1, dtype=np.float64)
    ok = np.isfinite(eps) & (eps >= ETA_BAND[0]) & (eps <= ETA_BAND[1])
    if np.count_nonzero(ok) < ETA_MIN_POINTS:
        raise UndefinedFitError(
            f"only {int(np.count_nonzero(ok))} points inside the growth band; "
            f"need {ETA_MIN_POINTS}")
    slope = np.polyfit(t[ok], np.log(eps[ok]), 1)[0]
    return float(slope)


# -- bifurcation diagrams --------------------------------------------------

@dataclass
class BifurcationImage:
    pixels: np.ndarray   # uint8, (256, W); row 0 is x = 1 (top)
    grid: MuGrid


def bifurcation(ckpt: ModelCheckpoint, grid: Optional[MuGrid] = None,
                n_inits: int = BIF_INITS, burn_in: int = BIF_BURN_IN,
                collect: int = BIF_COLLECT, seed: int = 0) -> BifurcationImage:
    """Column-per-mu histogram of long-term visited states.

    Each column evolves an ensemble through the model (window seeded with
    true states), discards ``burn_in`` model steps, histograms the next
    ``collect`` states (first component in 2D) into 256 x-bins, then maps
    counts to pixels as 255 - floor(255*count/global_max).
    """
    grid = grid or default_grid(ckpt.system)
    model = build_model(ckpt)
    dim = ckpt.dim
    counts = np.zeros((N_BINS, len(grid)), dtype=np.int64)
    for gi, mu in enumerate(grid.values):
        rng = stream(seed, ROLE_EVAL, _KEY_BIF, gi)
        x0 = _draw_states(ckpt.system, n_inits, rng)
        windows, _ = _seed_windows(ckpt.system, mu, x0, ckpt.m, ckpt.beta)
        for t in range(burn_in + collect):
            y_hat = np.asarray(model.predict(windows, mu))
            if t >= burn_in:
                x_vals = y_hat if dim == 1 else y_hat[:, 0]
                bins = np.clip((x_vals * N_BINS).astype(np.int64), 0, N_BINS - 1)
                counts[:, gi] += np.bincount(bins, minlength=N_BINS)
            windows = _slide(windows, y_hat, dim)
    vmax = counts.max()
    if vmax == 0:
        pixels = np.full(counts.shape, 255, dtype=np.uint8)
    else:
        pixels = (255 - (255 * counts) // vmax).astype(np.uint8)
    return BifurcationImage(pixels=pixels[::-1], grid=grid)


def psnr(img1, img2) -> float:
    """Peak signal-to-noise ratio between 8-bit images, in dB."""
    a = np.asarray(img1, dtype=np.float64)
    b = np.asarray(img2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


# -- Lyapunov spectra from the model ---------------------------------------

def model_lyapunov(ckpt: ModelCheckpoint, grid: Optional[MuGrid] = None,
                   t_steps: int = DEFAULT_LE_STEPS,
                   burn_in: int = DEFAULT_BURN_IN,
                   n_seeds: int = LE_ROLLOUT_SEEDS, seed: int = 0,
                   x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-mu exponents from model derivatives, averaged over rollouts.

    For each mu, ``n_seeds`` rollouts start from windows of true states;
    after the model has advanced to the burn-in index, ``t_steps``
    accumulation steps collect the derivative w.r.t. the newest state —
    log-magnitudes in 1D, the propagated-frame QR on 2x2 Jacobians in 2D.
    The index bookkeeping matches the ground-truth computation exactly, so
    the oracle checkpoint reproduces it bit-for-bit.

    Returns (n_mu,) for 1D, (n_mu, 2) for 2D.  ``x0`` overrides the drawn
    initial states; shape (n_mu, n_seeds) or (n_mu, n_seeds, 2).
    """
    grid = grid or default_grid(ckpt.system)
    model = build_model(ckpt)
    dim = ckpt.dim
    n_mu = len(grid)
    if x0 is None:
        draws = [_draw_states(ckpt.system, n_seeds, stream(seed, ROLE_EVAL, _KEY_LE, gi))
                 for gi in range(n_mu)]
        x0 = np.stack(draws)
    x0 = np.asarray(x0, dtype=np.float64).reshape(n_mu * n_seeds, -1)
    if dim == 1:
        x0 = x0[:, 0]
    mu_arr = np.repeat(grid.as_array(), n_seeds)
    if burn_in < ckpt.m - 1:
        raise ValueError(f"burn_in must be at least m-1 = {ckpt.m - 1}")

    windows, _ = _seed_windows(ckpt.system, mu_arr, x0, ckpt.m, ckpt.beta)
    for _ in range(burn_in - (ckpt.m - 1)):
        windows = _slide(windows, np.asarray(model.predict(windows, mu_arr)), dim)
    acc = LyapunovAccumulator(dim, batch_shape=(n_mu * n_seeds,))
    for _ in range(t_steps):
        acc.update(model.derivative(windows, mu_arr))
        windows = _slide(windows, np.asarray(model.predict(windows, mu_arr)), dim)
    exps = acc.exponents()
    per_seed = exps.reshape((n_mu, n_seeds) if dim == 1 else (n_mu, n_seeds, dim))
    return per_seed.mean(axis=1)


def true_lyapunov_grid(system: str, grid: Optional[MuGrid] = None,
                       n_seeds: int = LE_ROLLOUT_SEEDS, seed: int = 0,
                       beta: float = 0.1) -> np.ndarray:
    """Ground-truth spectra over the grid, same ensemble protocol as the
    model path (the oracle checkpoint run through it)."""
    return model_lyapunov(oracle_checkpoint(system, beta), grid,
                          n_seeds=n_seeds, seed=seed)


def l_le(model_les, true_les) -> float:
    """RMSE between aligned exponent tables (all mu and both exponents)."""
    a = np.asarray(model_les, dtype=np.float64)
    b = np.asarray(true_les, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"exponent tables misaligned: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def sign_agreement(model_les, true_les) -> np.ndarray:
    """Elementwise: does the model exponent have the true sign?"""
    a = np.asarray(model_les)
    b = np.asarray(true_les)
    if a.shape != b.shape:
        raise ValueError("exponent tables misaligned")
    return (a > 0) == (b > 0)


# -- report ----------------------------------------------------------------

@dataclass
class EvalReport:
    system: str
    grid: MuGrid
    true_les: np.ndarray
    model_les: np.ndarray
    l_le: float
    sign_ok: np.ndarray
    sign_fraction: float
    psnr: Optional[float] = None
    eta: Optional[list] = None    # [{"mu":, "eta":}, ...] for chaotic mu
    notes: Optional[dict] = None

    def to_json(self, path):
        obj = {"system": self.system, "mu_grid": list(self.grid.values),
               "true_les": self.true_les.tolist(),
               "model_les": self.model_les.tolist(),
               "l_le": self.l_le,
               "sign_ok": self.sign_ok.tolist(),
               "sign_fraction": self.sign_fraction,
               "psnr": (None if self.psnr is None
                        else ("inf" if math.isinf(self.psnr) else self.psnr)),
               "eta": self.eta, "notes": self.notes or {}}
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1)

    def to_csv(self, path):
        les_2d = self.true_les.ndim == 2
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if les_2d:
                writer.writerow(["mu", "true_le1", "true_le2", "model_le1",
                                 "model_le2", "sign_ok1", "sign_ok2"])
            else:
                writer.writerow(["mu", "true_le", "model_le", "sign_ok"])
            for i, mu in enumerate(self.grid.values):
                if les_2d:
                    writer.writerow([f"{mu:.6g}",
                                     f"{self.true_les[i, 0]:.10g}",
                                     f"{self.true_les[i, 1]:.10g}",
                                     f"{self.model_les[i, 0]:.10g}",
                                     f"{self.model_les[i, 1]:.10g}",
                                     int(self.sign_ok[i, 0]),
                                     int(self.sign_ok[i, 1])])
                else:
                    writer.writerow([f"{mu:.6g}", f"{self.true_les[i]:.10g}",
                                     f"{self.model_les[i]:.10g}",
                                     int(self.sign_ok[i])])


def build_report(ckpt: ModelCheckpoint, grid: Optional[MuGrid] = None,
                 seed: int = 0, with_psnr: bool = True,
                 with_eta: bool = True, rollout_inits: int = BIF_INITS,
                 rollout_steps: int = ROLLOUT_STEPS) -> EvalReport:
    """Full characteristic comparison of a checkpoint against the truth."""
    grid = grid or default_grid(ckpt.system)
    model_les = model_lyapunov(ckpt, grid, seed=seed)
    true_les = true_lyapunov_grid(ckpt.system, grid, seed=seed, beta=ckpt.beta)
    ok = sign_agreement(model_les, true_les)
    report = EvalReport(system=ckpt.system, grid=grid, true_les=true_les,
                        model_les=model_les, l_le=l_le(model_les, true_les),
                        sign_ok=ok, sign_fraction=float(np.mean(ok)))
    if with_psnr:
        img_model = bifurcation(ckpt, grid, seed=seed)
        img_true = bifurcation(oracle_checkpoint(ckpt.system, ckpt.beta),
                               grid, seed=seed)
        report.psnr = psnr(img_model.pixels, img_true.pixels)
    if with_eta:
        chaotic = (true_les if true_les.ndim == 1 else true_les[:, 0]) > 0
        fits = []
        for gi in np.flatnonzero(chaotic):
            mu = grid.values[gi]
            rng = stream(seed, ROLE_EVAL, _KEY_ROLL, gi)
            x0 = _draw_states(ckpt.system, rollout_inits, rng)
            res = rollout(ckpt, mu, x0, rollout_steps)
            try:
                fits.append({"mu": float(mu), "eta": fit_eta(res.eps)})
            except UndefinedFitError:
                fits.append({"mu": float(mu), "eta": None})
        report.eta = fits
    return report


# -- PGM image files -------------------------------------------------------

def write_pgm(pixels: np.ndarray, path):
    """Binary 8-bit PGM (P5, maxval 255)."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise ValueError("write_pgm wants a 2-D uint8 array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise SchemaError(f"{path}: not a binary PGM file")
    # header: magic, width, height, maxval — whitespace separated
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":           # comment to end of line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError:
        raise SchemaError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise SchemaError(f"{path}: unsupported maxval {maxval}")
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise SchemaError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)
