"""Mini-batch RMSE training for the circuit and LSTM predictors.

All mu values train together in one pooled stream (one model covers the
whole grid).  Each run draws a fresh per-mu subset of the generated
training candidates, then minimizes RMSE with adaptive-moment updates
(plain SGD available behind the optimizer flag).  The model is left at the
parameters with the best test loss; the log records per-epoch losses,
gradient norms, and wall time.
"""

import csv
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .dataset import Dataset, subsample
from .errors import TrainingError
from .utils import ROLE_SHUFFLE, stream

# epoch-shuffle stream keys start past any per-mu subsample key
_SHUFFLE_KEY_BASE = 1000


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 1e-3
    optimizer: str = "adam"      # "adam" | "sgd"
    epochs: int = 400
    batch_size: int = 500
    seed: int = 0
    patience: int = 50           # stop after this many epochs without a new best test L
    n_train_used: int = 2000     # per-mu draw from the generated candidates
    eval_batch: int = 2000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    l_train: list = field(default_factory=list)
    l_test: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_epoch: int = -1
    best_l_test: float = math.inf

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "l_train", "l_test", "grad_norm", "seconds"])
            for row in zip(self.epochs, self.l_train, self.l_test,
                           self.grad_norm, self.seconds):
                writer.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])


def rmse(preds, labels) -> float:
    """sqrt(mean(residual^2)) over every scalar component (2D: 2N terms)."""
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.shape != labels.shape:
        raise ValueError(f"shape mismatch {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise ValueError("rmse of empty input")
    return float(np.sqrt(np.mean((preds - labels) ** 2)))


class AdamState:
    """Standard first/second-moment adaptive update, kept per parameter name."""

    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, cfg: TrainConfig):
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for k, g in grads.items():
            g = np.asarray(g)
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] = params[k] - cfg.eta * (self.m[k] / bc1) / (
                np.sqrt(self.v[k] / bc2) + cfg.adam_eps)


def _sgd_step(params: dict, grads: dict, cfg: TrainConfig):
    for k, g in grads.items():
        params[k] = params[k] - cfg.eta * np.asarray(g)


def batched_loss(model, feats, labels, mu, batch: int) -> float:
    """Pooled RMSE in fixed-size prediction batches (no tape)."""
    total, count = 0.0, 0
    for lo in range(0, len(feats), batch):
        sl = slice(lo, lo + batch)
        resid = model.predict(feats[sl], mu[sl]) - labels[sl]
        total += float(np.sum(resid * resid))
        count += resid.size
    if count == 0:
        raise ValueError("empty evaluation set")
    return math.sqrt(total / count)


def train(model, train_ds: Dataset, test_ds: Dataset, config: TrainConfig,
          on_epoch=None) -> TrainLog:
    """Optimize ``model`` in place; returns the log.  On return the model
    holds the parameters of the best-test-loss epoch.  ``on_epoch(log)``
    fires after every epoch (e.g. to stream the log to disk)."""
    if config.n_train_used < train_ds.n_per_mu:
        used = subsample(train_ds, config.n_train_used, config.seed)
    else:
        used = train_ds
    x, y, mu = used.features, used.labels, used.sample_mu
    xt, yt, mut = test_ds.features, test_ds.labels, test_ds.sample_mu
    n = len(x)

    params = {k: np.array(v) for k, v in model.param_arrays().items()}
    opt = AdamState(params) if config.optimizer == "adam" else None
    best = {k: v.copy() for k, v in params.items()}
    log = TrainLog()

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = stream(config.seed, ROLE_SHUFFLE,
                       _SHUFFLE_KEY_BASE + epoch).permutation(n)
        sq_sum, n_terms = 0.0, 0
        gnorms = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            params_t = {k: ad.parameter(v, name=k) for k, v in params.items()}
            pred = model.forward_t(params_t, x[idx], mu[idx])
            loss = ad.rmse_loss(pred, y[idx])
            lval = float(loss.value)
            if not math.isfinite(lval):
                raise TrainingError(f"non-finite loss at epoch {epoch}, "
                                    f"batch starting {lo} (seed {config.seed})")
            grads = ad.backward(loss)
            gnorms.append(math.sqrt(sum(float(np.sum(np.square(g)))
                                        for g in grads.values())))
            if opt is not None:
                opt.step(params, grads, config)
            else:
                _sgd_step(params, grads, config)
            terms = pred.value.size
            sq_sum += lval * lval * terms
            n_terms += terms

        model.set_param_arrays(params)
        l_test = batched_loss(model, xt, yt, mut, config.eval_batch)
        log.epochs.append(epoch)
        log.l_train.append(math.sqrt(sq_sum / n_terms))
        log.l_test.append(l_test)
        log.grad_norm.append(float(np.mean(gnorms)))
        log.seconds.append(time.perf_counter() - t0)
        if l_test < log.best_l_test:
            log.best_l_test = l_test
            log.best_epoch = epoch
            best = {k: v.copy() for k, v in params.items()}
        if on_epoch is not None:
            on_epoch(log)
        if epoch - log.best_epoch >= config.patience:
            break

    model.set_param_arrays(best)
    return log


def sweep(model_factory, values, seeds, train_ds: Dataset, test_ds: Dataset,
          config: TrainConfig, metric_fn=None):
    """Train ``model_factory(value, seed)`` per grid point and seed.

    Returns (rows, aggregates): one row per run with the best test L (plus
    ``metric_fn(model)`` when given, e.g. an exponent-error score), and
    per-value mean/std aggregates over the seeds.
    """
    values = list(values)
    seeds = list(seeds)
    if len(seeds) < 2:
        warnings.warn("fewer than 2 seeds: std columns will be undefined")
    rows = []
    for value in values:
        for seed in seeds:
            model = model_factory(value, seed)
            log = train(model, train_ds, test_ds, replace(config, seed=seed))
            row = {"value": value, "seed": seed, "l_test": log.best_l_test,
                   "epochs_run": len(log.epochs)}
            if metric_fn is not None:
                row["metric"] = float(metric_fn(model))
            rows.append(row)
    aggregates = []
    for value in values:
        sub = [r for r in rows if r["value"] == value]
        agg = {"value": value, "n_seeds": len(sub)}
        for key in ("l_test", "metric") if metric_fn is not None else ("l_test",):
            samples = np.array([r[key] for r in sub])
            agg[f"{key}_mean"] = float(samples.mean())
            agg[f"{key}_std"] = (float(samples.std(ddof=1))
                                 if len(samples) > 1 else float("nan"))
        aggregates.append(agg)
    return rows, aggregates
