"""Sample generation and serialization over the experiment's mu grids.

Each sample is a window of M consecutive states (2D states interleaved as
x_1, x'_1, ..., x_M, x'_M) with the (M+1)-th state as its label, produced
by iterating the exact map from a uniformly drawn initial state.  Datasets
serialize to JSON-lines: a header object, then one sample per line; JSON's
shortest-round-trip float encoding keeps the 64-bit values bit-exact.
"""

import json
from dataclasses import dataclass

import numpy as np

from .dynamics import MapSpec, step
from .errors import SchemaError
from .utils import ROLE_SHUFFLE, ROLE_TEST, ROLE_TRAIN, stream

SCHEMA_VERSION = 1
INIT_MARGIN = 1e-6   # keep initial states off the absorbing endpoints
WINDOW_1D = 8
WINDOW_2D = 4
N_TRAIN_CANDIDATES = 3000
N_TRAIN_USED = 2000
N_TEST = 500


@dataclass(frozen=True)
class MuGrid:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise ValueError("empty mu grid")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("mu grid must be strictly increasing")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    @staticmethod
    def preset_1d() -> "MuGrid":
        # 50 values 2.04, 2.08, ..., 4.00
        return MuGrid(tuple(np.linspace(2.04, 4.0, 50)))

    @staticmethod
    def preset_2d() -> "MuGrid":
        # 40 values 0.51, 0.52, ..., 0.90
        return MuGrid(tuple(np.linspace(0.51, 0.90, 40)))


def window_length(system: str) -> int:
    if system == "1d":
        return WINDOW_1D
    if system == "2d":
        return WINDOW_2D
    raise ValueError(f"unknown system {system!r}")


def map_spec(system: str, mu: float, beta: float = 0.1) -> MapSpec:
    return MapSpec.logistic1d(mu) if system == "1d" else MapSpec.logistic2d(mu, beta)


@dataclass
class Dataset:
    """Flat sample arrays in grid-major order (all samples of mu[0] first)."""

    system: str
    m: int
    role: str
    seed: int
    grid: MuGrid
    features: np.ndarray   # (n_total, M) or (n_total, 2M)
    labels: np.ndarray     # (n_total,) or (n_total, 2)
    sample_mu: np.ndarray  # (n_total,)
    beta: float = 0.1

    def __post_init__(self):
        if self.role not in ("train", "test"):
            raise ValueError(f"bad role {self.role!r}")
        n = len(self.features)
        if len(self.labels) != n or len(self.sample_mu) != n:
            raise ValueError("feature/label/mu lengths disagree")
        if n % len(self.grid) != 0:
            raise ValueError("samples do not divide evenly over the grid")

    @property
    def n_per_mu(self) -> int:
        return len(self.features) // len(self.grid)

    def per_mu(self):
        """Yield (mu, features, labels) blocks in grid order."""
        k = self.n_per_mu
        for i, mu in enumerate(self.grid.values):
            sl = slice(i * k, (i + 1) * k)
            yield mu, self.features[sl], self.labels[sl]


def _windows(spec: MapSpec, x1: np.ndarray, m: int):
    """Iterate m-1 times for features, once more for the label."""
    n = x1.shape[0]
    dim = spec.dim
    feats = np.empty((n, m * dim))
    state = x1
    for t in range(m):
        feats[:, t * dim:(t + 1) * dim] = state.reshape(n, dim)
        if t < m - 1:
            state = step(spec, state)
    label = step(spec, state)
    return feats, label.reshape(n, dim) if dim == 2 else label.reshape(n)


def generate(system: str, grid: MuGrid, n_train: int = N_TRAIN_CANDIDATES,
             n_test: int = N_TEST, m: int = None, seed: int = 0,
             beta: float = 0.1):
    """(train, test) datasets; train and test use disjoint RNG streams."""
    if m is None:
        m = window_length(system)
    out = []
    for role, role_key, count in (("train", ROLE_TRAIN, n_train),
                                  ("test", ROLE_TEST, n_test)):
        feats, labels, mus = [], [], []
        for gi, mu in enumerate(grid.values):
            spec = map_spec(system, mu, beta)
            rng = stream(seed, role_key, gi)
            x1 = rng.uniform(INIT_MARGIN, 1.0 - INIT_MARGIN, size=(count, spec.dim))
            if spec.dim == 1:
                x1 = x1.reshape(count)
            f, y = _windows(spec, x1, m)
            feats.append(f)
            labels.append(y)
            mus.append(np.full(count, mu))
        out.append(Dataset(system=system, m=m, role=role, seed=seed, grid=grid,
                           features=np.concatenate(feats),
                           labels=np.concatenate(labels),
                           sample_mu=np.concatenate(mus), beta=beta))
    return tuple(out)


def subsample(ds: Dataset, k: int, seed: int) -> Dataset:
    """Seeded draw of k samples per mu (without replacement), grid order kept."""
    if k > ds.n_per_mu:
        raise ValueError(f"cannot draw {k} from {ds.n_per_mu} per mu")
    picked = []
    n = ds.n_per_mu
    for gi in range(len(ds.grid)):
        rng = stream(seed, ROLE_SHUFFLE, gi)
        idx = rng.permutation(n)[:k] + gi * n
        picked.append(np.sort(idx))
    idx = np.concatenate(picked)
    return Dataset(system=ds.system, m=ds.m, role=ds.role, seed=ds.seed,
                   grid=ds.grid, features=ds.features[idx], labels=ds.labels[idx],
                   sample_mu=ds.sample_mu[idx], beta=ds.beta)


# -- serialization --------------------------------------------------------

def save(ds: Dataset, path):
    header = {"schema": SCHEMA_VERSION, "system": ds.system, "m": ds.m,
              "mu_grid": list(ds.grid.values), "role": ds.role, "seed": ds.seed,
              "beta": ds.beta, "n_per_mu": ds.n_per_mu}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(len(ds.features)):
            label = ds.labels[i]
            rec = {"mu": float(ds.sample_mu[i]),
                   "features": ds.features[i].tolist(),
                   "label": label.tolist() if np.ndim(label) else float(label)}
            fh.write(json.dumps(rec) + "\n")


def load(path) -> Dataset:
    with open(path) as fh:
        header_line = fh.readline()
        if not header_line:
            raise SchemaError(f"{path}: empty dataset file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as err:
            raise SchemaError(f"{path}: bad header: {err}") from None
        if header.get("schema") != SCHEMA_VERSION:
            raise SchemaError(f"{path}: unsupported schema version "
                              f"{header.get('schema')!r} (want {SCHEMA_VERSION})")
        for key in ("system", "m", "mu_grid", "role", "seed", "n_per_mu"):
            if key not in header:
                raise SchemaError(f"{path}: header missing {key!r}")
        expected = header["n_per_mu"] * len(header["mu_grid"])
        dim = 2 if header["system"] == "2d" else 1
        feats = np.empty((expected, header["m"] * dim))
        labels = np.empty((expected, dim) if dim == 2 else expected)
        mus = np.empty(expected)
        count = 0
        for line in fh:
            if not line.strip():
                continue
            if count >= expected:
                raise SchemaError(f"{path}: more samples than the header declares")
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise SchemaError(f"{path}: bad record {count}: {err}") from None
            feats[count] = rec["features"]
            labels[count] = rec["label"]
            mus[count] = rec["mu"]
            count += 1
        if count != expected:
            raise SchemaError(f"{path}: truncated: {count} samples, "
                              f"header declares {expected}")
    return Dataset(system=header["system"], m=header["m"], role=header["role"],
                   seed=header["seed"], grid=MuGrid(tuple(header["mu_grid"])),
                   features=feats, labels=labels, sample_mu=mus,
                   beta=header.get("beta", 0.1))
