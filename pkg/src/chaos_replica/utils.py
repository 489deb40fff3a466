"""Seeded RNG streams and small shared helpers."""

import os

import numpy as np

THREADS_ENV_VAR = "CHAOS_REPLICA_THREADS"

# Stream roles.  Train and test draws must never collide, so every consumer
# of randomness gets its own spawn key under the run seed.
ROLE_TRAIN = 0
ROLE_TEST = 1
ROLE_INIT = 2      # parameter initialization
ROLE_SHUFFLE = 3   # epoch shuffling / per-run subsampling
ROLE_EVAL = 4      # evaluation rollout initial states


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key).

    Distinct keys yield non-overlapping streams by construction of
    ``SeedSequence`` spawn keys, so e.g. train and test draws from the same
    run seed never collide.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def thread_cap(flag_value=None) -> int:
    """Worker cap from --threads flag, CHAOS_REPLICA_THREADS, or cpu count."""
    if flag_value is not None:
        return max(1, int(flag_value))
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def relative_error(approx, exact, floor: float = 1e-12) -> float:
    """Norm-wise relative error with a floor to avoid division by ~0."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = max(float(np.linalg.norm(exact)), floor)
    return float(np.linalg.norm(approx - exact)) / denom
