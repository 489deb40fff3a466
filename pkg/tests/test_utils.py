import numpy as np
import pytest

from chaos_replica.errors import (ChaosReplicaError, DomainError,
                                  EmbeddingError, SchemaError, TrainingError,
                                  UndefinedFitError)
from chaos_replica.utils import (ROLE_TEST, ROLE_TRAIN, THREADS_ENV_VAR,
                                 relative_error, stream, thread_cap)


def test_stream_deterministic():
    a = stream(7, ROLE_TRAIN, 0).uniform(size=5)
    b = stream(7, ROLE_TRAIN, 0).uniform(size=5)
    np.testing.assert_array_equal(a, b)


def test_stream_keys_independent():
    base = stream(7, ROLE_TRAIN, 0).uniform(size=5)
    assert not np.array_equal(base, stream(7, ROLE_TEST, 0).uniform(size=5))
    assert not np.array_equal(base, stream(7, ROLE_TRAIN, 1).uniform(size=5))
    assert not np.array_equal(base, stream(8, ROLE_TRAIN, 0).uniform(size=5))


def test_thread_cap_precedence(monkeypatch):
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
    assert thread_cap(4) == 4
    assert thread_cap(0) == 1            # clamped to at least one worker
    monkeypatch.setenv(THREADS_ENV_VAR, "2")
    assert thread_cap() == 2
    assert thread_cap(8) == 8            # explicit flag beats the env var
    monkeypatch.delenv(THREADS_ENV_VAR)
    assert thread_cap() >= 1


def test_relative_error():
    assert relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert relative_error([1.1], [1.0]) == pytest.approx(0.1)
    # zero exact vector: floor keeps the ratio finite
    assert np.isfinite(relative_error([1e-3], [0.0]))


def test_error_hierarchy():
    for exc in (DomainError, SchemaError, EmbeddingError, TrainingError,
                UndefinedFitError):
        assert issubclass(exc, ChaosReplicaError)
    assert issubclass(ChaosReplicaError, Exception)
