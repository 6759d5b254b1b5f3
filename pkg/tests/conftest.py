"""Shared helpers for the test suite."""

import numpy as np
import pytest

from qdcount.ensemble import CouplingMatrix, collective_modes, coupling_uniform


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def uniform_modes(n, gamma0, kappa):
    """Coupling matrix plus its eigen-decomposition in one call."""
    coup = coupling_uniform(n, gamma0, kappa)
    return coup, collective_modes(coup)


def random_coupling(rng, n, heterogeneous=False):
    """Random valid decay matrix.

    A Gram matrix rescaled to unit diagonal stays positive semi-definite
    and keeps |gamma_ij| below the geometric mean of the diagonal, which
    is what physical dissipative coupling looks like.  With
    ``heterogeneous`` the intrinsic rates differ per emitter.
    """
    a = rng.normal(size=(n, n + 2))
    m = a @ a.T
    d = np.sqrt(np.diag(m))
    m = m / np.outer(d, d)
    g0 = rng.uniform(0.01, 0.05, size=n) if heterogeneous else np.full(n, 0.02)
    gamma = m * np.sqrt(np.outer(g0, g0))
    return CouplingMatrix(gamma=gamma, j=np.zeros((n, n)))


def make_stream(pulse, det, delay, period_ns=200.0, n_pulses=None, **meta):
    from qdcount.streams import PhotonStream

    pulse = np.asarray(pulse, dtype=np.int64)
    if n_pulses is None:
        n_pulses = int(pulse.max()) + 1 if pulse.size else 0
    meta = {"period_ns": period_ns, "n_pulses": n_pulses, **meta}
    return PhotonStream(
        pulse_index=pulse,
        detector=np.asarray(det, dtype=np.int8),
        delay_ps=np.asarray(delay, dtype=np.int64),
        meta=meta,
    )
