import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latgauss import kernels
from latgauss.lattice import Basis

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


def _gs(rows):
    gs = Basis(rows).gs
    return gs.mu, gs.norms2


def _sorted(Z, P):
    order = np.lexsort(Z.T[::-1])
    return Z[order], P[order]


lattices = st.lists(st.integers(-5, 5), min_size=9, max_size=9).filter(
    lambda e: abs(np.linalg.det(np.array(e, float).reshape(3, 3))) > 0.5
)


@needs_numba
@settings(max_examples=30, deadline=None)
@given(lattices, st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(1.0, 60.0))
def test_enum_points_backends_agree(e, tau, r2):
    mu, b2 = _gs(np.array(e).reshape(3, 3).tolist())
    tau = np.array(tau)
    Za, Pa = _sorted(*kernels.enum_points_numba(mu, b2, tau, r2, cap=4))
    Zb, Pb = _sorted(*kernels.enum_points_numpy(mu, b2, tau, r2))
    assert np.array_equal(Za, Zb)
    assert np.allclose(Pa, Pb)
    assert np.all(Pa <= r2 * (1 + 1e-12))


@needs_numba
@settings(max_examples=30, deadline=None)
@given(lattices, st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.booleans())
def test_enum_closest_backends_agree(e, tau, exclude_zero):
    mu, b2 = _gs(np.array(e).reshape(3, 3).tolist())
    tau = np.zeros(3) if exclude_zero else np.array(tau)
    r2 = float(b2.sum())
    a = kernels.enum_closest_numba(mu, b2, tau, r2, exclude_zero)
    b = kernels.enum_closest_numpy(mu, b2, tau, r2, exclude_zero)
    assert (a is None) == (b is None)
    if a is not None:
        assert a[1] == pytest.approx(b[1], rel=1e-12, abs=1e-12)
        assert a[0].tolist() == b[0].tolist()


@needs_numba
@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 40.0), st.integers(0, 2**32 - 1))
def test_inverse_cdf_backends_agree(s, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(0, 5, 500)
    u = rng.random(500)
    hw = 10 * s + 1
    assert np.array_equal(kernels.inverse_cdf_1d_numba(c, s, u, hw), kernels.inverse_cdf_1d_numpy(c, s, u, hw))


def test_inverse_cdf_small_uniform_hits_nearest_integer():
    c = np.array([0.2, -0.2, 3.49, 7.51])
    out = kernels.inverse_cdf_1d(c, 0.5, np.zeros(4), 6.0)
    assert out.tolist() == [0, 0, 3, 8]


def test_enum_points_empty_ball():
    mu, b2 = _gs([[1, 0], [0, 1]])
    Z, P = kernels.enum_points(mu, b2, np.array([0.5, 0.5]), 0.1)
    assert len(Z) == 0


def test_environment_switch_selects_numpy():
    env = dict(os.environ, LATGAUSS_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from latgauss import kernels; print(kernels.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"
