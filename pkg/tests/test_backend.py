import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadlab import _backend
from dyadlab import _pykernels as py

ck = pytest.importorskip("dyadlab._ckernels")

KINDS = [(py.KIND_ZERO, 0.0, 0), (py.KIND_HILBERT, 0.0, 0), (py.KIND_RIESZ, 0.0, 0), (py.KIND_RIESZ, 0.4, 1), (py.KIND_FRACINT, 0.5, 0)]


def points(rng, k, n):
    # coarse lattice so exact coincidences (r = 0) occur
    return rng.integers(0, 16, size=(k, n)) / 16.0


@given(st.integers(0, 2**31), st.integers(1, 2), st.sampled_from(KINDS), st.booleans())
def test_kernel_matrix_agrees(seed, n, kind, smooth):
    k, alpha, comp = kind
    if k == py.KIND_HILBERT and n != 1:
        n = 1
    comp = min(comp, n - 1)
    rng = np.random.default_rng(seed)
    xs, ys = points(rng, 23, n), points(rng, 31, n)
    a = py.kernel_matrix(xs, ys, k, alpha, comp, 0.1, 0.9, 0.25, smooth)
    b = ck.kernel_matrix(xs, ys, k, alpha, comp, 0.1, 0.9, 0.25, smooth)
    np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-12)


@given(st.integers(0, 2**31), st.integers(1, 2), st.floats(0.0, 0.9), st.sampled_from([None, 1.0, 2.5]), st.sampled_from([(), (3,)]))
def test_poisson_sums_agree(seed, n, alpha, m, extra):
    rng = np.random.default_rng(seed)
    c, y = rng.random((7, n)), points(rng, 40, n)
    sides = 2.0 ** -rng.integers(0, 5, 7)
    masses = rng.random((40,) + extra)
    a = py.poisson_sums(c, sides, y, masses, alpha, m or 0.0, m is None)
    b = ck.poisson_sums(c, sides, y, masses, alpha, m or 0.0, m is None)
    assert a.shape == b.shape
    np.testing.assert_allclose(b, a, rtol=1e-11)


@given(st.integers(0, 2**31), st.integers(1, 3), st.floats(0.05, 0.95))
def test_frac_potential_agrees(seed, n, alpha):
    rng = np.random.default_rng(seed)
    xs, ys = points(rng, 19, n), points(rng, 29, n)
    m = rng.random(29)
    np.testing.assert_allclose(ck.frac_potential(xs, ys, m, alpha), py.frac_potential(xs, ys, m, alpha), rtol=1e-11)


def test_truncation_profile_agrees():
    r = np.linspace(0, 2, 400).reshape(20, 20)
    for smooth in (True, False):
        a = py.truncation_profile(r, 0.1, 1.0, 0.25, smooth)
        b = ck.truncation_profile(r, 0.1, 1.0, 0.25, smooth)
        assert b.shape == r.shape
        np.testing.assert_allclose(b, a, atol=1e-15)


def test_env_forces_fallback():
    code = "from dyadlab import _backend; print(_backend.BACKEND)"
    env = dict(os.environ, DYADLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("DYADLAB_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"


def test_thread_count(monkeypatch):
    monkeypatch.setenv("DYADLAB_THREADS", "4")
    assert _backend.thread_count() == 4
    monkeypatch.setenv("DYADLAB_THREADS", "junk")
    assert _backend.thread_count() == 1
    monkeypatch.setenv("DYADLAB_THREADS", "-3")
    assert _backend.thread_count() == 1
