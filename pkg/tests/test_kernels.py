from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsdelab import _kernels_py, kernels

compiled = pytest.importorskip("bdsdelab._kernels")


def test_compiled_backend_is_selected_by_default():
    if os.environ.get("BDSDELAB_PURE_PYTHON", "") in ("", "0"):
        assert kernels.BACKEND == "cython"


def test_environment_variable_forces_fallback():
    env = dict(os.environ, BDSDELAB_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from bdsdelab import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 40), c=st.integers(1, 4), P=st.integers(1, 200), seed=st.integers(0, 2**31 - 1))
def test_backends_agree_1d(n, c, P, seed):
    rng = np.random.default_rng(seed)
    lo, hi = -3.0, 3.0
    h = (hi - lo) / (n - 1)
    fields = rng.normal(size=(c, n))
    pts = rng.uniform(-4.0, 4.0, size=P)
    a = _kernels_py.interp_1d(fields, lo, hi, h, pts)
    b = compiled.interp_1d(fields, lo, hi, h, pts)
    assert np.allclose(a, b, rtol=0, atol=1e-13)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 20), c=st.integers(1, 3), P=st.integers(1, 200), seed=st.integers(0, 2**31 - 1))
def test_backends_agree_2d(n, c, P, seed):
    rng = np.random.default_rng(seed)
    lo, hi = -2.0, 2.0
    h = (hi - lo) / (n - 1)
    fields = rng.normal(size=(c, n * n))
    pts = rng.uniform(-2.5, 2.5, size=(P, 2))
    a = _kernels_py.interp_2d(fields, lo, hi, h, n, pts)
    b = compiled.interp_2d(fields, lo, hi, h, n, pts)
    assert np.allclose(a, b, rtol=0, atol=1e-13)
