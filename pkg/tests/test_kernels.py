import os
import subprocess
import sys

import numpy as np
import pytest

from recaudit import kernels
from recaudit.errors import SingularSystemError
from recaudit.mf import _csr


def _problem(seed, n=40, m=25, d=5):
    rng = np.random.default_rng(seed)
    mask = rng.random((n, m)) < 0.4
    u, i = np.nonzero(mask)
    r = rng.integers(1, 6, len(u)).astype(float)
    return u, i, r, rng.normal(size=(m, d)), rng.normal(size=(n, d))


def _reference_sweep(u, i, r, other, reg, n):
    out = np.zeros((n, other.shape[1]))
    for row in range(n):
        sel = u == row
        Y = other[i[sel]]
        out[row] = np.linalg.solve(Y.T @ Y + reg * np.eye(other.shape[1]), Y.T @ r[sel])
    return out


@pytest.mark.parametrize("impl", ["default", "python"])
def test_half_sweep_matches_direct_solves(impl):
    u, i, r, Q, _ = _problem(0)
    n = 40
    out = np.zeros((n, Q.shape[1]))
    kw = {"impl": kernels.PYTHON_KERNELS["als_half_sweep"]} if impl == "python" else {}
    kernels.als_half_sweep(*_csr(u, i, r, n), Q, 0.7, out, **kw)
    assert np.allclose(out, _reference_sweep(u, i, r, Q, 0.7, n), atol=1e-10)


def test_backends_agree():
    u, i, r, Q, P = _problem(1)
    ptr = _csr(u, i, r, 40)
    a, b = np.zeros((40, 5)), np.zeros((40, 5))
    kernels.als_half_sweep(*ptr, Q, 0.3, a)
    kernels.als_half_sweep(*ptr, Q, 0.3, b, impl=kernels.PYTHON_KERNELS["als_half_sweep"])
    assert np.allclose(a, b, atol=1e-12)
    e1 = kernels.squared_error(u, i, r, P, Q)
    e2 = kernels.squared_error(u, i, r, P, Q, impl=kernels.PYTHON_KERNELS["squared_error"])
    ref = float(np.sum((r - np.sum(P[u] * Q[i], axis=1)) ** 2))
    assert e1 == pytest.approx(ref, rel=1e-12)
    assert e2 == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("impl", [None, kernels.PYTHON_KERNELS["als_half_sweep"]])
def test_singular_row_reported(impl):
    # row 0 rates one item in 3 dimensions with no ridge
    indptr = np.array([0, 1])
    out = np.zeros((1, 3))
    with pytest.raises(SingularSystemError, match="row 0"):
        kernels.als_half_sweep(indptr, np.array([0]), np.array([3.0]), np.ones((1, 3)), 0.0, out,
                               impl=impl)


def test_empty_row_gets_zero_vector():
    out = np.ones((2, 2))
    kernels.als_half_sweep(np.array([0, 0, 1]), np.array([0]), np.array([2.0]),
                           np.array([[1.0, 0.0]]), 0.5, out)
    assert np.allclose(out[0], 0.0)
    assert out[1] == pytest.approx([2.0 / 1.5, 0.0])


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_fallback_chosen_at_import():
    code = "from recaudit import kernels, mf; print(kernels.BACKEND)"
    env = {**os.environ, "RECAUDIT_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"
