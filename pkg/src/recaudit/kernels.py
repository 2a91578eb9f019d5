"""Hot loops of matrix-factorization training.

The compiled extension ``recaudit._kernels`` is used when it was built and
``RECAUDIT_PURE_PYTHON`` is unset; otherwise the numpy implementations below
run.  Both backends expose the same two functions and agree to rounding.
"""
from __future__ import annotations

import os

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import SingularSystemError

_CHUNK = 65536


def _als_half_sweep_py(indptr, indices, values, other, reg, out) -> int:
    d = other.shape[1]
    ridge = reg * np.eye(d)
    for r in range(len(indptr) - 1):
        lo, hi = indptr[r], indptr[r + 1]
        y = other[indices[lo:hi]]
        gram = y.T @ y + ridge
        try:
            factor = cho_factor(gram, lower=False, check_finite=False)
        except LinAlgError:
            return r
        if np.any(np.diag(factor[0]) <= 0):
            return r
        out[r] = cho_solve(factor, y.T @ values[lo:hi], check_finite=False)
    return -1


def _squared_error_py(rows, cols, values, left, right) -> float:
    acc = 0.0
    for lo in range(0, len(rows), _CHUNK):
        sl = slice(lo, lo + _CHUNK)
        pred = np.einsum("ij,ij->i", left[rows[sl]], right[cols[sl]])
        err = values[sl] - pred
        acc += float(err @ err)
    return acc


def _load_backend():
    if os.environ.get("RECAUDIT_PURE_PYTHON"):
        return "python", _als_half_sweep_py, _squared_error_py
    try:
        from . import _kernels
    except ImportError:
        return "python", _als_half_sweep_py, _squared_error_py
    return "cython", _kernels.als_half_sweep, _kernels.squared_error


BACKEND, _als_impl, _sqerr_impl = _load_backend()

PYTHON_KERNELS = {"als_half_sweep": _als_half_sweep_py, "squared_error": _squared_error_py}


def _prep(indptr, indices, values):
    return (
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(values, dtype=np.float64),
    )


def als_half_sweep(indptr, indices, values, other, reg: float, out: np.ndarray, *, impl=None) -> None:
    """Overwrite ``out[r]`` with the ridge solution for CSR row ``r``.

    Row ``r`` solves ``min_x sum_k (values[k] - x . other[indices[k]])^2 + reg |x|^2``
    over ``k in indptr[r]:indptr[r+1]``.
    """
    indptr, indices, values = _prep(indptr, indices, values)
    other = np.ascontiguousarray(other, dtype=np.float64)
    if not (out.flags.c_contiguous and out.dtype == np.float64):
        raise TypeError("out must be a C-contiguous float64 array")
    bad = (impl or _als_impl)(indptr, indices, values, other, float(reg), out)
    if bad >= 0:
        raise SingularSystemError(
            f"normal matrix of row {bad} is not positive definite; use reg > 0"
        )


def squared_error(rows, cols, values, left, right, *, impl=None) -> float:
    rows, cols, values = _prep(rows, cols, values)
    left = np.ascontiguousarray(left, dtype=np.float64)
    right = np.ascontiguousarray(right, dtype=np.float64)
    return float((impl or _sqerr_impl)(rows, cols, values, left, right))
