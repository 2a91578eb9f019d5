# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ALS kernels.

Row-major buffers are handed to Fortran BLAS/LAPACK as their transposes:
a C-contiguous (t, d) block is a column-major (d, t) matrix, so
``A = Y^T Y`` is ``dsyrk('U', 'N')`` on that view.
"""
from libc.string cimport memset
from scipy.linalg.cython_blas cimport dsyrk, dgemv
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs

import numpy as np
cimport numpy as cnp

cnp.import_array()


def als_half_sweep(const long long[::1] indptr,
                   const long long[::1] indices,
                   const double[::1] values,
                   const double[:, ::1] other,
                   double reg,
                   double[:, ::1] out):
    """Solve every row's ridge problem in place.

    Returns -1 on success, otherwise the index of the first row whose normal
    matrix was not positive definite.
    """
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef int d = <int>other.shape[1]
    cdef Py_ssize_t r, s, c, start, stop
    cdef int t, info = 0, one = 1, nrhs = 1
    cdef double alpha = 1.0, beta0 = 0.0
    cdef char uplo = b'U', trans = b'N'
    cdef long long max_t = 0

    for r in range(n_rows):
        if indptr[r + 1] - indptr[r] > max_t:
            max_t = indptr[r + 1] - indptr[r]

    cdef double[:, ::1] ybuf = np.empty((max(max_t, 1), d), dtype=np.float64)
    cdef double[::1] vbuf = np.empty(max(max_t, 1), dtype=np.float64)
    cdef double[:, ::1] gram = np.empty((d, d), dtype=np.float64)
    cdef double[::1] rhs = np.empty(d, dtype=np.float64)
    cdef int ldy = d

    with nogil:
        for r in range(n_rows):
            start = indptr[r]
            stop = indptr[r + 1]
            t = <int>(stop - start)
            for s in range(t):
                for c in range(d):
                    ybuf[s, c] = other[indices[start + s], c]
                vbuf[s] = values[start + s]
            memset(&gram[0, 0], 0, d * d * sizeof(double))
            if t > 0:
                dsyrk(&uplo, &trans, &d, &t, &alpha, &ybuf[0, 0], &ldy, &beta0, &gram[0, 0], &d)
                dgemv(&trans, &d, &t, &alpha, &ybuf[0, 0], &ldy, &vbuf[0], &one, &beta0, &rhs[0], &one)
            else:
                for c in range(d):
                    rhs[c] = 0.0
            for c in range(d):
                gram[c, c] += reg
            dpotrf(&uplo, &d, &gram[0, 0], &d, &info)
            if info != 0:
                with gil:
                    return r
            dpotrs(&uplo, &d, &nrhs, &gram[0, 0], &d, &rhs[0], &d, &info)
            for c in range(d):
                out[r, c] = rhs[c]
    return -1


def squared_error(const long long[::1] rows,
                  const long long[::1] cols,
                  const double[::1] values,
                  const double[:, ::1] left,
                  const double[:, ::1] right):
    """Sum of (value - left[row] . right[col])^2 over observed entries."""
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t d = left.shape[1]
    cdef Py_ssize_t k, c
    cdef double acc = 0.0, dot, err
    with nogil:
        for k in range(n):
            dot = 0.0
            for c in range(d):
                dot = dot + left[rows[k], c] * right[cols[k], c]
            err = values[k] - dot
            acc = acc + err * err
    return acc
