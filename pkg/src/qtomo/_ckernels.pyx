# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Signatures mirror ``qtomo._kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport cos, sin, sqrt
from libc.stdlib cimport calloc, malloc, free

cnp.import_array()

_threads = 1


def set_threads(int n):
    global _threads
    _threads = max(1, n)


def joint_photon_values(double[::1] x, double[::1] theta, double[::1] t_nodes,
                        double[::1] w_nodes, double kappa, int nmax):
    """Two-mode joint photon-number estimators for all (n, m) <= nmax.

    Returns a complex array of shape (N, nmax+1, nmax+1).
    """
    cdef Py_ssize_t nrec = x.shape[0]
    cdef Py_ssize_t nk = t_nodes.shape[0]
    cdef int size = nmax + 1
    out_np = np.zeros((nrec, size, size), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_np
    cdef double[::1] root = np.sqrt(kappa * np.asarray(t_nodes))
    cdef double[::1] base = np.asarray(w_nodes) * np.asarray(t_nodes) * kappa * kappa
    cdef Py_ssize_t i, k
    cdef int n, m
    cdef double c2, s2, ya, yb, re, im, phase, ra, ia
    cdef double *la
    cdef double *lb
    cdef double *acc
    cdef int nthreads = _threads
    with nogil:
        for i in prange(nrec, num_threads=nthreads, schedule='static'):
            la = <double *> malloc(size * sizeof(double))
            lb = <double *> malloc(size * sizeof(double))
            acc = <double *> calloc(2 * size * size, sizeof(double))
            c2 = cos(theta[i]) * cos(theta[i])
            s2 = 1.0 - c2
            for k in range(nk):
                phase = 2.0 * root[k] * x[i]
                re = base[k] * cos(phase)
                im = base[k] * sin(phase)
                ya = kappa * t_nodes[k] * c2
                yb = kappa * t_nodes[k] * s2
                la[0] = 1.0
                lb[0] = 1.0
                if size > 1:
                    la[1] = 1.0 - ya
                    lb[1] = 1.0 - yb
                for n in range(1, size - 1):
                    la[n + 1] = ((2 * n + 1 - ya) * la[n] - n * la[n - 1]) / (n + 1)
                    lb[n + 1] = ((2 * n + 1 - yb) * lb[n] - n * lb[n - 1]) / (n + 1)
                for n in range(size):
                    ra = re * la[n]
                    ia = im * la[n]
                    for m in range(size):
                        acc[2 * (n * size + m)] += ra * lb[m]
                        acc[2 * (n * size + m) + 1] += ia * lb[m]
            for n in range(size):
                for m in range(size):
                    out[i, n, m] = acc[2 * (n * size + m)] + 1j * acc[2 * (n * size + m) + 1]
            free(la)
            free(lb)
            free(acc)
    return out_np


def total_photon_values(double[::1] x, double[::1] t_nodes, double[:, ::1] weights,
                        double kappa):
    """Angle-free estimators sum_k weights[p, k] exp(2i sqrt(kappa t_k) x).

    Returns a complex array of shape (N, P).
    """
    cdef Py_ssize_t nrec = x.shape[0]
    cdef Py_ssize_t nk = t_nodes.shape[0]
    cdef Py_ssize_t npar = weights.shape[0]
    out_np = np.zeros((nrec, npar), dtype=np.complex128)
    # interleaved (re, im) view so the inner loop is contiguous real arithmetic
    cdef double[:, ::1] out = out_np.view(np.float64)
    cdef double[:, ::1] wt = np.ascontiguousarray(np.asarray(weights).T)
    cdef double[::1] root = np.sqrt(kappa * np.asarray(t_nodes))
    cdef Py_ssize_t i, k, p
    cdef double c, s, phase, w
    cdef int nthreads = _threads
    with nogil:
        for i in prange(nrec, num_threads=nthreads, schedule='static'):
            for k in range(nk):
                phase = 2.0 * root[k] * x[i]
                c = cos(phase)
                s = sin(phase)
                for p in range(npar):
                    w = wt[k, p]
                    out[i, 2 * p] += w * c
                    out[i, 2 * p + 1] += w * s
    return out_np


def trig_inverse_cdf(double[::1] u, double[::1] phi, double[:, ::1] cdf_re,
                     double[:, ::1] cdf_im, double[::1] grid):
    """Invert F(x|phi) = sum_d Re[exp(-i d phi) C_d(x)] tabulated on ``grid``.

    Binary search over grid cells, then linear interpolation inside the cell.
    """
    cdef Py_ssize_t nrec = u.shape[0]
    cdef Py_ssize_t ndeg = cdf_re.shape[0]
    cdef Py_ssize_t ng = grid.shape[0]
    out_np = np.empty(nrec, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef Py_ssize_t i, d, lo, hi, mid
    cdef double flo, fhi, fmid, target
    cdef double *cd
    cdef double *sd
    cdef int nthreads = _threads
    with nogil:
        for i in prange(nrec, num_threads=nthreads, schedule='static'):
            cd = <double *> malloc(ndeg * sizeof(double))
            sd = <double *> malloc(ndeg * sizeof(double))
            for d in range(ndeg):
                cd[d] = cos(d * phi[i])
                sd[d] = sin(d * phi[i])
            target = u[i]
            lo = 0
            hi = ng - 1
            flo = _cdf_at(lo, ndeg, cd, sd, cdf_re, cdf_im)
            fhi = _cdf_at(hi, ndeg, cd, sd, cdf_re, cdf_im)
            while hi - lo > 1:
                mid = (lo + hi) // 2
                fmid = _cdf_at(mid, ndeg, cd, sd, cdf_re, cdf_im)
                if fmid < target:
                    lo = mid
                    flo = fmid
                else:
                    hi = mid
                    fhi = fmid
            if fhi > flo:
                out[i] = grid[lo] + (target - flo) / (fhi - flo) * (grid[hi] - grid[lo])
            else:
                out[i] = grid[lo]
            free(cd)
            free(sd)
    return out_np


cdef inline double _cdf_at(Py_ssize_t g, Py_ssize_t ndeg, double *cd, double *sd,
                           double[:, ::1] cdf_re, double[:, ::1] cdf_im) noexcept nogil:
    # Re[e^{-i d phi} (a + i b)] = a cos(d phi) + b sin(d phi)
    cdef double acc = 0.0
    cdef Py_ssize_t d
    for d in range(ndeg):
        acc = acc + cdf_re[d, g] * cd[d] + cdf_im[d, g] * sd[d]
    return acc
