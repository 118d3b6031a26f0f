# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled streaming kernels.

Same entry points as ``_fallback``; projection rows are generated one at a
time into an O(D) scratch buffer, so no chunk of the projection matrix is
ever held.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, sin, exp, M_PI
from libc.stdint cimport uint64_t
from cpython.mem cimport PyMem_Malloc, PyMem_Free

cnp.import_array()

DEF COS = 0
DEF SINCOS = 1
DEF EXP = 2
DEF EXPEXP = 3
DEF LANES_PER_COORD = 8
DEF LANE_OMEGA = 0
DEF LANE_BIAS = 2

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 2.0 * M_PI


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = z ^ (z >> 30)
    z = z * 0xBF58476D1CE4E5B9ULL
    z = z ^ (z >> 27)
    z = z * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t row_key(uint64_t seed, uint64_t alpha) nogil:
    return mix64(seed ^ mix64(alpha * GOLDEN))


cdef inline double uniform(uint64_t key, uint64_t coord, int lane) nogil:
    cdef uint64_t counter = coord * LANES_PER_COORD + <uint64_t>(lane + 1)
    cdef uint64_t w = mix64(key + counter * GOLDEN)
    return (<double>(w >> 11) + 0.5) * INV_2_53


cdef inline void fill_row(uint64_t key, Py_ssize_t D, int lane, double* out) nogil:
    # coordinates 2k, 2k+1 share one Box-Muller draw from counter slot k
    cdef Py_ssize_t k
    cdef double radius, theta
    for k in range((D + 1) // 2):
        radius = sqrt(-2.0 * log(uniform(key, <uint64_t>k, lane)))
        theta = TWO_PI * uniform(key, <uint64_t>k, lane + 1)
        out[2 * k] = radius * cos(theta)
        if 2 * k + 1 < D:
            out[2 * k + 1] = radius * sin(theta)


cdef inline double dot(const double* a, const double* b, Py_ssize_t n) nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0
    for j in range(n):
        acc += a[j] * b[j]
    return acc


cdef double pairwise_sum(double* buf, Py_ssize_t n) nogil:
    cdef Py_ssize_t half
    cdef Py_ssize_t i
    cdef double acc
    if n <= 8:
        acc = 0.0
        for i in range(n):
            acc += buf[i]
        return acc
    half = n // 2
    return pairwise_sum(buf, half) + pairwise_sum(buf + half, n - half)


def normals(uint64_t seed, uint64_t alpha0, Py_ssize_t nrows, Py_ssize_t D, int lane=LANE_OMEGA):
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((nrows, D))
    cdef Py_ssize_t r
    cdef double* base = &out[0, 0] if nrows > 0 and D > 0 else NULL
    with nogil:
        for r in range(nrows):
            fill_row(row_key(seed, alpha0 + <uint64_t>r), D, lane, base + r * D)
    return out


def biases(uint64_t seed, uint64_t alpha0, Py_ssize_t nrows):
    cdef cnp.ndarray[double, ndim=1] out = np.empty(nrows)
    cdef Py_ssize_t r
    for r in range(nrows):
        out[r] = TWO_PI * uniform(row_key(seed, alpha0 + <uint64_t>r), 0, LANE_BIAS)
    return out


def n_out(int kind, Py_ssize_t Y):
    return 2 * Y if kind == SINCOS or kind == EXPEXP else Y


def stream_features(int kind, uint64_t seed, Py_ssize_t Y, double[::1] u):
    cdef Py_ssize_t D = u.shape[0]
    cdef Py_ssize_t a
    cdef cnp.ndarray[double, ndim=1] out_arr = np.empty(n_out(kind, Y))
    cdef double[::1] out = out_arr
    cdef double* omega = <double*>PyMem_Malloc(D * sizeof(double))
    cdef double sq, p, b
    cdef double rY = 1.0 / sqrt(<double>Y)
    cdef double rc = sqrt(2.0 / <double>Y)
    cdef double r2 = 1.0 / sqrt(2.0 * <double>Y)
    cdef uint64_t key
    if omega == NULL:
        raise MemoryError()
    try:
        with nogil:
            sq = dot(&u[0], &u[0], D)
            for a in range(Y):
                key = row_key(seed, <uint64_t>(a + 1))
                fill_row(key, D, LANE_OMEGA, omega)
                p = dot(omega, &u[0], D)
                if kind == COS:
                    b = TWO_PI * uniform(key, 0, LANE_BIAS)
                    out[a] = rc * cos(p + b)
                elif kind == SINCOS:
                    out[2 * a] = cos(p) * rY
                    out[2 * a + 1] = sin(p) * rY
                elif kind == EXP:
                    b = TWO_PI * uniform(key, 0, LANE_BIAS)
                    out[a] = exp(p + b - sq) * rY
                else:
                    out[2 * a] = exp(p - sq) * r2
                    out[2 * a + 1] = exp(-p - sq) * r2
    finally:
        PyMem_Free(omega)
    return out_arr


def stream_energy_grad(int kind, uint64_t seed, Py_ssize_t Y, double[::1] u, double[::1] T):
    cdef Py_ssize_t D = u.shape[0]
    cdef Py_ssize_t a, j
    cdef cnp.ndarray[double, ndim=1] z_arr = np.zeros(D)
    cdef double[::1] z = z_arr
    cdef double* omega = <double*>PyMem_Malloc(D * sizeof(double))
    cdef double sq, p, b, c, fp, fm
    cdef double s = 0.0
    cdef double rY = 1.0 / sqrt(<double>Y)
    cdef double rc = sqrt(2.0 / <double>Y)
    cdef double r2 = 1.0 / sqrt(2.0 * <double>Y)
    cdef uint64_t key
    if omega == NULL:
        raise MemoryError()
    try:
        with nogil:
            sq = dot(&u[0], &u[0], D)
            for a in range(Y):
                key = row_key(seed, <uint64_t>(a + 1))
                fill_row(key, D, LANE_OMEGA, omega)
                p = dot(omega, &u[0], D)
                if kind == COS:
                    b = TWO_PI * uniform(key, 0, LANE_BIAS)
                    s += rc * cos(p + b) * T[a]
                    c = -rc * sin(p + b) * T[a]
                elif kind == SINCOS:
                    s += rY * (cos(p) * T[2 * a] + sin(p) * T[2 * a + 1])
                    c = rY * (cos(p) * T[2 * a + 1] - sin(p) * T[2 * a])
                elif kind == EXP:
                    b = TWO_PI * uniform(key, 0, LANE_BIAS)
                    c = exp(p + b - sq) * rY * T[a]
                    s += c
                else:
                    fp = exp(p - sq) * r2 * T[2 * a]
                    fm = exp(-p - sq) * r2 * T[2 * a + 1]
                    s += fp + fm
                    c = fp - fm
                for j in range(D):
                    z[j] += c * omega[j]
            if kind == EXP or kind == EXPEXP:
                for j in range(D):
                    z[j] -= 2.0 * u[j] * s
    finally:
        PyMem_Free(omega)
    return s, z_arr


def stream_consolidate(int kind, uint64_t seed, Py_ssize_t Y, double[:, ::1] U,
                       double[::1] T, R=None, X=None):
    cdef Py_ssize_t K = U.shape[0]
    cdef Py_ssize_t D = U.shape[1]
    cdef Py_ssize_t a, mu, j, row
    cdef int m = 2 if kind == SINCOS or kind == EXPEXP else 1
    cdef bint with_R = R is not None
    cdef double[:, ::1] Rv
    cdef double[:, ::1] Xv
    if with_R:
        Rv = R
        Xv = X
    cdef double* omega = <double*>PyMem_Malloc(D * sizeof(double))
    cdef double* sq = <double*>PyMem_Malloc(K * sizeof(double))
    cdef double* f0 = <double*>PyMem_Malloc(K * sizeof(double))
    cdef double* f1 = <double*>PyMem_Malloc(K * sizeof(double))
    cdef double p, b
    cdef double rY = 1.0 / sqrt(<double>Y)
    cdef double rc = sqrt(2.0 / <double>Y)
    cdef double r2 = 1.0 / sqrt(2.0 * <double>Y)
    cdef uint64_t key
    if omega == NULL or sq == NULL or f0 == NULL or f1 == NULL:
        PyMem_Free(omega); PyMem_Free(sq); PyMem_Free(f0); PyMem_Free(f1)
        raise MemoryError()
    try:
        with nogil:
            for mu in range(K):
                sq[mu] = dot(&U[mu, 0], &U[mu, 0], D)
            for a in range(Y):
                key = row_key(seed, <uint64_t>(a + 1))
                fill_row(key, D, LANE_OMEGA, omega)
                if kind == COS or kind == EXP:
                    b = TWO_PI * uniform(key, 0, LANE_BIAS)
                for mu in range(K):
                    p = dot(omega, &U[mu, 0], D)
                    if kind == COS:
                        f0[mu] = rc * cos(p + b)
                    elif kind == SINCOS:
                        f0[mu] = cos(p) * rY
                        f1[mu] = sin(p) * rY
                    elif kind == EXP:
                        f0[mu] = exp(p + b - sq[mu]) * rY
                    else:
                        f0[mu] = exp(p - sq[mu]) * r2
                        f1[mu] = exp(-p - sq[mu]) * r2
                row = m * a
                T[row] += pairwise_sum(f0, K)
                if m == 2:
                    T[row + 1] += pairwise_sum(f1, K)
                if with_R:
                    for mu in range(K):
                        for j in range(D):
                            Rv[row, j] += f0[mu] * Xv[mu, j]
                            if m == 2:
                                Rv[row + 1, j] += f1[mu] * Xv[mu, j]
    finally:
        PyMem_Free(omega)
        PyMem_Free(sq)
        PyMem_Free(f0)
        PyMem_Free(f1)
