# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled likelihood kernels.

Mirrors ``_pykernels`` function for function; see that module for the
recursions.  Day indices are 0-based here.
"""
import numpy as np

from libc.math cimport exp, fabs, log, log1p, INFINITY


cdef inline void _expit_pair(double x, double* phi, double* one_minus) noexcept nogil:
    cdef double z
    if x >= 0.0:
        z = exp(-x)
        phi[0] = 1.0 / (1.0 + z)
        one_minus[0] = z / (1.0 + z)
    else:
        z = exp(x)
        phi[0] = z / (1.0 + z)
        one_minus[0] = 1.0 / (1.0 + z)


def open_core(const double[::1] beta, const double[::1] pi,
              const double[::1] phi0, double gamma_t, double gamma_a,
              const double[::1] capfail, const double[::1] nodet,
              const unsigned char[::1] resight, double s):
    cdef Py_ssize_t T = beta.shape[0]
    cdef Py_ssize_t G = pi.shape[0]
    cdef Py_ssize_t g, b, t, f, l
    cdef double S, C, x, z, A, phi, leave, u, pg, zg, p0 = 0.0
    cdef bint factored

    mix_arr = np.zeros((T, T), dtype=np.float64)
    zeta_arr = np.zeros(T, dtype=np.float64)
    R_arr = np.zeros(T, dtype=np.float64)
    W_arr = np.zeros((T, T), dtype=np.float64)
    E_arr = np.zeros((T, T), dtype=np.float64)
    cdef double[:, ::1] mix = mix_arr
    cdef double[::1] zeta = zeta_arr
    cdef double[::1] R = R_arr
    cdef double[:, ::1] W = W_arr
    cdef double[:, ::1] E = E_arr

    # exp(-logit phi) = exp(-phi0_g) * E[t, age]; only used while nothing
    # can overflow or underflow, otherwise every cell is exponentiated
    factored = (fabs(gamma_t) + fabs(gamma_a)) * T < 300.0
    for g in range(G):
        if fabs(phi0[g]) > 300.0:
            factored = False
    with nogil:
        if factored:
            for t in range(T - 1):
                for b in range(t + 1):
                    E[t, t - b] = exp(-(gamma_t * (t + 1) + gamma_a * (t - b + 1)))
        for g in range(G):
            pg = pi[g]
            zg = 0.0
            A = exp(-phi0[g])
            for b in range(T):
                S = 1.0
                C = 1.0
                for t in range(b, T):
                    C = C * capfail[t]
                    if resight[t]:
                        zeta[t] += pg * beta[b] * S * C
                    if t < T - 1:
                        if factored:
                            z = A * E[t, t - b]
                            phi = 1.0 / (1.0 + z)
                            leave = z * phi
                        else:
                            x = phi0[g] + gamma_t * (t + 1) + gamma_a * (t - b + 1)
                            _expit_pair(x, &phi, &leave)
                        R[t] = S * leave
                        S = S * phi
                    else:
                        R[t] = S
                    zg += beta[b] * R[t] * C
                W[b, T - 1] = R[T - 1]
                for l in range(T - 2, b - 1, -1):
                    W[b, l] = R[l] + nodet[l + 1] * W[b, l + 1]
            p0 += pg * zg
            for l in range(T):
                u = beta[0] * W[0, l]
                mix[0, l] += pg * u
                for f in range(1, l + 1):
                    u = beta[f] * W[f, l] + capfail[f - 1] * u
                    mix[f, l] += pg * u
        for t in range(T):
            zeta[t] = zeta[t] * s
    return mix_arr, p0, zeta_arr


def closed_core(const double[::1] pi, const double[::1] p,
                const long[::1] ks, long T):
    cdef Py_ssize_t G = pi.shape[0]
    cdef Py_ssize_t K = ks.shape[0]
    cdef Py_ssize_t g, i
    cdef double m, acc, v, lp, lq
    out_arr = np.empty(K, dtype=np.float64)
    terms_arr = np.empty(G, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] terms = terms_arr
    with nogil:
        for i in range(K):
            m = -INFINITY
            for g in range(G):
                lp = log(p[g])
                lq = log1p(-p[g])
                v = log(pi[g]) if pi[g] > 0.0 else -INFINITY
                if ks[i] > 0:
                    v = v + ks[i] * lp
                if T - ks[i] > 0:
                    v = v + (T - ks[i]) * lq
                terms[g] = v
                if v > m:
                    m = v
            if m == -INFINITY:
                out[i] = -INFINITY
                continue
            acc = 0.0
            for g in range(G):
                acc += exp(terms[g] - m)
            out[i] = m + log(acc)
    return out_arr
