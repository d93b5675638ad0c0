# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path-integral kernel for the stochastic Monte Carlo oracle."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()


def damped_path_sums(
    const double[:, :, ::1] increments,
    const long long[:, ::1] modes,
    const double complex[:, ::1] amp,
    const double complex[:, ::1] step,
    double sigma,
    double dt,
):
    """Trapezoid sums of ``sum_k amp[p,k] step[p,k]**j exp(i sigma k.w_b(t_j))``.

    increments : (paths, steps, n) Wiener increments
    modes      : (n_modes, n) integer modes
    amp        : (points, n_modes) complex amplitudes at t = 0
    step       : (points, n_modes) per-step factors exp((i k.g - mu) dt)

    Returns a (paths, points) complex array.  Drift factors are shared by
    all paths; the noise phase of each path is advanced multiplicatively
    from exp(i sigma dW_d), and the innermost loops run over paths.
    """
    cdef Py_ssize_t P = increments.shape[0]
    cdef Py_ssize_t N = increments.shape[1]
    cdef Py_ssize_t n = increments.shape[2]
    cdef Py_ssize_t nk = modes.shape[0]
    cdef Py_ssize_t npts = amp.shape[0]
    cdef Py_ssize_t b, j, d, k, p, m, q
    cdef long long K = 0
    for k in range(nk):
        for d in range(n):
            if modes[k, d] > K:
                K = modes[k, d]
            if -modes[k, d] > K:
                K = -modes[k, d]
    cdef Py_ssize_t width = 2 * K + 1

    cdef double[:, ::1] cr = np.empty((nk, npts))
    cdef double[:, ::1] ci = np.empty((nk, npts))
    cdef double[:, ::1] sr = np.empty((nk, npts))
    cdef double[:, ::1] si = np.empty((nk, npts))
    cdef double[:, ::1] accr = np.zeros((npts, P))
    cdef double[:, ::1] acci = np.zeros((npts, P))
    cdef double[:, ::1] zr = np.ones((nk, P))
    cdef double[:, ::1] zi = np.zeros((nk, P))
    cdef double[:, :, ::1] pr = np.empty((n, width, P))
    cdef double[:, :, ::1] pi = np.empty((n, width, P))
    cdef double[::1] ur = np.empty(P)
    cdef double[::1] ui = np.empty(P)
    cdef double x, x2, a, bb, w, tr, ti, cpr, cpi

    for k in range(nk):
        for p in range(npts):
            sr[k, p] = step[p, k].real
            si[k, p] = step[p, k].imag
            cr[k, p] = amp[p, k].real
            ci[k, p] = amp[p, k].imag

    with nogil:
        # t = 0 endpoint: every noise phase is 1
        for k in range(nk):
            for p in range(npts):
                for b in range(P):
                    accr[p, b] += 0.5 * cr[k, p]
                    acci[p, b] += 0.5 * ci[k, p]
        for d in range(n):
            for b in range(P):
                pr[d, K, b] = 1.0
                pi[d, K, b] = 0.0
        for j in range(N):
            w = 1.0 if j < N - 1 else 0.5
            for k in range(nk):
                for p in range(npts):
                    tr = cr[k, p] * sr[k, p] - ci[k, p] * si[k, p]
                    ci[k, p] = cr[k, p] * si[k, p] + ci[k, p] * sr[k, p]
                    cr[k, p] = tr
            for d in range(n):
                # Taylor polynomials exact to rounding for |x| < 0.5; libm elsewhere
                for b in range(P):
                    x = sigma * increments[b, j, d]
                    x2 = x * x
                    ur[b] = 1.0 + x2 * (-1.0 / 2 + x2 * (1.0 / 24 + x2 * (-1.0 / 720 + x2 * (1.0 / 40320
                            + x2 * (-1.0 / 3628800 + x2 * (1.0 / 479001600 + x2 * (-1.0 / 87178291200.0)))))))
                    ui[b] = x * (1.0 + x2 * (-1.0 / 6 + x2 * (1.0 / 120 + x2 * (-1.0 / 5040 + x2 * (1.0 / 362880
                            + x2 * (-1.0 / 39916800 + x2 * (1.0 / 6227020800.0 + x2 * (-1.0 / 1307674368000.0))))))))
                for b in range(P):
                    x = sigma * increments[b, j, d]
                    if fabs(x) >= 0.5:
                        ur[b] = cos(x)
                        ui[b] = sin(x)
                for m in range(1, K + 1):
                    for b in range(P):
                        a = pr[d, K + m - 1, b]
                        bb = pi[d, K + m - 1, b]
                        pr[d, K + m, b] = a * ur[b] - bb * ui[b]
                        pi[d, K + m, b] = a * ui[b] + bb * ur[b]
                        pr[d, K - m, b] = pr[d, K + m, b]
                        pi[d, K - m, b] = -pi[d, K + m, b]
            for k in range(nk):
                for d in range(n):
                    q = K + modes[k, d]
                    for b in range(P):
                        a = zr[k, b] * pr[d, q, b] - zi[k, b] * pi[d, q, b]
                        zi[k, b] = zr[k, b] * pi[d, q, b] + zi[k, b] * pr[d, q, b]
                        zr[k, b] = a
                for p in range(npts):
                    cpr = w * cr[k, p]
                    cpi = w * ci[k, p]
                    for b in range(P):
                        accr[p, b] += cpr * zr[k, b] - cpi * zi[k, b]
                        acci[p, b] += cpr * zi[k, b] + cpi * zr[k, b]

    out = np.empty((P, npts), dtype=np.complex128)
    out.real = np.asarray(accr).T
    out.imag = np.asarray(acci).T
    return dt * out
