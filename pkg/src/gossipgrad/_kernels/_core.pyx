# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernel (BLAS-backed round loop).

Same contract as the numpy fallback in _python.py; gossip multiplies exploit
the symmetry of the mixing matrix (guaranteed by construction).
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm, dgemv

KERNEL_NAME = "compiled"

ALGO_DSGD = 0
ALGO_DATSGD = 1
SCHED_CONSTANT = 0
SCHED_LINEAR = 1
SCHED_FIXED_GAMMA = 2

cdef int _ALGO_DATSGD = 1
cdef int _SCHED_CONSTANT = 0
cdef int _SCHED_LINEAR = 1


cdef void _machine_grads(const double[:, :, ::1] design, const double[:, ::1] targets,
                         double[:, ::1] Y, double[:, ::1] G,
                         double *resid) noexcept nogil:
    # G[:, i] = A_i^T (A_i y_i - b_i).  Row-major A_i seen column-major is
    # A_i^T, so trans='T' applies A_i and trans='N' applies A_i^T.
    cdef int M = <int>Y.shape[1]
    cdef int d = <int>Y.shape[0]
    cdef int i, j
    cdef int inc_one = 1
    cdef double one = 1.0, zero = 0.0
    cdef char tr_t = b'T', tr_n = b'N'
    for i in range(M):
        dgemv(&tr_t, &d, &d, &one, <double *>&design[i, 0, 0], &d,
              &Y[0, i], &M, &zero, resid, &inc_one)
        for j in range(d):
            resid[j] -= targets[i, j]
        dgemv(&tr_n, &d, &d, &one, <double *>&design[i, 0, 0], &d,
              resid, &inc_one, &zero, &G[0, i], &M)


cdef void _gossip(double[:, ::1] src, const double[:, ::1] P, double[:, ::1] dst) noexcept nogil:
    # dst = src @ P via dst^T = P @ src^T in column-major; uses P = P^T.
    cdef int M = <int>src.shape[1]
    cdef int d = <int>src.shape[0]
    cdef double one = 1.0, zero = 0.0
    cdef char tr_n = b'N'
    dgemm(&tr_n, &tr_n, &M, &d, &M, &one, <double *>&P[0, 0], &M,
          &src[0, 0], &M, &zero, &dst[0, 0], &M)


cdef double _spread(double[:, ::1] Y, double *mean) noexcept nogil:
    cdef int d = <int>Y.shape[0], M = <int>Y.shape[1]
    cdef int i, j
    cdef double s, diff, total = 0.0
    for j in range(d):
        s = 0.0
        for i in range(M):
            s += Y[j, i]
        mean[j] = s / M
    for j in range(d):
        for i in range(M):
            diff = Y[j, i] - mean[j]
            total += diff * diff
    return total / M


cdef double _node_error(double[:, ::1] Y, const double[::1] ref) noexcept nogil:
    cdef int d = <int>Y.shape[0], M = <int>Y.shape[1]
    cdef int i, j
    cdef double diff, total = 0.0
    for j in range(d):
        for i in range(M):
            diff = Y[j, i] - ref[j]
            total += diff * diff
    return total / M


cdef double _loss_at(const double[:, :, ::1] design, const double[:, ::1] targets,
                     double *point, double *resid) noexcept nogil:
    cdef int M = <int>design.shape[0], d = <int>design.shape[1]
    cdef int i, j
    cdef int inc_one = 1
    cdef double one = 1.0, zero = 0.0, r, total = 0.0
    cdef char tr_t = b'T'
    for i in range(M):
        dgemv(&tr_t, &d, &d, &one, <double *>&design[i, 0, 0], &d,
              point, &inc_one, &zero, resid, &inc_one)
        for j in range(d):
            r = resid[j] - targets[i, j]
            total += r * r
    return 0.5 * total / M


cdef bint _exceeds(double[:, ::1] Y, double limit) noexcept nogil:
    cdef int d = <int>Y.shape[0], M = <int>Y.shape[1]
    cdef int i, j
    cdef double v
    for j in range(d):
        for i in range(M):
            v = Y[j, i]
            if v != v or v > limit or v < -limit:
                return True
    return False


def run_rounds(int algo, int sched, double gamma, double eta,
               const double[:, :, ::1] design, const double[:, ::1] targets,
               const double[:, :, ::1] gossip_stack,
               double[:, ::1] W, X_obj,
               long t_begin, long t_end,
               noise_obj,
               const double[::1] x_star, double f_star,
               const cnp.int64_t[::1] record_rounds, long rec_pos,
               double[:, ::1] trace, double div_limit):
    cdef int d = <int>W.shape[0]
    cdef int M = <int>W.shape[1]
    cdef long period = gossip_stack.shape[0]
    cdef long n_rec = record_rounds.shape[0]
    cdef bint has_x = X_obj is not None
    cdef bint has_noise = noise_obj is not None
    cdef double[:, ::1] X = X_obj if has_x else W
    cdef const double[:, :, ::1] noise = noise_obj if has_noise \
        else np.empty((0, d, M))

    G_arr = np.empty((d, M))
    half_arr = np.empty((d, M))
    xhalf_arr = np.empty((d, M))
    out_arr = np.empty((d, M))
    work_arr = np.empty(2 * d)
    cdef double[:, ::1] G = G_arr
    cdef double[:, ::1] half = half_arr
    cdef double[:, ::1] xhalf = xhalf_arr
    cdef double[:, ::1] out = out_arr
    cdef double[::1] work = work_arr

    cdef long t, k
    cdef int i, j
    cdef double step, delta, loss
    cdef const double[:, ::1] P
    cdef double[:, ::1] Y
    cdef long diverged = -1

    with nogil:
        for t in range(t_begin, t_end):
            P = gossip_stack[(t - 1) % period]
            Y = X if algo == _ALGO_DATSGD else W
            _machine_grads(design, targets, Y, G, &work[0])
            if has_noise:
                k = t - t_begin
                for j in range(d):
                    for i in range(M):
                        G[j, i] += noise[k, j, i]

            if rec_pos < n_rec and record_rounds[rec_pos] == t:
                trace[rec_pos, 0] = _spread(Y, &work[0])
                loss = _loss_at(design, targets, &work[0], &work[d])
                trace[rec_pos, 1] = _spread(W, &work[d])
                trace[rec_pos, 2] = _spread(G, &work[d])
                trace[rec_pos, 3] = loss
                trace[rec_pos, 4] = loss - f_star
                trace[rec_pos, 5] = _node_error(Y, x_star)
                trace[rec_pos, 6] = _node_error(W, x_star)
                rec_pos += 1

            if sched == _SCHED_LINEAR:
                step = eta * t
                delta = 2.0 / (t + 1)
            elif sched == _SCHED_CONSTANT:
                step = eta
                delta = 1.0 / t
            else:
                step = eta
                delta = 1.0 - gamma

            if algo == _ALGO_DATSGD:
                for j in range(d):
                    for i in range(M):
                        half[j, i] = W[j, i] - step * G[j, i]
                        xhalf[j, i] = (1.0 - delta) * X[j, i] + delta * half[j, i]
                _gossip(half, P, out)
                W[:, :] = out
                _gossip(xhalf, P, out)
                X[:, :] = out
                if _exceeds(W, div_limit) or _exceeds(X, div_limit):
                    diverged = t
                    break
            else:
                for j in range(d):
                    for i in range(M):
                        half[j, i] = W[j, i] - eta * G[j, i]
                _gossip(half, P, out)
                W[:, :] = out
                if _exceeds(W, div_limit):
                    diverged = t
                    break

    return rec_pos, diverged
