# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels.

Drop-in replacements for the functions in ``roar._pykernels``. All arrays are
float64; weight matrices are (fan_in, fan_out).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt
from scipy.linalg.cython_blas cimport ddot, dgemm

cnp.import_array()


cdef void _gemm_rm(const double[:, ::1] A, const double[:, ::1] B, double[:, ::1] C,
                   bint trans_a, bint trans_b, double beta) noexcept nogil:
    # Row-major C = op(A) @ op(B) + beta*C via column-major BLAS: C^T = op(B)^T op(A)^T.
    cdef int m = C.shape[1], n = C.shape[0]
    cdef int k = A.shape[0] if trans_a else A.shape[1]
    cdef int lda = A.shape[1], ldb = B.shape[1], ldc = C.shape[1]
    cdef double alpha = 1.0
    cdef char ta = b"T" if trans_b else b"N"
    cdef char tb = b"T" if trans_a else b"N"
    if m == 0 or n == 0:
        return
    dgemm(&ta, &tb, &m, &n, &k, &alpha, <double*> &B[0, 0], &ldb,
          <double*> &A[0, 0], &lda, &beta, &C[0, 0], &ldc)


def mlp_forward(X, Ws, bs):
    cdef Py_ssize_t n_layers = len(Ws), layer, i, j, n, fout
    cdef double[:, ::1] a = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] z
    cdef const double[::1] b
    acts = [np.asarray(a)]
    n = a.shape[0]
    for layer in range(n_layers):
        W = np.ascontiguousarray(Ws[layer], dtype=np.float64)
        b = np.ascontiguousarray(bs[layer], dtype=np.float64)
        fout = W.shape[1]
        z_arr = np.empty((n, fout), dtype=np.float64)
        z = z_arr
        with nogil:
            for i in range(n):
                for j in range(fout):
                    z[i, j] = b[j]
        _gemm_rm(a, W, z, False, False, 1.0)
        if layer != n_layers - 1:
            with nogil:
                for i in range(n):
                    for j in range(fout):
                        if z[i, j] < 0.0:
                            z[i, j] = 0.0
        acts.append(z_arr)
        a = z
    return acts


def mlp_backward(acts, Ws, dout):
    cdef Py_ssize_t n_layers = len(Ws), layer, i, j, k, n, fin, fout
    cdef double[:, ::1] delta = np.ascontiguousarray(dout, dtype=np.float64)
    cdef double[:, ::1] A
    cdef double[:, ::1] W
    cdef double[:, ::1] prev
    cdef double[::1] db
    dWs = [None] * n_layers
    dbs = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        A = acts[layer]
        W = np.ascontiguousarray(Ws[layer], dtype=np.float64)
        n = A.shape[0]
        fin = W.shape[0]
        fout = W.shape[1]
        dW_arr = np.empty((fin, fout), dtype=np.float64)
        db_arr = np.zeros(fout, dtype=np.float64)
        db = db_arr
        _gemm_rm(A, delta, dW_arr, True, False, 0.0)
        with nogil:
            for i in range(n):
                for j in range(fout):
                    db[j] += delta[i, j]
        dWs[layer] = dW_arr
        dbs[layer] = db_arr
        if layer > 0:
            prev_arr = np.empty((n, fin), dtype=np.float64)
            prev = prev_arr
            _gemm_rm(delta, W, prev, False, True, 0.0)
            with nogil:
                for i in range(n):
                    for k in range(fin):
                        if A[i, k] <= 0.0:
                            prev[i, k] = 0.0
            delta = prev
    return dWs, dbs


def convolve_full(x, h):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] hr = np.ascontiguousarray(np.asarray(h, dtype=np.float64)[::-1])
    cdef Py_ssize_t nx = xv.shape[0], nh = hr.shape[0], k, lo, hi
    out_arr = np.zeros(nx + nh - 1 if nx and nh else 0, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef int n, one = 1
    if nx == 0 or nh == 0:
        return out_arr
    with nogil:
        # out[k] = sum_j x[k - j] h[j] = dot(x[lo:hi], reversed(h)[...])
        for k in range(nx + nh - 1):
            lo = k - nh + 1 if k >= nh - 1 else 0
            hi = k + 1 if k < nx else nx
            n = <int> (hi - lo)
            out[k] = ddot(&n, <double*> &xv[lo], &one, <double*> &hr[nh - 1 - (k - lo)], &one)
    return out_arr


def linear_resample(x, Py_ssize_t out_len, double step):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], i, i0
    out_arr = np.empty(out_len, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double pos, frac
    with nogil:
        for i in range(out_len):
            pos = i * step
            i0 = <Py_ssize_t> floor(pos)
            if i0 >= n - 1:
                out[i] = xv[n - 1]
            else:
                frac = pos - i0
                out[i] = (xv[i0 + 1] - xv[i0]) * frac + xv[i0]
    return out_arr


cdef inline double _dot4(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t k = 0
    while k + 4 <= n:
        s0 += a[k] * b[k]
        s1 += a[k + 1] * b[k + 1]
        s2 += a[k + 2] * b[k + 2]
        s3 += a[k + 3] * b[k + 3]
        k += 4
    while k < n:
        s0 += a[k] * b[k]
        k += 1
    return (s0 + s1) + (s2 + s3)


def ola_stretch(x, Py_ssize_t out_len, double analysis_hop, Py_ssize_t synthesis_hop, window,
                Py_ssize_t tolerance=0):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(window, dtype=np.float64)
    cdef Py_ssize_t win_len = w.shape[0], half = win_len // 2, tol = tolerance
    cdef Py_ssize_t n_frames = (out_len + half) // synthesis_hop + 2
    cdef Py_ssize_t nx = xv.shape[0], m, a, s, k, d, f0, t0, best, prev = 0
    cdef Py_ssize_t pad = half + tol
    buf_len = n_frames * synthesis_hop + win_len
    src_len = pad + nx + <Py_ssize_t> (n_frames * analysis_hop) + 2 * tol + win_len + synthesis_hop + 2
    src_arr = np.zeros(src_len, dtype=np.float64)
    src_arr[pad:pad + nx] = xv
    out_arr = np.zeros(buf_len, dtype=np.float64)
    wsum_arr = np.zeros(buf_len, dtype=np.float64)
    cdef const double[::1] src = src_arr
    cdef double[::1] out = out_arr
    cdef double[::1] wsum = wsum_arr
    cdef double dot, energy, score, best_score
    with nogil:
        for m in range(n_frames):
            a = <Py_ssize_t> floor(m * analysis_hop + 0.5)
            if m > 0 and tol > 0:
                t0 = pad + prev + synthesis_hop - half
                best = 0
                best_score = 0.0
                f0 = pad + a - tol - half
                energy = 0.0
                for k in range(win_len):
                    energy = energy + src[f0 + k] * src[f0 + k]
                for d in range(2 * tol + 1):
                    f0 = pad + a - tol - half + d
                    if d > 0:
                        # slide the energy window one sample right
                        energy = energy - src[f0 - 1] * src[f0 - 1] + src[f0 + win_len - 1] * src[f0 + win_len - 1]
                    dot = _dot4(&src[f0], &src[t0], win_len)
                    score = dot / sqrt(energy) if energy > 1e-300 else 0.0
                    if d == 0 or score > best_score:
                        best = d
                        best_score = score
                a = a - tol + best
            f0 = pad + a - half
            s = m * synthesis_hop
            for k in range(win_len):
                out[s + k] += src[f0 + k] * w[k]
                wsum[s + k] += w[k]
            prev = a
        for k in range(out_len):
            if wsum[half + k] > 1e-8:
                out[half + k] = out[half + k] / wsum[half + k]
            else:
                out[half + k] = 0.0
    return out_arr[half:half + out_len].copy()
