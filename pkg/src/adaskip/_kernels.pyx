# cython: language_level=3
"""Compiled network kernels: BLAS-backed forward and fused loss+gradient.

Performs the same arithmetic as _kernels_np.py with the per-op dispatch done
in C, the matrix products routed to dgemm (always beta=0, which keeps the
BLAS on its fast write-only path), and the bias/relu/residual element passes
fused into single branch-free loops.  Selected automatically by kernels.py
when the extension is built.
"""

import numpy as np

from libc.math cimport exp, log

from scipy.linalg.cython_blas cimport dgemm

from ._ops import OP_AFFINE as _OP_AFFINE

NAME = "cython"

cdef int AFFINE = _OP_AFFINE


cdef void _gemm_rm(bint ta, bint tb,
                   double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                   double alpha) noexcept nogil:
    # C = alpha * opA(A) @ opB(B), everything row-major.
    # Row-major GEMM via the column-major identity C^T = opB(B)^T @ opA(A)^T.
    cdef int r = C.shape[0]
    cdef int c = C.shape[1]
    cdef int k = A.shape[0] if ta else A.shape[1]
    cdef char fa = b'T' if tb else b'N'
    cdef char fb = b'T' if ta else b'N'
    cdef int lda = B.shape[1]
    cdef int ldb = A.shape[1]
    cdef int ldc = c
    cdef double beta = 0.0
    dgemm(&fa, &fb, &c, &r, &k, &alpha,
          &B[0, 0], &lda, &A[0, 0], &ldb, &beta, &C[0, 0], &ldc)


cdef void _add_bias(double[:, ::1] h, double[::1] b) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(h.shape[0]):
        for j in range(h.shape[1]):
            h[i, j] += b[j]


cdef void _bias_relu(double[:, ::1] z, double[::1] b) noexcept nogil:
    # z = relu(z + b) in one pass; NaN passes through like np.maximum.
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            v = z[i, j] + b[j]
            z[i, j] = 0.0 if v < 0.0 else v


cdef void _residual_bias(double[:, ::1] out, double[:, ::1] h,
                         double[::1] b) noexcept nogil:
    # out = (h + out) + b, associated exactly like h + z @ w2 + b2.
    cdef Py_ssize_t i, j
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] = (h[i, j] + out[i, j]) + b[j]


cdef void _add_into(double[:, ::1] out, double[:, ::1] d) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] += d[i, j]


cdef void _relu_bwd(double[:, ::1] dz, double[:, ::1] a) noexcept nogil:
    # Zero the gradient wherever the activation was clamped (a == 0).
    cdef Py_ssize_t i, j
    for i in range(dz.shape[0]):
        for j in range(dz.shape[1]):
            dz[i, j] = dz[i, j] if a[i, j] > 0.0 else 0.0


cdef void _colsum(double[:, ::1] a, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j
    for j in range(out.shape[0]):
        out[j] = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            out[j] += a[i, j]


def forward(program, params, x, mask):
    """Run the program on a batch, returning logits of shape (n, classes)."""
    cdef int[:, ::1] prog = program
    cdef unsigned char[::1] m = mask
    cdef Py_ssize_t t
    cdef int kind
    h = x
    for t in range(prog.shape[0]):
        kind = prog[t, 0]
        if kind == AFFINE:
            w = params[prog[t, 1]]
            out = np.empty((h.shape[0], w.shape[1]))
            _gemm_rm(False, False, h, w, out, 1.0)
            _add_bias(out, params[prog[t, 2]])
            h = out
        elif m[prog[t, 5]]:
            w1 = params[prog[t, 1]]
            z = np.empty((h.shape[0], w1.shape[1]))
            _gemm_rm(False, False, h, w1, z, 1.0)
            _bias_relu(z, params[prog[t, 2]])
            out = np.empty((h.shape[0], w1.shape[1]))
            _gemm_rm(False, False, z, params[prog[t, 3]], out, 1.0)
            _residual_bias(out, h, params[prog[t, 4]])
            h = out
    return h


def loss_grad(program, params, x, labels, mask):
    """Mean cross-entropy over the batch plus gradients for every parameter."""
    cdef int[:, ::1] prog = program
    cdef unsigned char[::1] m = mask
    cdef int[::1] lab = labels
    cdef Py_ssize_t t, i, j
    cdef int kind
    cdef Py_ssize_t n_ops = prog.shape[0]
    cdef Py_ssize_t n = x.shape[0]

    hs = [x]
    acts = [None] * n_ops
    h = x
    for t in range(n_ops):
        kind = prog[t, 0]
        if kind == AFFINE:
            w = params[prog[t, 1]]
            out = np.empty((h.shape[0], w.shape[1]))
            _gemm_rm(False, False, h, w, out, 1.0)
            _add_bias(out, params[prog[t, 2]])
            h = out
        elif m[prog[t, 5]]:
            w1 = params[prog[t, 1]]
            z = np.empty((h.shape[0], w1.shape[1]))
            _gemm_rm(False, False, h, w1, z, 1.0)
            _bias_relu(z, params[prog[t, 2]])
            acts[t] = z
            out = np.empty((h.shape[0], w1.shape[1]))
            _gemm_rm(False, False, z, params[prog[t, 3]], out, 1.0)
            _residual_bias(out, h, params[prog[t, 4]])
            h = out
        hs.append(h)

    logits = h
    cdef double[:, ::1] lg = logits
    cdef Py_ssize_t classes = lg.shape[1]
    d_arr = np.empty((n, classes))
    cdef double[:, ::1] dv = d_arr
    cdef double zmax, s, inv, total = 0.0
    cdef double invn = 1.0 / n
    with nogil:
        for i in range(n):
            zmax = lg[i, 0]
            for j in range(1, classes):
                if lg[i, j] > zmax:
                    zmax = lg[i, j]
            s = 0.0
            for j in range(classes):
                dv[i, j] = exp(lg[i, j] - zmax)
                s += dv[i, j]
            total += log(s) + zmax - lg[i, lab[i]]
            inv = 1.0 / s
            for j in range(classes):
                dv[i, j] *= inv
            dv[i, lab[i]] -= 1.0
            for j in range(classes):
                dv[i, j] *= invn
    cdef double loss = total * invn

    grads = [np.zeros_like(p) for p in params]
    d = d_arr
    for t in range(n_ops - 1, -1, -1):
        kind = prog[t, 0]
        h_in = hs[t]
        if kind == AFFINE:
            w = params[prog[t, 1]]
            _gemm_rm(True, False, h_in, d, grads[prog[t, 1]], 1.0)
            _colsum(d, grads[prog[t, 2]])
            d_new = np.empty((n, w.shape[0]))
            _gemm_rm(False, True, d, w, d_new, 1.0)
            d = d_new
        elif m[prog[t, 5]]:
            w1 = params[prog[t, 1]]
            w2 = params[prog[t, 3]]
            a1 = acts[t]
            _colsum(d, grads[prog[t, 4]])
            _gemm_rm(True, False, a1, d, grads[prog[t, 3]], 1.0)
            dz = np.empty((n, w1.shape[1]))
            _gemm_rm(False, True, d, w2, dz, 1.0)
            _relu_bwd(dz, a1)
            _gemm_rm(True, False, h_in, dz, grads[prog[t, 1]], 1.0)
            _colsum(dz, grads[prog[t, 2]])
            d_new = np.empty((n, w1.shape[1]))
            _gemm_rm(False, True, dz, w1, d_new, 1.0)
            _add_into(d_new, d)
            d = d_new
    return loss, grads
