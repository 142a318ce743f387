"""NumPy implementation of the network kernels (fallback backend).

Both backends expose the same two functions and agree on the arithmetic they
perform; only the execution strategy differs.  Inputs are assumed canonical:
float64 C-contiguous features, int32 labels, uint8 mask (see kernels.py).
"""

from __future__ import annotations

import numpy as np

from ._ops import OP_AFFINE, OP_RESBLOCK

NAME = "python"


def forward(program, params, x, mask):
    """Run the program on a batch, returning logits of shape (n, classes)."""
    h = x
    for t in range(program.shape[0]):
        kind, p0, p1, p2, p3, mb = program[t]
        if kind == OP_AFFINE:
            h = h @ params[p0] + params[p1]
        elif mask[mb]:
            a1 = np.maximum(h @ params[p0] + params[p1], 0.0)
            h = h + a1 @ params[p2] + params[p3]
    return h


def loss_grad(program, params, x, labels, mask):
    """Mean cross-entropy over the batch plus gradients for every parameter.

    Gradients of ops that were masked off are exactly zero: the identity
    path contributes nothing and touches no weights.
    """
    n = x.shape[0]
    n_ops = program.shape[0]
    hs = [x]
    acts = [None] * n_ops
    h = x
    for t in range(n_ops):
        kind, p0, p1, p2, p3, mb = program[t]
        if kind == OP_AFFINE:
            h = h @ params[p0] + params[p1]
        elif mask[mb]:
            a1 = np.maximum(h @ params[p0] + params[p1], 0.0)
            acts[t] = a1
            h = h + a1 @ params[p2] + params[p3]
        hs.append(h)

    logits = h
    zmax = logits.max(axis=1, keepdims=True)
    ez = np.exp(logits - zmax)
    zsum = ez.sum(axis=1)
    rows = np.arange(n)
    loss = float(np.mean(np.log(zsum) + zmax[:, 0] - logits[rows, labels]))

    grads = [np.zeros_like(p) for p in params]
    d = ez / zsum[:, None]
    d[rows, labels] -= 1.0
    d /= n
    for t in range(n_ops - 1, -1, -1):
        kind, p0, p1, p2, p3, mb = program[t]
        h_in = hs[t]
        if kind == OP_AFFINE:
            grads[p0] = h_in.T @ d
            grads[p1] = d.sum(axis=0)
            d = d @ params[p0].T
        elif mask[mb]:
            a1 = acts[t]
            grads[p3] = d.sum(axis=0)
            grads[p2] = a1.T @ d
            dz1 = (d @ params[p2].T) * (a1 > 0.0)
            grads[p0] = h_in.T @ dz1
            grads[p1] = dz1.sum(axis=0)
            d = d + dz1 @ params[p0].T
    return loss, grads
