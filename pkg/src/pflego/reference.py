"""Naive re-implementations used as independent oracles.

They compute in extended precision (``np.longdouble``), so central finite
differences built on them are not dominated by float64 rounding. They share
no code with :mod:`pflego.nn` or :mod:`pflego.model`.
"""

from __future__ import annotations

import numpy as np

EXT = np.longdouble


def unpack_theta(specs, theta):
    """``[(W, b_or_None, relu)]`` per layer, in extended precision."""
    layers = []
    offset = 0
    values = theta.values.astype(EXT)
    for spec in specs:
        n = spec.in_dim * spec.out_dim
        w = values[offset : offset + n].reshape(spec.in_dim, spec.out_dim)
        offset += n
        b = None
        if spec.has_bias:
            b = values[offset : offset + spec.out_dim]
            offset += spec.out_dim
        layers.append((w, b, spec.activation.value == "relu"))
    return layers


def dense_forward(layers, x):
    h = np.asarray(x).astype(EXT)
    for w, b, relu in layers:
        h = np.matmul(h, w)
        if b is not None:
            h = h + b
        if relu:
            h = np.where(h > 0, h, EXT(0))
    return h


def client_loss_ext(specs, theta, head, inputs, labels) -> EXT:
    """Mean cross-entropy over the batch, in extended precision."""
    phi = dense_forward(unpack_theta(specs, theta), inputs)
    logits = np.matmul(phi, head.values.astype(EXT).reshape(head.shapes[0]).T)
    total = EXT(0)
    for row, y in zip(logits, np.asarray(labels)):
        top = row.max()
        total += np.log(np.sum(np.exp(row - top))) - (row[int(y)] - top)
    return total / EXT(len(logits))


def matmul_reference(a, b) -> np.ndarray:
    """Triple-loop matrix product in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out
