"""Finite differences along the strip direction t in [0,1].

The strip is not periodic in t, so spatial directions stay spectral while
t-derivatives use second-order centered stencils with one-sided closures at
the boundary slices. Orders 1 and 2 come in a Richardson-extrapolated
variant for interior slices; orders 3 and 4 use Fornberg weights on widened
windows. Everything is expressed as a dense (M+1)x(M+1) weight matrix so a
derivative is one tensordot, deterministic regardless of evaluation order.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

__all__ = ["fornberg_weights", "t_weight_matrix", "t_derivative"]


def fornberg_weights(nodes: np.ndarray, x0: float, order: int) -> np.ndarray:
    """Weights so that sum_j w_j f(nodes_j) approximates f^(order)(x0)."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    if order >= n:
        raise ValidationError("stencil too small for requested derivative order")
    w = np.zeros((n, order + 1))
    w[0, 0] = 1.0
    c1 = 1.0
    c4 = nodes[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[i, k] = c1 * (k * w[i - 1, k - 1] - c5 * w[i - 1, k]) / c2
                w[i, 0] = -c1 * c5 * w[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                w[j, k] = (c4 * w[j, k] - k * w[j, k - 1]) / c3
            w[j, 0] = c4 * w[j, 0] / c3
        c1 = c2
    return w[:, order]


def _window(m: int, M: int, width: int) -> np.ndarray:
    """Index window of ``width`` slices centered at m, clipped into [0, M]."""
    lo = m - (width - 1) // 2
    lo = max(0, min(lo, M + 1 - width))
    return np.arange(lo, lo + width)


def t_weight_matrix(M: int, order: int, richardson: bool = False) -> np.ndarray:
    """Dense matrix W with (W @ f)[m] ~ d^order f/dt^order at slice m.

    Slices live at t = m/M, m = 0..M. Interior rows are centered and at
    least second-order accurate; boundary rows are one-sided second order.
    """
    if order < 1 or order > 4:
        raise ValidationError(f"t-derivative order must be 1..4, got {order}")
    h = 1.0 / M
    W = np.zeros((M + 1, M + 1))
    if order == 1:
        for m in range(1, M):
            W[m, m - 1], W[m, m + 1] = -0.5 / h, 0.5 / h
        W[0, 0:3] = np.array([-1.5, 2.0, -0.5]) / h
        W[M, M - 2 : M + 1] = np.array([0.5, -2.0, 1.5]) / h
        if richardson:
            for m in range(2, M - 1):
                W[m, :] = 0.0
                W[m, m - 1], W[m, m + 1] = -4.0 / (6 * h), 4.0 / (6 * h)
                W[m, m - 2] += 1.0 / (12 * h)
                W[m, m + 2] -= 1.0 / (12 * h)
    elif order == 2:
        for m in range(1, M):
            W[m, m - 1 : m + 2] = np.array([1.0, -2.0, 1.0]) / h**2
        W[0, 0:4] = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
        W[M, M - 3 : M + 1] = np.array([-1.0, 4.0, -5.0, 2.0]) / h**2
        if richardson:
            for m in range(2, M - 1):
                W[m, :] = 0.0
                # (4 D2_h - D2_2h) / 3
                W[m, m - 1 : m + 2] += np.array([4.0, -8.0, 4.0]) / (3 * h**2)
                W[m, m - 2] += -1.0 / (12 * h**2)
                W[m, m] += 2.0 / (12 * h**2)
                W[m, m + 2] += -1.0 / (12 * h**2)
    else:
        # orders 3 and 4: centered 5-point interior, widened one-sided closures
        width_interior = 5
        width_boundary = order + 3
        nodes = np.arange(M + 1) * h
        for m in range(M + 1):
            if (width_interior - 1) // 2 <= m <= M - (width_interior - 1) // 2:
                stencil = _window(m, M, width_interior)
            else:
                stencil = _window(m, M, width_boundary)
            W[m, stencil] = fornberg_weights(nodes[stencil], nodes[m], order)
    return W


def t_derivative(samples: np.ndarray, order: int, richardson: bool = False) -> np.ndarray:
    """Apply a t-derivative along axis 0 of strip samples (M+1, ...)."""
    M = samples.shape[0] - 1
    W = t_weight_matrix(M, order, richardson=richardson)
    return np.tensordot(W, samples, axes=(1, 0))
