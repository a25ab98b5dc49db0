"""Pure numpy implementations of the hot kernels.

These are the reference versions. ``_kernels.pyx`` mirrors each function with
the same floating-point operation order so both backends agree bit for bit.
"""

import numpy as np

NAME = "python"


def gather_true_class(t, y):
    return t[np.arange(t.shape[0]), y]


def ecdf_from_sorted(values):
    """Distinct points and cumulative heights of a sorted sample."""
    points, counts = np.unique(values, return_counts=True)
    heights = np.cumsum(counts) / float(values.shape[0])
    heights[-1] = 1.0
    return points, heights


def ks_sup(points_a, heights_a, points_b, heights_b):
    """Largest |Fa - Fb| over the union of jump points, with its location."""
    union = np.union1d(points_a, points_b)
    ia = np.searchsorted(points_a, union, side="right") - 1
    ib = np.searchsorted(points_b, union, side="right") - 1
    fa = np.where(ia >= 0, heights_a[np.maximum(ia, 0)], 0.0)
    fb = np.where(ib >= 0, heights_b[np.maximum(ib, 0)], 0.0)
    diff = np.abs(fa - fb)
    k = int(np.argmax(diff))
    return float(diff[k]), float(union[k])


def adam_update(theta, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """In-place Adam update; ``bc1``/``bc2`` are the bias-correction divisors."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
