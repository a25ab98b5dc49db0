"""Confidence ECDFs, the two-sample K-S distance and the forgetting ratio.

All functions here are pure. The inner loops live in the kernel backend
(see :mod:`forgetaudit._backend`).
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DegenerateCalibrationError, InputError

#: Half-width of the band around rho = 1 flagged as ``near_threshold``.
NEAR_THRESHOLD_BAND = 0.05

_ROW_SUM_TOL = 1e-6


class Decision(str, enum.Enum):
    FORGOTTEN = "Forgotten"
    NOT_FORGOTTEN = "NotForgotten"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class SortedConfidences:
    """Ground-truth-class confidences in non-decreasing order."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise InputError("confidences must be a non-empty 1-D array")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise InputError("confidences must lie in [0, 1]")
        if np.any(v[1:] < v[:-1]):
            raise InputError("confidences must be sorted non-decreasing")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class Ecdf:
    """Right-continuous empirical CDF stored at its distinct jump points."""

    points: np.ndarray
    heights: np.ndarray
    n: int

    def __call__(self, x):
        """Evaluate at scalar or array ``x``."""
        idx = np.searchsorted(self.points, x, side="right") - 1
        out = np.where(idx >= 0, self.heights[np.maximum(idx, 0)], 0.0)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class KsResult:
    distance: float
    location: float


def extract_confidences(t, y):
    """Pick ``t[i, y[i]]`` for every row and sort the result.

    Rows of ``t`` must be probability vectors (entries in [0, 1], summing to
    1 within 1e-6) and ``y`` must hold integer labels in ``[0, M)``.
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    y = np.asarray(y)
    if t.ndim != 2 or y.ndim != 1:
        raise InputError("expected an N x M matrix and a length-N label vector")
    if t.shape[0] != y.shape[0]:
        raise InputError(f"matrix has {t.shape[0]} rows but {y.shape[0]} labels given")
    if t.shape[0] == 0:
        raise InputError("confidence matrix is empty")
    if y.dtype.kind not in "iu":
        if not np.all(np.mod(y, 1) == 0):
            raise InputError("labels must be integers")
    y = y.astype(np.int64)
    m = t.shape[1]
    if y.min() < 0 or y.max() >= m:
        raise InputError(f"labels must lie in [0, {m - 1}]")
    if not np.all(np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0:
        raise InputError("probabilities must lie in [0, 1]")
    bad = np.flatnonzero(np.abs(t.sum(axis=1) - 1.0) > _ROW_SUM_TOL)
    if bad.size:
        raise InputError(f"row {int(bad[0])} does not sum to 1")
    picked = kernels.gather_true_class(t, y)
    return SortedConfidences(np.sort(picked, kind="stable"))


def build_ecdf(c):
    """ECDF of a sorted confidence sample; tied values share one point."""
    if not isinstance(c, SortedConfidences):
        c = SortedConfidences(c)
    points, heights = kernels.ecdf_from_sorted(c.values)
    return Ecdf(points=points, heights=heights, n=len(c))


def ks_distance(a, b):
    """Two-sample K-S statistic sup_x |a(x) - b(x)|.

    The supremum of two step functions is attained at one of their jump
    points, so evaluating on the union of points is exact.
    """
    distance, location = kernels.ks_sup(a.points, a.heights, b.points, b.heights)
    return KsResult(distance=float(distance), location=float(location))


def ks_samples(x, y):
    """Convenience wrapper: K-S distance between two raw samples."""
    ex = build_ecdf(np.sort(np.asarray(x, dtype=np.float64)))
    ey = build_ecdf(np.sort(np.asarray(y, dtype=np.float64)))
    return ks_distance(ex, ey)


def forgetting_ratio(ks_target, ks_calibration):
    """rho = KS(query, target) / KS(query, calibration)."""
    num = _distance(ks_target)
    den = _distance(ks_calibration)
    if den == 0.0:
        raise DegenerateCalibrationError(
            "calibration K-S distance is 0: the calibration model is "
            "indistinguishable from the query model on the query set"
        )
    return num / den


def decide(rho):
    if not math.isfinite(rho) or rho < 0:
        raise InputError(f"rho must be finite and non-negative, got {rho!r}")
    return Decision.FORGOTTEN if rho >= 1.0 else Decision.NOT_FORGOTTEN


def near_threshold(rho):
    return abs(rho - 1.0) < NEAR_THRESHOLD_BAND


def _distance(ks):
    d = ks.distance if isinstance(ks, KsResult) else float(ks)
    if not math.isfinite(d) or d < 0.0 or d > 1.0:
        raise InputError(f"K-S distance must lie in [0, 1], got {d!r}")
    return d
