"""Ellipse-pair distance metrics and the match acceptance gate.

Both metrics satisfy minimality, symmetry, the triangle inequality, and
invariance under a common similarity transform of the two ellipses:

* Gaussian angle: read each ellipse as the 1-sigma contour of a bivariate
  normal and take the arccos of the normalized density inner product
  (closed form).
* Jaccard distance: one minus intersection-over-union of the two interiors,
  estimated by counting sample points on a regular grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic2d import conic_center, is_proper_ellipse
from .errors import EmptyUnionError, NotAnEllipseError, NumericAnomalyError

__all__ = [
    "GaussianEllipse",
    "GateConfig",
    "conic_to_gaussian",
    "gaussian_angle",
    "jaccard_distance",
    "gate_sigma",
    "chi2_gate",
]

CHI2_4_P99 = 13.277


@dataclass(frozen=True)
class GaussianEllipse:
    """Center and positive-definite shape matrix of an ellipse.

    ``(u - y)^T Y (u - y) = 1`` on the rim; eigenvalues of ``Y`` are the
    inverse squared semi-axes.
    """

    y: np.ndarray
    shape: np.ndarray  # 2x2


@dataclass(frozen=True)
class GateConfig:
    """Acceptance gate parameters: assumed rim-fit noise and the chi-square
    quantile threshold (99th percentile of chi2 with 4 dof by default)."""

    sigma_img: float
    threshold: float = CHI2_4_P99

    def __post_init__(self):
        if self.sigma_img <= 0.0 or self.threshold <= 0.0:
            raise ValueError("sigma_img and threshold must be positive")


def conic_to_gaussian(c: np.ndarray) -> GaussianEllipse:
    """Scale-free conversion of an ellipse conic to center + shape matrix."""
    c = np.asarray(c, dtype=float)
    if not is_proper_ellipse(c):
        raise NotAnEllipseError("conic is not a proper ellipse")
    y = conic_center(c)
    u = c[:2, :2]
    denom = y @ u @ y - c[2, 2]
    shape = u / denom
    # Positive definiteness is guaranteed for a proper ellipse; guard anyway.
    if shape[0, 0] <= 0.0 or np.linalg.det(shape) <= 0.0:
        raise NotAnEllipseError("shape matrix is not positive definite")
    return GaussianEllipse(y=y, shape=0.5 * (shape + shape.T))


def _inv2(m: np.ndarray) -> np.ndarray:
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det


def _gaussian_angle_gg(gi: GaussianEllipse, gj: GaussianEllipse) -> float:
    if np.array_equal(gi.y, gj.y) and np.array_equal(gi.shape, gj.shape):
        return 0.0
    yi, yj = gi.shape, gj.shape
    det_sum = np.linalg.det(yi + yj)
    factor = 4.0 * np.sqrt(np.linalg.det(yi) * np.linalg.det(yj)) / det_sum
    dy = gi.y - gj.y
    # Y_i (Y_i + Y_j)^-1 Y_j == (Y_i^-1 + Y_j^-1)^-1; the latter evaluates
    # bitwise-identically under operand swap, keeping the metric symmetric.
    cov_sum = _inv2(yi) + _inv2(yj)
    expo = -0.5 * (dy @ _inv2(cov_sum) @ dy)
    arg = factor * np.exp(expo)
    if not (-1e-12 <= arg <= 1.0 + 1e-12):
        raise NumericAnomalyError(f"arccos argument {arg} outside [0, 1]")
    return float(np.arccos(np.clip(arg, 0.0, 1.0)))


def gaussian_angle(ci: np.ndarray, cj: np.ndarray) -> float:
    """Gaussian-angle distance between two ellipse conics, in radians."""
    return _gaussian_angle_gg(conic_to_gaussian(ci), conic_to_gaussian(cj))


def _interior_sign(c: np.ndarray, center: np.ndarray) -> float:
    xh = np.array([center[0], center[1], 1.0])
    v = xh @ c @ xh
    return -1.0 if v > 0.0 else 1.0


def _inside(c: np.ndarray, sign: float, pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    form = (
        c[0, 0] * x * x
        + 2.0 * c[0, 1] * x * y
        + c[1, 1] * y * y
        + 2.0 * c[0, 2] * x
        + 2.0 * c[1, 2] * y
        + c[2, 2]
    )
    return sign * form < 0.0


def jaccard_distance(
    ci: np.ndarray,
    cj: np.ndarray,
    pitch: float | None = None,
    sample_points: np.ndarray | None = None,
) -> float:
    """Grid-sampled Jaccard distance between two ellipse interiors.

    Sample points lie on a regular grid of spacing ``pitch`` covering the
    joint bounding box.  The grid is anchored to the pair (origin at the
    midpoint of the two centers, x axis along the line joining them) so the
    estimate is invariant under a common similarity transform whenever
    ``pitch`` scales with the figure; ``pitch`` defaults to 1/256 of the
    geometric-mean semi-axis scale.  ``sample_points`` (N x 2) overrides the
    grid entirely, e.g. to share one sample set among several pairwise
    comparisons (on a shared sample set the result is an exact metric).
    """
    gi, gj = conic_to_gaussian(ci), conic_to_gaussian(cj)
    si = _interior_sign(ci, gi.y)
    sj = _interior_sign(cj, gj.y)

    if sample_points is None:
        mid = 0.5 * (gi.y + gj.y)
        axis = gj.y - gi.y
        sep = np.linalg.norm(axis)
        scale = (np.linalg.det(gi.shape) * np.linalg.det(gj.shape)) ** (-0.125)
        ex = axis / sep if sep > 1e-9 * scale else np.array([1.0, 0.0])
        ey = np.array([-ex[1], ex[0]])
        if pitch is None:
            pitch = scale / 256.0
        if pitch <= 0.0:
            raise ValueError("pitch must be positive")
        # Half-spans in the pair frame via the ellipse support function;
        # the grid is symmetric about the midpoint, so swapping the operands
        # (which flips ex and ey) reproduces the same sample set exactly.
        spans = []
        for g in (gi, gj):
            cov = _inv2(g.shape)
            off = g.y - mid
            spans.append(
                (
                    abs(off @ ex) + np.sqrt(ex @ cov @ ex),
                    abs(off @ ey) + np.sqrt(ey @ cov @ ey),
                )
            )
        half_x, half_y = (max(s[0] for s in spans), max(s[1] for s in spans))
        nx = int(np.ceil(half_x / pitch))
        ny = int(np.ceil(half_y / pitch))
        gx = pitch * np.arange(-nx, nx + 1)
        gy = pitch * np.arange(-ny, ny + 1)
        xx, yy = np.meshgrid(gx, gy, indexing="ij")
        sample_points = mid + xx.reshape(-1, 1) * ex + yy.reshape(-1, 1) * ey

    in_i = _inside(ci, si, sample_points)
    in_j = _inside(cj, sj, sample_points)
    union = np.count_nonzero(in_i | in_j)
    if union == 0:
        raise EmptyUnionError("no grid samples inside either ellipse")
    both = np.count_nonzero(in_i & in_j)
    return 1.0 - both / union


def gate_sigma(a: float, b: float, sigma_img: float) -> float:
    """Gaussian-angle noise scale for an ellipse with semi-axes (a, b) px."""
    return 0.85 * sigma_img / np.sqrt(a * b)


def chi2_gate(d: float, a: float, b: float, cfg: GateConfig) -> bool:
    """Accept a correspondence when d^2/sigma^2 is under the gate threshold."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("semi-axes must be positive")
    sigma = gate_sigma(a, b, cfg.sigma_img)
    return (d / sigma) ** 2 <= cfg.threshold
