"""Closed-form least-squares fits.

``fit_line`` fits one line to a sample range in O(1) from prefix sums;
``fit_cpwl_fixed`` fits a continuous piecewise linear function with given
breakpoints through the hinge basis ``{1, x, max(0, x - mu_k)}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from .core import ContractError, Dataset, PwlaError, PwlModel, Segment


class DegenerateFitError(PwlaError, ValueError):
    """Too few points, or no spread in x, to determine a line."""


class IllPosedError(PwlaError, ValueError):
    """The hinge basis is rank deficient for the requested breakpoints."""

    def __init__(self, msg, pair=None):
        super().__init__(msg)
        self.pair = pair


class LineFit(NamedTuple):
    segment: Segment
    sse: float


class CpwlFit(NamedTuple):
    model: PwlModel
    sse: float


@dataclass(frozen=True, eq=False)
class MomentCache:
    """Prefix sums of ``1, x, x^2, y, xy, y^2`` over a dataset.

    x and y are shifted by their means before summing, which keeps the
    closed-form variance terms from cancelling badly.
    """

    xs: np.ndarray
    x0: float
    y0: float
    n: np.ndarray
    sx: np.ndarray
    sxx: np.ndarray
    sy: np.ndarray
    sxy: np.ndarray
    syy: np.ndarray

    @classmethod
    def from_dataset(cls, data: Dataset) -> MomentCache:
        x0 = float(np.mean(data.xs))
        y0 = float(np.mean(data.ys))
        u = data.xs - x0
        v = data.ys - y0

        def pre(a):
            out = np.zeros(len(a) + 1)
            np.cumsum(a, out=out[1:])
            return out

        return cls(
            data.xs, x0, y0,
            np.arange(data.m + 1, dtype=float), pre(u), pre(u * u), pre(v), pre(u * v), pre(v * v),
        )

    @property
    def m(self) -> int:
        return len(self.xs)

    def range_stats(self, i, j):
        """Centred count/moment sums over ``[i, j)``; works on index arrays."""
        n = self.n[j] - self.n[i]
        sx = self.sx[j] - self.sx[i]
        sy = self.sy[j] - self.sy[i]
        cxx = (self.sxx[j] - self.sxx[i]) - sx * sx / n
        cxy = (self.sxy[j] - self.sxy[i]) - sx * sy / n
        cyy = (self.syy[j] - self.syy[i]) - sy * sy / n
        return n, sx, sy, cxx, cxy, cyy


def fit_line(cache: MomentCache, i: int, j: int) -> LineFit:
    """Least-squares line over samples ``i..j-1``.

    Parameters
    ----------
    cache : MomentCache
    i, j : int
        Half-open sample range; needs ``j - i >= 2``.

    Returns
    -------
    LineFit
        The fitted segment spanning ``[xs[i], xs[j-1]]`` and its residual
        sum of squares.
    """
    if not 0 <= i < j <= cache.m or j - i < 2:
        raise DegenerateFitError(f"need at least 2 samples to fit a line, got range [{i}, {j})")
    n, sx, sy, cxx, cxy, cyy = cache.range_stats(i, j)
    if cxx <= 0:
        raise DegenerateFitError(f"zero x-variance on range [{i}, {j})")
    b = cxy / cxx
    # intercept in centred coordinates, then shift back
    a_c = sy / n - b * sx / n
    a = a_c + cache.y0 - b * cache.x0
    err = max(cyy - cxy * cxy / cxx, 0.0)
    return LineFit(Segment(float(a), float(b), float(cache.xs[i]), float(cache.xs[j - 1])), float(err))


def segment_sse_matrix(cache: MomentCache, min_size: int = 2) -> np.ndarray:
    """``S[i, j]`` = residual sum of squares of the best line on ``[i, j)``.

    Entries with fewer than ``min_size`` samples are ``inf``.
    """
    m = cache.m
    idx = np.arange(m + 1)
    i = idx[:, None]
    j = idx[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        n, sx, sy, cxx, cxy, cyy = cache.range_stats(i, j)
        s = cyy - cxy * cxy / cxx
    s = np.maximum(s, 0.0)
    s[(j - i) < min_size] = np.inf
    s[~np.isfinite(s)] = np.inf
    return s


def hinge_design(xs: np.ndarray, interior, center: float = 0.0) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    mu = np.asarray(interior, dtype=float)
    hinges = np.maximum(0.0, xs[:, None] - mu[None, :])
    return np.column_stack([np.ones_like(xs), xs - center, hinges])


def check_breakpoints(data: Dataset, interior) -> np.ndarray:
    mu = np.asarray(interior, dtype=float).ravel()
    lo, hi = data.xs[0], data.xs[-1]
    if np.any(~np.isfinite(mu)):
        raise ContractError("breakpoints must be finite")
    if np.any((mu <= lo) | (mu >= hi)):
        raise ContractError(f"breakpoints must lie strictly inside ({lo:g}, {hi:g})")
    if np.any(np.diff(mu) <= 0):
        raise ContractError("breakpoints must be strictly increasing (duplicates not allowed)")
    return mu


def fit_cpwl_fixed(data: Dataset, interior_breakpoints) -> CpwlFit:
    """Best continuous piecewise linear fit with the given interior breakpoints.

    The problem is linear in the hinge-basis coefficients, so the solution
    is the global least-squares minimum for these breakpoints. Solved by a
    QR factorization of the design matrix.
    """
    mu = check_breakpoints(data, interior_breakpoints)
    xs, ys = data.xs, data.ys
    first = np.searchsorted(xs, mu, side="left")
    same = np.nonzero(np.diff(first) == 0)[0]
    if len(same):
        k = int(same[0])
        raise IllPosedError(
            f"breakpoints {mu[k]:g} and {mu[k + 1]:g} fall between the same pair of samples",
            pair=(float(mu[k]), float(mu[k + 1])),
        )

    center = 0.5 * (xs[0] + xs[-1])
    X = hinge_design(xs, mu, center)
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if np.min(diag) <= 1e-12 * np.max(diag) * len(xs):
        k = int(np.argmin(diag))
        raise IllPosedError(f"hinge basis is rank deficient at column {k}")
    coef = solve_triangular(r, q.T @ ys)
    resid = ys - X @ coef
    err = float(np.dot(resid, resid))
    return CpwlFit(hinge_to_model(coef, mu, data.domain.lo, data.domain.hi, center), err)


def cpwl_sse(data: Dataset, interior_breakpoints) -> float:
    """Residual sum of squares of :func:`fit_cpwl_fixed`, without the model.

    The last diagonal entry of R in the QR factorization of ``[X | y]`` is
    the residual norm, so Q is never formed.
    """
    mu = check_breakpoints(data, interior_breakpoints)
    first = np.searchsorted(data.xs, mu, side="left")
    if np.any(np.diff(first) == 0):
        raise IllPosedError("two breakpoints fall between the same pair of samples")
    center = 0.5 * (data.xs[0] + data.xs[-1])
    X = hinge_design(data.xs, mu, center)
    r = np.linalg.qr(np.column_stack([X, data.ys]), mode="r")
    return float(r[-1, -1] ** 2)


def hinge_to_model(coef, interior, lo: float, hi: float, center: float = 0.0) -> PwlModel:
    """Convert hinge coefficients ``[c0, c1, h_1..h_k]`` to slope/intercept form."""
    coef = np.asarray(coef, dtype=float)
    mu = np.asarray(interior, dtype=float)
    h = coef[2:]
    # slope and intercept in x - center, per segment
    slopes = coef[1] + np.concatenate([[0.0], np.cumsum(h)])
    icpt_c = coef[0] - np.concatenate([[0.0], np.cumsum(h * (mu - center))])
    intercepts = icpt_c - slopes * center
    bps = np.concatenate([[lo], mu, [hi]])
    model = PwlModel(bps, intercepts, slopes, continuous=False)
    # re-flag as continuous only after the constructor confirms the gaps are round-off
    return PwlModel(bps, intercepts, slopes, continuous=True) if _round_off_gaps(model) else model


def _round_off_gaps(model: PwlModel) -> bool:
    mu = model.interior
    left = model.intercepts[:-1] + model.slopes[:-1] * mu
    return bool(np.all(np.abs(model.junction_gaps()) <= 1e-9 * (1.0 + np.abs(left))))


class ResidualMoments(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    counts: np.ndarray


def residual_moments(model: PwlModel, data: Dataset) -> ResidualMoments:
    """Per-segment sums of the residual and of the x-weighted residual.

    Samples sitting exactly on a breakpoint are assigned to the segment on
    its right.
    """
    k = model.segment_index(data.xs)
    r = data.ys - (model.intercepts[k] + model.slopes[k] * data.xs)
    n = model.order
    A = np.bincount(k, weights=r, minlength=n)
    B = np.bincount(k, weights=r * data.xs, minlength=n)
    counts = np.bincount(k, minlength=n)
    return ResidualMoments(A, B, counts)
