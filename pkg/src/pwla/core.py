"""Domain types, the target-function catalog, sampling and error evaluation.

All solvers in this package work on a uniformly sampled :class:`Dataset`
rather than on the continuous target; the least-squares error is the sum
over the samples.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class PwlaError(Exception):
    """Base class for errors raised by this package."""


class EvaluationError(PwlaError, ValueError):
    """A target function produced a non-finite value."""


class DomainError(PwlaError, ValueError):
    """A point lies outside the interval a model is defined on."""


class ContractError(PwlaError, ValueError):
    """Arguments violate an operation's preconditions."""


GRID_RTOL = 1e-12
CONTINUITY_RTOL = 1e-9


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ContractError(f"interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise ContractError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class TargetFunction:
    """A named real function on a closed interval.

    ``func`` must accept numpy arrays.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    domain: Interval
    formula: str = ""

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Equally spaced samples ``(xs, ys)`` of a target on its domain."""

    xs: np.ndarray
    ys: np.ndarray
    name: str = ""

    def __post_init__(self):
        xs = _frozen(self.xs)
        ys = _frozen(self.ys)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise ContractError("xs and ys must be 1-D arrays of equal length")
        if len(xs) < 2:
            raise ContractError("a dataset needs at least 2 samples")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ContractError("dataset contains non-finite values")
        dx = np.diff(xs)
        if np.any(dx <= 0):
            raise ContractError("xs must be strictly increasing")
        step = (xs[-1] - xs[0]) / (len(xs) - 1)
        if np.max(np.abs(dx - step)) / step > GRID_RTOL * max(1.0, np.max(np.abs(xs)) / step):
            raise ContractError("xs are not uniformly spaced")

    @property
    def m(self) -> int:
        return len(self.xs)

    @property
    def domain(self) -> Interval:
        return Interval(float(self.xs[0]), float(self.xs[-1]))

    @property
    def spacing(self) -> float:
        return float((self.xs[-1] - self.xs[0]) / (self.m - 1))

    def __len__(self) -> int:
        return self.m

    def slice(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        return self.xs[i:j], self.ys[i:j]

    def nearest_index(self, x: float) -> int:
        k = int(round((x - self.xs[0]) / self.spacing))
        return min(max(k, 0), self.m - 1)

    def slope_bound(self) -> float:
        """Largest finite-difference slope magnitude of the samples."""
        return float(np.max(np.abs(np.diff(self.ys) / np.diff(self.xs))))


@dataclass(frozen=True)
class Segment:
    a: float
    b: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ContractError(f"segment needs lo < hi, got [{self.lo}, {self.hi}]")

    def __call__(self, x):
        return self.a + self.b * x


@dataclass(frozen=True, eq=False)
class PwlModel:
    """Piecewise linear function ``g(x) = a_i + b_i x`` on ``[mu_{i-1}, mu_i)``.

    The last segment is closed on the right. ``breakpoints`` holds all
    ``n + 1`` knots including the domain endpoints.
    """

    breakpoints: np.ndarray
    intercepts: np.ndarray
    slopes: np.ndarray
    continuous: bool = False

    def __post_init__(self):
        bp = _frozen(self.breakpoints)
        a = _frozen(self.intercepts)
        b = _frozen(self.slopes)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "intercepts", a)
        object.__setattr__(self, "slopes", b)
        if bp.ndim != 1 or len(bp) < 2:
            raise ContractError("need at least two breakpoints")
        if a.shape != (len(bp) - 1,) or b.shape != a.shape:
            raise ContractError("need one (intercept, slope) pair per segment")
        if not np.all(np.isfinite(bp)) or not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
            raise ContractError("model parameters must be finite")
        if np.any(np.diff(bp) <= 0):
            raise ContractError("breakpoints must be strictly increasing")
        if self.continuous:
            gap = self.junction_gaps()
            left = a[:-1] + b[:-1] * bp[1:-1]
            bad = np.abs(gap) > CONTINUITY_RTOL * (1.0 + np.abs(left))
            if np.any(bad):
                k = int(np.argmax(bad)) + 1
                raise ContractError(f"model flagged continuous but jumps by {gap[k - 1]:g} at {bp[k]:g}")

    @classmethod
    def from_segments(cls, segments: Sequence[Segment], continuous: bool = False) -> PwlModel:
        bps = [segments[0].lo] + [s.hi for s in segments]
        for s, t in zip(segments, segments[1:]):
            if s.hi != t.lo:
                raise ContractError("segments must tile the domain")
        return cls(bps, [s.a for s in segments], [s.b for s in segments], continuous)

    @classmethod
    def from_knots(cls, knots_x, knots_y) -> PwlModel:
        """Continuous model interpolating the points ``(knots_x, knots_y)``."""
        kx = np.asarray(knots_x, dtype=float)
        ky = np.asarray(knots_y, dtype=float)
        b = np.diff(ky) / np.diff(kx)
        a = ky[:-1] - b * kx[:-1]
        return cls(kx, a, b, continuous=True)

    @property
    def order(self) -> int:
        return len(self.intercepts)

    @property
    def domain(self) -> Interval:
        return Interval(float(self.breakpoints[0]), float(self.breakpoints[-1]))

    @property
    def interior(self) -> np.ndarray:
        return self.breakpoints[1:-1]

    @property
    def segments(self) -> list[Segment]:
        bp = self.breakpoints
        return [Segment(float(self.intercepts[i]), float(self.slopes[i]), float(bp[i]), float(bp[i + 1]))
                for i in range(self.order)]

    def junction_gaps(self) -> np.ndarray:
        """``g_{p+1}(mu_p) - g_p(mu_p)`` at each interior breakpoint."""
        mu = self.breakpoints[1:-1]
        a, b = self.intercepts, self.slopes
        return (a[1:] + b[1:] * mu) - (a[:-1] + b[:-1] * mu)

    def segment_index(self, x) -> np.ndarray:
        return np.searchsorted(self.breakpoints[1:-1], x, side="right")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.breakpoints[0], self.breakpoints[-1]
        if np.any((x < lo) | (x > hi)) or np.any(np.isnan(x)):
            raise DomainError(f"x outside model domain [{lo:g}, {hi:g}]")
        k = self.segment_index(x)
        return self.intercepts[k] + self.slopes[k] * x

    def mirrored(self) -> PwlModel:
        """Reflect through the origin: ``h(x) = -g(-x)``; needs a symmetric domain."""
        bp = -self.breakpoints[::-1]
        return PwlModel(bp, -self.intercepts[::-1], self.slopes[::-1], self.continuous)


def eval_pwl(model: PwlModel, x: float) -> float:
    return float(model(x))


def sse(model: PwlModel, data: Dataset) -> float:
    r = data.ys - model(data.xs)
    return float(np.dot(r, r))


def mse(model: PwlModel, data: Dataset) -> float:
    return sse(model, data) / data.m


def make_grid(f: TargetFunction, m: int) -> Dataset:
    if m < 2:
        raise ContractError(f"need m >= 2 samples, got {m}")
    xs = np.linspace(f.domain.lo, f.domain.hi, m)
    with np.errstate(all="ignore"):
        ys = np.asarray(f(xs), dtype=float)
    bad = ~np.isfinite(ys)
    if np.any(bad):
        x = xs[np.argmax(bad)]
        raise EvaluationError(f"{f.name or 'target'} is not finite at x={float(x)!r}")
    return Dataset(xs, ys, name=f.name)


# ---------------------------------------------------------------------------
# catalog


def _sinc(x):
    # np.sinc is sin(pi x)/(pi x) with the removable singularity filled by 1
    return np.sinc(x)


CATALOG: dict[str, TargetFunction] = {
    f.name: f
    for f in [
        TargetFunction("x2", lambda x: x**2, Interval(-1.0, 1.0), "x^2"),
        TargetFunction("x3", lambda x: x**3, Interval(-1.0, 1.0), "x^3"),
        TargetFunction(
            "mix1",
            lambda x: 5 * x * np.sin(5 * x) + np.cos(5 * x) * np.sin(10 * x) + np.exp(-x),
            Interval(-1.0, 1.0),
            "5x sin(5x) + cos(5x) sin(10x) + exp(-x)",
        ),
        TargetFunction("table2_1", _sinc, Interval(-4.0, 4.0), "sin(pi x)/(pi x)"),
        TargetFunction(
            "table2_2",
            lambda x: np.sin(x) + x * np.sin(x) * np.cos(x),
            Interval(-10.0, 10.0),
            "sin(x) + x sin(x) cos(x)",
        ),
        TargetFunction(
            "table2_3",
            lambda x: 20 - 5 * np.exp(-0.3 * x) - 3 * np.exp(np.cos(np.pi * x)),
            Interval(-6.0, 6.0),
            "20 - 5 exp(-0.3x) - 3 exp(cos(pi x))",
        ),
        TargetFunction(
            "sec54",
            lambda x: np.exp(-np.sqrt(x**2)) + np.exp(0.5 * np.cos(3 * x)),
            Interval(-5.0, 5.0),
            "exp(-sqrt(x^2)) + exp(0.5 cos(3x))",
        ),
    ]
}


def get_function(name: str) -> TargetFunction:
    try:
        return CATALOG[name]
    except KeyError:
        raise ContractError(f"unknown function {name!r}; choose from {', '.join(CATALOG)}") from None


# ---------------------------------------------------------------------------
# CSV datasets


def load_csv(path, rtol: float = 1e-6) -> Dataset:
    """Read an ``x,y`` CSV with a header row.

    Rows must be sorted by x and equally spaced to within ``rtol`` of the
    step; the x column is then snapped onto the exact uniform grid.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["x", "y"]:
            raise ContractError(f"{path}: expected header 'x,y'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise ContractError(f"{path}:{lineno}: expected two columns")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                raise ContractError(f"{path}:{lineno}: non-numeric value") from None
    if len(rows) < 2:
        raise ContractError(f"{path}: need at least 2 rows")
    xs = np.array([r[0] for r in rows])
    ys = np.array([r[1] for r in rows])
    dx = np.diff(xs)
    if np.any(dx <= 0):
        raise ContractError(f"{path}: x column must be strictly increasing")
    step = (xs[-1] - xs[0]) / (len(xs) - 1)
    if np.max(np.abs(dx - step)) > rtol * step:
        raise ContractError(f"{path}: x column is not equally spaced")
    return Dataset(np.linspace(xs[0], xs[-1], len(xs)), ys, name=str(path))


def save_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in zip(data.xs, data.ys):
            w.writerow([repr(float(x)), repr(float(y))])


# ---------------------------------------------------------------------------
# model files

MODEL_HEADER = "pwl v1"


def save_model(model: PwlModel, path) -> None:
    """Write ``pwl v1 <continuous>`` then one ``lo hi a b`` line per segment."""
    with open(path, "w") as fh:
        fh.write(f"{MODEL_HEADER} {int(model.continuous)}\n")
        for s in model.segments:
            fh.write(f"{s.lo:.17g} {s.hi:.17g} {s.a:.17g} {s.b:.17g}\n")


def load_model(path) -> PwlModel:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0][:2] != MODEL_HEADER.split() or len(lines[0]) != 3 or lines[0][2] not in ("0", "1"):
        raise ContractError(f"{path}: expected header '{MODEL_HEADER} 0|1'")
    segs = []
    for k, parts in enumerate(lines[1:], start=2):
        if len(parts) != 4:
            raise ContractError(f"{path}: segment line {k} needs 4 numbers")
        try:
            lo, hi, a, b = map(float, parts)
        except ValueError:
            raise ContractError(f"{path}: non-numeric value on segment line {k}") from None
        segs.append(Segment(a, b, lo, hi))
    if not segs:
        raise ContractError(f"{path}: no segments")
    return PwlModel.from_segments(segs, continuous=lines[0][2] == "1")
