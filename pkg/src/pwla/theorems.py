"""Executable optimality conditions for piecewise linear fits.

A discontinuous optimum has every segment equal to the least-squares line
of its own samples, and at each breakpoint the two neighbouring segments
either meet or are mirror images about the target value there. A
continuous optimum has every segment equal to its local least-squares
line: the per-segment residual sum and x-weighted residual sum vanish.

On sampled data the continuous sse has a kink wherever a breakpoint
crosses a sample, and an optimum may sit on one. That sample's residual
can then be split between the two neighbouring segments, and the
continuous check looks for a split in ``[0, 1]`` that zeroes the moments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple

import numpy as np

from .core import CONTINUITY_RTOL, ContractError, Dataset, PwlModel, TargetFunction, make_grid, sse
from .linfit import MomentCache, fit_line, residual_moments

JunctionKind = Literal["continuous", "reflected", "violated"]

ON_SAMPLE_RTOL = 1e-6


def default_moment_tol(data: Dataset) -> float:
    return 1e-6 * data.m * max(float(np.max(np.abs(data.ys))), np.finfo(float).tiny)


def grid_moment_tol(data: Dataset, step: float | None = None) -> float:
    """Moment tolerance for breakpoints known only to within ``step``.

    Moving a breakpoint by ``step`` shifts a segment's residual sum by at
    most about ``m * step * slope_bound``. ``step`` defaults to the grid
    spacing, which suits solvers that place breakpoints on samples.
    """
    step = data.spacing if step is None else step
    return data.m * step * data.slope_bound()


def default_junction_tol(data: Dataset) -> float:
    return 4.0 * data.spacing * data.slope_bound()


def _x_scale(data: Dataset) -> float:
    return max(abs(float(data.xs[0])), abs(float(data.xs[-1])), np.finfo(float).tiny)


@dataclass
class OptimalityReport:
    theorem: int
    A: np.ndarray
    B: np.ndarray
    per_segment_lsq_ok: list[bool]
    junction_x: list[float] = field(default_factory=list)
    junction_kind: list[JunctionKind] = field(default_factory=list)
    continuity_residual: list[float] = field(default_factory=list)
    reflection_residual: list[float] = field(default_factory=list)
    tol_moment: float = 0.0
    tol_junction: float = 0.0
    sample_share: list[float] = field(default_factory=list)

    @property
    def max_moment(self) -> float:
        return float(max(np.max(np.abs(self.A)), np.max(np.abs(self.B))))

    @property
    def max_junction_residual(self) -> float:
        if not self.junction_kind:
            return 0.0
        return float(max(np.nanmin([c, r]) for c, r in zip(self.continuity_residual, self.reflection_residual)))

    @property
    def passed(self) -> bool:
        return all(self.per_segment_lsq_ok) and "violated" not in self.junction_kind

    def failures(self) -> list[str]:
        out = [f"segment {i}: A={a:.3g} B={b:.3g}"
               for i, (ok, a, b) in enumerate(zip(self.per_segment_lsq_ok, self.A, self.B)) if not ok]
        out += [f"junction {p + 1} at x={x:.6g}: continuity {c:.3g}, reflection {r:.3g}"
                for p, (x, k, c, r) in enumerate(zip(self.junction_x, self.junction_kind,
                                                     self.continuity_residual, self.reflection_residual))
                if k == "violated"]
        return out

    def records(self) -> list[dict]:
        recs = []
        for i, (a, b, ok) in enumerate(zip(self.A, self.B, self.per_segment_lsq_ok)):
            recs.append({"record": "segment", "index": i, "A": float(a), "B": float(b), "lsq_ok": bool(ok)})
        for p, (x, k, c, r) in enumerate(zip(self.junction_x, self.junction_kind,
                                             self.continuity_residual, self.reflection_residual)):
            rec = {"record": "junction", "index": p + 1, "x": x, "junction_kind": k,
                   "continuity_residual": c, "reflection_residual": r}
            if p < len(self.sample_share):
                rec["sample_share"] = self.sample_share[p]
            recs.append(rec)
        recs.append({
            "record": "summary", "theorem": self.theorem, "passed": self.passed,
            "max_moment": self.max_moment, "max_junction_residual": self.max_junction_residual,
            "tol_moment": self.tol_moment, "tol_junction": self.tol_junction,
        })
        return recs

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records())


def _segment_checks(model: PwlModel, data: Dataset, tol_moment: float):
    mom = residual_moments(model, data)
    tol_b = tol_moment * _x_scale(data)
    ok = [bool(abs(a) <= tol_moment and abs(b) <= tol_b) for a, b in zip(mom.A, mom.B)]
    return mom.A, mom.B, ok


def _share_on_sample(model: PwlModel, data: Dataset, A: np.ndarray, B: np.ndarray):
    """Split residuals of samples lying on breakpoints to balance the moments.

    For each interior breakpoint with a sample within ``ON_SAMPLE_RTOL``
    grid steps, the fraction ``theta`` of that sample's residual given to
    the left segment is chosen in ``[0, 1]`` to zero the left segment's
    residual sum. Returns adjusted copies of ``A``, ``B`` and the fractions
    (nan where no sample lies on the breakpoint).
    """
    A, B = A.copy(), B.copy()
    shares = []
    for p, mu in enumerate(model.interior):
        k = data.nearest_index(mu)
        x = data.xs[k]
        if abs(x - mu) > ON_SAMPLE_RTOL * data.spacing:
            shares.append(float("nan"))
            continue
        seg = int(model.segment_index(np.array([x]))[0])
        r = data.ys[k] - (model.intercepts[seg] + model.slopes[seg] * x)
        if seg == p:
            # start from the convention that the sample belongs to the right
            A[p] -= r
            B[p] -= r * x
            A[p + 1] += r
            B[p + 1] += r * x
        theta = float(np.clip(-A[p] / r, 0.0, 1.0)) if r != 0.0 else 0.0
        A[p] += theta * r
        B[p] += theta * r * x
        A[p + 1] -= theta * r
        B[p + 1] -= theta * r * x
        shares.append(theta)
    return A, B, shares


def check_theorem1(model: PwlModel, data: Dataset, tol_moment: float | None = None,
                   tol_junction: float | None = None) -> OptimalityReport:
    """Necessary conditions for an optimal discontinuous fit.

    Each junction is ``continuous`` if the two segments meet within
    ``tol_junction``, else ``reflected`` if ``g_p + g_{p+1} = 2 f`` holds
    there, else ``violated``. ``f`` is read from the nearest sample.
    """
    tol_moment = default_moment_tol(data) if tol_moment is None else tol_moment
    tol_junction = default_junction_tol(data) if tol_junction is None else tol_junction
    A, B, ok = _segment_checks(model, data, tol_moment)
    rep = OptimalityReport(1, A, B, ok, tol_moment=tol_moment, tol_junction=tol_junction)
    a, b = model.intercepts, model.slopes
    for p, mu in enumerate(model.interior):
        left = a[p] + b[p] * mu
        right = a[p + 1] + b[p + 1] * mu
        f = data.ys[data.nearest_index(mu)]
        cont = float(abs(left - right))
        refl = float(abs(left + right - 2.0 * f))
        if cont <= tol_junction:
            kind = "continuous"
        elif refl <= tol_junction:
            kind = "reflected"
        else:
            kind = "violated"
        rep.junction_x.append(float(mu))
        rep.junction_kind.append(kind)
        rep.continuity_residual.append(cont)
        rep.reflection_residual.append(refl)
    return rep


def check_theorem2(model: PwlModel, data: Dataset, tol_moment: float | None = None) -> OptimalityReport:
    """Necessary and sufficient condition for an optimal continuous fit.

    A sample lying on a breakpoint may have its residual shared between the
    two neighbouring segments (see the module notes); the chosen fractions
    are in ``sample_share``. Raises :class:`ContractError` if the model has
    a jump.
    """
    gaps = model.junction_gaps()
    mu = model.interior
    left = model.intercepts[:-1] + model.slopes[:-1] * mu
    if np.any(np.abs(gaps) > CONTINUITY_RTOL * (1.0 + np.abs(left))):
        k = int(np.argmax(np.abs(gaps)))
        raise ContractError(f"model is not continuous: jump {gaps[k]:.3g} at x={mu[k]:.6g}")
    tol_moment = default_moment_tol(data) if tol_moment is None else tol_moment
    A, B, _ = _segment_checks(model, data, tol_moment)
    A, B, shares = _share_on_sample(model, data, A, B)
    tol_b = tol_moment * _x_scale(data)
    ok = [bool(abs(a) <= tol_moment and abs(b) <= tol_b) for a, b in zip(A, B)]
    rep = OptimalityReport(2, A, B, ok, tol_moment=tol_moment, sample_share=shares)
    for m_, g in zip(mu, gaps):
        rep.junction_x.append(float(m_))
        rep.junction_kind.append("continuous")
        rep.continuity_residual.append(float(abs(g)))
        rep.reflection_residual.append(float("nan"))
    return rep


# ---------------------------------------------------------------------------
# monotonicity in the order


class Monotonicity(NamedTuple):
    orders: list[int]
    sse: list[float]
    ok: bool
    violations: list[int]


SLACK = {"dp": 1e-9, "scan": 1e-9, "de": 0.02}


def check_monotonicity(
    target: Dataset | TargetFunction,
    n_max: int,
    solver: str | Callable[[Dataset, int], PwlModel] = "dp",
    slack: float | None = None,
    m: int = 2000,
) -> Monotonicity:
    """Optimal sse for orders ``1..n_max`` and whether it never increases.

    ``solver`` is ``"dp"``, ``"scan"``, ``"de"`` or a callable
    ``(data, n) -> PwlModel``. Order 1 is the single least-squares line for
    every solver. A step counts as increasing when
    ``sse[n+1] > sse[n] * (1 + slack) + 1e-12 * var(y) * m``.
    """
    from . import oracle

    if n_max < 2:
        raise ContractError("n_max must be >= 2")
    data = make_grid(target, m) if isinstance(target, TargetFunction) else target
    if isinstance(solver, str):
        if slack is None:
            slack = SLACK[solver]
        fn = {
            "dp": oracle.solve_pwla_dp,
            "scan": oracle.solve_cpwla_scan,
            "de": oracle.solve_cpwla_de,
        }[solver]
    else:
        fn = solver
        slack = 1e-9 if slack is None else slack

    line = fit_line(MomentCache.from_dataset(data), 0, data.m).sse
    errs = [line] + [sse(fn(data, n), data) for n in range(2, n_max + 1)]
    floor = 1e-12 * float(np.var(data.ys)) * data.m
    bad = [n + 2 for n, (s0, s1) in enumerate(zip(errs, errs[1:])) if s1 > s0 * (1 + slack) + floor]
    return Monotonicity(list(range(1, n_max + 1)), errs, not bad, bad)
