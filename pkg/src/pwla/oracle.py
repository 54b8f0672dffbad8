"""Reference solvers for the optimal piecewise linear approximation.

* :func:`solve_pwla_dp` - exact dynamic programme for the discontinuous
  problem with breakpoints on grid points.
* :func:`solve_cpwla_scan` - exhaustive grid enumeration for the
  continuous problem with one or two interior breakpoints.
* :func:`solve_cpwla_de` - differential evolution over continuous
  breakpoint positions, scored by the fixed-breakpoint hinge fit.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .core import ContractError, Dataset, PwlaError, PwlModel
from .linfit import (
    IllPosedError,
    MomentCache,
    cpwl_sse,
    fit_cpwl_fixed,
    fit_line,
    hinge_design,
    segment_sse_matrix,
)

log = logging.getLogger(__name__)


class InfeasibleError(PwlaError, ValueError):
    """The requested order cannot be realised on the given samples."""


# ---------------------------------------------------------------------------
# dynamic programme


@dataclass(frozen=True, eq=False)
class DpTable:
    """``cost[k-1, j]``: best sse of ``k`` segments over the first ``j`` samples."""

    cost: np.ndarray
    arg: np.ndarray


def pwla_dp_table(data: Dataset, n: int, cache: MomentCache | None = None) -> DpTable:
    m = data.m
    if n < 1:
        raise ContractError(f"order must be >= 1, got {n}")
    if m < 2 * n:
        raise InfeasibleError(f"{n} segments need at least {2 * n} samples, have {m}")
    cache = cache or MomentCache.from_dataset(data)
    S = segment_sse_matrix(cache)
    cost = np.full((n, m + 1), np.inf)
    arg = np.zeros((n, m + 1), dtype=np.int64)
    cost[0] = S[0]
    for k in range(1, n):
        total = cost[k - 1][:, None] + S
        arg[k] = np.argmin(total, axis=0)
        cost[k] = total[arg[k], np.arange(m + 1)]
    return DpTable(cost, arg)


def _model_from_splits(data: Dataset, cache: MomentCache, splits) -> PwlModel:
    bounds = [0, *splits, data.m]
    a, b = [], []
    for i, j in zip(bounds, bounds[1:]):
        seg = fit_line(cache, i, j).segment
        a.append(seg.a)
        b.append(seg.b)
    bps = [data.xs[0], *(data.xs[s] for s in splits), data.xs[-1]]
    return PwlModel(bps, a, b, continuous=False)


def solve_pwla_dp(data: Dataset, n: int) -> PwlModel:
    """Globally optimal ``n``-segment discontinuous fit with grid breakpoints.

    A breakpoint at grid point ``xs[s]`` puts sample ``s`` in the segment on
    its right. Every segment holds at least two samples. O(m^2 n).
    """
    cache = MomentCache.from_dataset(data)
    table = pwla_dp_table(data, n, cache)
    splits = []
    j = data.m
    for k in range(n - 1, 0, -1):
        j = int(table.arg[k, j])
        splits.append(j)
    return _model_from_splits(data, cache, splits[::-1])


def brute_force_pwla(data: Dataset, n: int) -> tuple[float, tuple[int, ...]]:
    """Enumerate every split tuple; each segment fitted with ``lstsq``.

    Exponential in ``n``; intended as an independent check of the DP on
    small grids.
    """
    m = data.m
    best = (np.inf, ())
    for splits in itertools.combinations(range(2, m - 1), n - 1):
        bounds = (0, *splits, m)
        if any(j - i < 2 for i, j in zip(bounds, bounds[1:])):
            continue
        total = 0.0
        for i, j in zip(bounds, bounds[1:]):
            X = np.column_stack([np.ones(j - i), data.xs[i:j]])
            coef = np.linalg.lstsq(X, data.ys[i:j], rcond=None)[0]
            r = data.ys[i:j] - X @ coef
            total += float(r @ r)
        if total < best[0]:
            best = (total, splits)
    return best


# ---------------------------------------------------------------------------
# grid scan for low-order continuous fits


def _suffix(a):
    out = np.zeros(len(a) + 1)
    out[:-1] = np.cumsum(a[::-1])[::-1]
    return out


def scan_scores(data: Dataset, n: int) -> np.ndarray:
    """Continuous-fit sse for every grid breakpoint choice.

    For ``n == 2`` returns a vector indexed by the breakpoint's sample
    index ``p``; for ``n == 3`` a matrix indexed by ``(p, q)`` with
    ``p < q`` (other entries ``inf``). Candidates are ``1 <= p < m-1``.
    The hinge-basis normal equations are assembled from suffix sums, so
    these are fast screening values; the winner is re-fitted by QR.
    """
    if n not in (2, 3):
        raise ContractError(f"grid scan supports n in {{2, 3}}, got {n}; use differential evolution")
    m = data.m
    if m < n + 2:
        raise InfeasibleError(f"need at least {n + 2} samples for a {n}-segment scan")
    x0 = float(np.mean(data.xs))
    y0 = float(np.mean(data.ys))
    t = data.xs - x0
    y = data.ys - y0
    N, T, T2, Y, TY = (_suffix(v) for v in (np.ones(m), t, t * t, y, t * y))
    yy = float(y @ y)
    tau = t  # breakpoint at sample p, in centred coordinates

    # fixed block for the basis [1, t]
    g00, g01, g11 = float(m), T[0], T2[0]
    r0, r1 = Y[0], TY[0]
    cand = np.arange(1, m - 1)

    def hinge_cols(p):
        tp = tau[p]
        return (T[p] - tp * N[p], T2[p] - tp * T[p], T2[p] - 2 * tp * T[p] + tp * tp * N[p],
                TY[p] - tp * Y[p])

    if n == 2:
        c0, c1, cc, cy = hinge_cols(cand)
        G = np.empty((len(cand), 3, 3))
        G[:, 0, 0], G[:, 0, 1], G[:, 1, 1] = g00, g01, g11
        G[:, 1, 0] = g01
        G[:, 0, 2] = G[:, 2, 0] = c0
        G[:, 1, 2] = G[:, 2, 1] = c1
        G[:, 2, 2] = cc
        rhs = np.stack([np.full(len(cand), r0), np.full(len(cand), r1), cy], axis=1)
        beta = np.linalg.solve(G, rhs[..., None])[..., 0]
        out = np.full(m, np.inf)
        out[cand] = yy - np.einsum("ij,ij->i", beta, rhs)
        return out

    out = np.full((m, m), np.inf)
    for p in cand[:-1]:
        q = np.arange(p + 1, m - 1)
        pc0, pc1, pcc, pcy = hinge_cols(p)
        qc0, qc1, qcc, qcy = hinge_cols(q)
        tp, tq = tau[p], tau[q]
        cross = T2[q] - (tp + tq) * T[q] + tp * tq * N[q]
        k = len(q)
        G = np.empty((k, 4, 4))
        G[:, 0, 0], G[:, 0, 1], G[:, 1, 1] = g00, g01, g11
        G[:, 1, 0] = g01
        G[:, 0, 2] = G[:, 2, 0] = pc0
        G[:, 1, 2] = G[:, 2, 1] = pc1
        G[:, 2, 2] = pcc
        G[:, 0, 3] = G[:, 3, 0] = qc0
        G[:, 1, 3] = G[:, 3, 1] = qc1
        G[:, 3, 3] = qcc
        G[:, 2, 3] = G[:, 3, 2] = cross
        rhs = np.empty((k, 4))
        rhs[:, 0], rhs[:, 1], rhs[:, 2], rhs[:, 3] = r0, r1, pcy, qcy
        beta = np.linalg.solve(G, rhs[..., None])[..., 0]
        out[p, q] = yy - np.einsum("ij,ij->i", beta, rhs)
    return out


def _exact_candidates(data: Dataset, scores: np.ndarray, screen_rtol: float, cap: int):
    """Re-fit screened candidates near the minimum with QR.

    Candidates are taken in lexicographic index order; at most ``cap`` of
    them are re-fitted (relevant only for flat score surfaces such as a
    target that is already linear).
    """
    best = float(np.min(scores))
    scale = float(np.var(data.ys) * data.m)
    keep = np.argwhere(scores <= best + screen_rtol * abs(best) + 1e-10 * scale)[:cap]
    out = []
    for idx in keep:
        mu = data.xs[idx]
        fit = fit_cpwl_fixed(data, mu)
        out.append((fit.sse, tuple(int(i) for i in idx), fit.model))
    return out


def grid_optima(data: Dataset, n: int, rtol: float = 1e-9, screen_rtol: float = 1e-6, cap: int = 256):
    """All grid breakpoint tuples whose exact sse is within ``rtol`` of the best.

    Returns a list of ``(sse, sample_indices, model)`` sorted by index tuple.
    """
    cands = _exact_candidates(data, scan_scores(data, n), screen_rtol, cap)
    best = min(c[0] for c in cands)
    scale = float(np.var(data.ys) * data.m)
    tol = rtol * best + 1e-12 * scale
    return sorted((c for c in cands if c[0] <= best + tol), key=lambda c: c[1])


def solve_cpwla_scan(data: Dataset, n: int) -> PwlModel:
    """Exhaustive grid search for the ``n``-segment continuous fit (``n`` = 2 or 3).

    Ties (sse within 1e-9 relative) go to the lexicographically smallest
    breakpoint tuple.
    """
    return grid_optima(data, n)[0][2]


# ---------------------------------------------------------------------------
# differential evolution


DE_STRATEGIES = ("rand1bin", "best1bin")


@dataclass(frozen=True)
class DeConfig:
    population: int = 30
    generations: int = 200
    crossover: float = 0.7
    weight: float = 0.8
    seed: int = 0
    per_dim: int = 15
    tol: float = 1e-3
    polish: bool = True
    strategy: str = "rand1bin"
    dither: tuple[float, float] | None = None
    init: str = "dp"

    def population_for(self, dim: int) -> int:
        return max(self.population, self.per_dim * dim)

    def __post_init__(self):
        if self.population < 4:
            raise ContractError("DE population must be >= 4")
        if self.generations < 1:
            raise ContractError("DE needs at least one generation")
        if not 0.0 <= self.crossover <= 1.0:
            raise ContractError("crossover must lie in [0, 1]")
        if not 0.0 <= self.weight <= 2.0:
            raise ContractError("differential weight must lie in [0, 2]")
        if self.init not in ("dp", "random"):
            raise ContractError(f"unknown DE init {self.init!r}; choose 'dp' or 'random'")
        if self.strategy not in DE_STRATEGIES:
            raise ContractError(f"unknown DE strategy {self.strategy!r}; choose from {', '.join(DE_STRATEGIES)}")
        if self.dither is not None:
            a, b = self.dither
            if not 0.0 <= a <= b <= 2.0:
                raise ContractError("dither must be (low, high) with 0 <= low <= high <= 2")


def repair(mu, lo: float, hi: float, gap: float) -> np.ndarray:
    """Sort, clamp into the open domain and push breakpoints ``gap`` apart."""
    mu = np.sort(np.clip(np.asarray(mu, dtype=float), lo + gap, hi - gap))
    for k in range(1, len(mu)):
        if mu[k] - mu[k - 1] < gap:
            mu[k] = mu[k - 1] + gap
    for k in range(len(mu) - 1, -1, -1):
        top = hi - gap * (len(mu) - k)
        if mu[k] > top:
            mu[k] = top
    return mu


def _score(data: Dataset, mu) -> float:
    try:
        return cpwl_sse(data, mu)
    except (IllPosedError, ContractError):
        return np.inf


def _sse_and_grad(data: Dataset, mu):
    """sse of the continuous fit and its derivative in each breakpoint.

    With the hinge coefficients at their least-squares values,
    d(sse)/d(mu_q) = 2 h_q * sum_{x > mu_q} (y - g(x)).
    """
    order = np.argsort(mu)
    m_sorted = np.asarray(mu, dtype=float)[order]
    center = 0.5 * (data.xs[0] + data.xs[-1])
    X = hinge_design(data.xs, m_sorted, center)
    coef, *_ = np.linalg.lstsq(X, data.ys, rcond=None)
    r = data.ys - X @ coef
    right = data.xs[:, None] > m_sorted[None, :]
    g_sorted = 2.0 * coef[2:] * (r @ right)
    grad = np.empty_like(g_sorted)
    grad[order] = g_sorted
    return float(r @ r), grad


def polish_breakpoints(data: Dataset, mu) -> np.ndarray:
    lo, hi = data.domain.lo, data.domain.hi
    dx = data.spacing
    res = minimize(
        lambda v: _sse_and_grad(data, v),
        np.asarray(mu, dtype=float),
        jac=True,
        method="L-BFGS-B",
        bounds=[(lo + dx, hi - dx)] * len(mu),
        options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500},
    )
    return repair(res.x, lo, hi, dx)


def solve_cpwla_de(data: Dataset, n: int, cfg: DeConfig = DeConfig()) -> PwlModel:
    """DE/rand/1/bin (or best/1/bin) over the ``n - 1`` interior breakpoints.

    With ``cfg.init == "dp"`` one initial member is the polished breakpoint
    set of the exact discontinuous optimum; the rest are uniform random.
    Candidates are repaired (sorted, clamped, spaced one grid step apart)
    before scoring, so the search runs over unordered tuples. The
    population is ``max(population, per_dim * (n - 1))`` and the search
    stops early once the population's sse spread falls below ``tol``
    times its mean (the scipy/pwlf convention). With
    ``cfg.polish`` the best vector is refined by bounded L-BFGS using the
    exact breakpoint gradient and kept only if it improves the sse.
    """
    if n < 2:
        raise ContractError(f"DE needs n >= 2, got {n}")
    dim = n - 1
    lo, hi = data.domain.lo, data.domain.hi
    dx = data.spacing
    if (dim + 1) * dx >= hi - lo:
        raise InfeasibleError(f"cannot place {dim} breakpoints on {data.m} samples")
    rng = np.random.default_rng(cfg.seed)
    npop = cfg.population_for(dim)
    pop = np.array([repair(v, lo, hi, dx) for v in rng.uniform(lo, hi, size=(npop, dim))])
    if cfg.init == "dp" and data.m >= 2 * n:
        # one member starts at the polished breakpoints of the exact discontinuous optimum
        pop[0] = repair(polish_breakpoints(data, solve_pwla_dp(data, n).interior), lo, hi, dx)
    fit = np.array([_score(data, v) for v in pop])

    use_best = cfg.strategy == "best1bin"
    k = int(np.argmin(fit))
    for _ in range(cfg.generations):
        weight = cfg.weight if cfg.dither is None else rng.uniform(*cfg.dither)
        for i in range(npop):
            r1, r2, r3 = rng.choice(np.delete(np.arange(npop), i), 3, replace=False)
            base = pop[k] if use_best else pop[r1]
            mutant = base + weight * (pop[r2] - pop[r3])
            cross = rng.random(dim) < cfg.crossover
            cross[rng.integers(dim)] = True
            trial = repair(np.where(cross, mutant, pop[i]), lo, hi, dx)
            f = _score(data, trial)
            if f <= fit[i]:
                pop[i], fit[i] = trial, f
                if f < fit[k]:
                    k = i
        if np.std(fit) <= cfg.tol * abs(np.mean(fit)):
            break

    k = int(np.argmin(fit))
    best, best_f = pop[k], fit[k]
    if cfg.polish:
        cand = polish_breakpoints(data, best)
        f = _score(data, cand)
        if f < best_f:
            best, best_f = cand, f
    log.debug("DE n=%d seed=%d sse=%.6g", n, cfg.seed, best_f)
    return fit_cpwl_fixed(data, best).model
