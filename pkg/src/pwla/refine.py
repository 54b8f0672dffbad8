"""Breakpoint selection by over-fitting and pruning.

An LNN with more neurons than needed is trained, converted to a PWL
model, and its breakpoints are removed greedily: the one whose removal
(replacing its two segments by the chord between its neighbours) costs
least against the target goes first. The survivors get an exact
fixed-breakpoint least-squares refit.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .core import ContractError, Dataset, PwlModel, TargetFunction, make_grid, mse
from .linfit import MomentCache, fit_cpwl_fixed, fit_line
from .lnn import LnnParams, TrainConfig, TrainTrace, to_pwl, train


def _chord_mse(kx: np.ndarray, ky: np.ndarray, i: int, data: Dataset) -> float:
    x0, x1 = kx[i - 1], kx[i + 1]
    lo = np.searchsorted(data.xs, x0, side="left")
    hi = np.searchsorted(data.xs, x1, side="right")
    xs, ys = data.xs[lo:hi], data.ys[lo:hi]
    if len(xs) == 0:
        return 0.0
    t = (xs - x0) / (x1 - x0)
    chord = ky[i - 1] + t * (ky[i + 1] - ky[i - 1])
    return float(np.mean((ys - chord) ** 2))


def _knots(model: PwlModel) -> tuple[np.ndarray, np.ndarray]:
    kx = np.array(model.breakpoints, dtype=float)
    # right-continuous values at interior knots, closed end on the right
    ky = np.concatenate([model.intercepts + model.slopes * kx[:-1],
                         [model.intercepts[-1] + model.slopes[-1] * kx[-1]]])
    return kx, ky


def chord_cost(model: PwlModel, data: Dataset, i: int) -> float:
    """Mse of the chord that would replace interior breakpoint ``i``.

    ``i`` indexes ``model.interior`` (0-based). The chord joins the model
    values at the neighbouring breakpoints and is compared with the target
    samples between them, endpoints included.
    """
    if not 0 <= i < len(model.interior):
        raise ContractError(f"interior index {i} out of range for {len(model.interior)} breakpoints")
    kx, ky = _knots(model)
    return _chord_mse(kx, ky, i + 1, data)


def prune(model: PwlModel, data: Dataset, keep: int) -> list[float]:
    """Greedily drop interior breakpoints until ``keep`` remain.

    After each removal the costs of the two new neighbours are recomputed
    on the reduced polyline. Ties go to the leftmost breakpoint.
    """
    count = len(model.interior)
    if keep < 0 or keep >= count:
        raise ContractError(f"keep must be in [0, {count}), got {keep}")
    kx, ky = _knots(model)
    kx, ky = list(kx), list(ky)
    costs = [np.nan] + [_chord_mse(np.array(kx), np.array(ky), i, data) for i in range(1, len(kx) - 1)] + [np.nan]
    while len(kx) - 2 > keep:
        i = 1 + int(np.argmin(costs[1:-1]))
        del kx[i], ky[i], costs[i]
        ax, ay = np.array(kx), np.array(ky)
        for j in (i - 1, i):
            if 0 < j < len(kx) - 1:
                costs[j] = _chord_mse(ax, ay, j, data)
    return sorted(float(x) for x in kx[1:-1])


class RefineResult(NamedTuple):
    model: PwlModel
    mse: float
    lnn: LnnParams
    trace: TrainTrace
    merged: int


def refine_pipeline(
    target: Dataset | TargetFunction,
    n_target: int,
    n_over: int,
    cfg: TrainConfig = TrainConfig(),
    m: int = 2000,
) -> RefineResult:
    """Train ``n_over - 1`` neurons, prune to ``n_target - 1`` breakpoints, refit.

    Returns the refit continuous model and its mse. If training leaves
    fewer distinct active breakpoints than ``n_target - 1`` no pruning is
    needed; ``merged`` reports how many segments were lost that way.
    """
    if n_target < 1 or n_over <= n_target:
        raise ContractError(f"need n_over > n_target >= 1, got n_over={n_over}, n_target={n_target}")
    data = make_grid(target, m) if isinstance(target, TargetFunction) else target
    params, trace = train(data, n_over - 1, cfg)
    over = to_pwl(params)
    want = n_target - 1
    have = len(over.interior)
    bps = prune(over, data, want) if have > want else list(over.interior)
    if bps:
        fit = fit_cpwl_fixed(data, bps).model
    else:
        seg = fit_line(MomentCache.from_dataset(data), 0, data.m).segment
        fit = PwlModel([data.xs[0], data.xs[-1]], [seg.a], [seg.b], continuous=True)
    return RefineResult(fit, mse(fit, data), params, trace, max(0, want - have))
