"""Lattice neural network: one hidden layer of two-branch max units.

Each hidden unit computes ``max(w1 (x - c), w2 (x - c))`` with its hinge
``c = lo + (hi - lo) * sigmoid(delta)`` kept strictly inside the domain.
The output is ``bias + sum_j v_j * unit_j(x)``, a continuous piecewise
linear function with at most one breakpoint per unit.

The output weights ``v_j`` matter: a sum of max-units alone is always
convex, so without them the network could not represent a non-convex
piecewise linear fit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import expit, logit

from .core import ContractError, Dataset, Interval, PwlaError, PwlModel, TargetFunction, make_grid
from .linfit import MomentCache, fit_cpwl_fixed, fit_line


class DivergenceError(PwlaError, RuntimeError):
    """Training loss blew up past the divergence guard."""


DIVERGENCE_FACTOR = 1e6
LSQ_JITTER = 0.1
INIT_METHODS = ("lsq", "curvature", "random")


@dataclass(frozen=True)
class LnnNeuron:
    w1: float
    w2: float
    delta: float
    v: float = 1.0


def breakpoint_of(delta, domain: Interval):
    """Hinge location for breakpoint parameter ``delta``; strictly inside the domain."""
    c = domain.lo + domain.width * expit(delta)
    return np.clip(c, np.nextafter(domain.lo, domain.hi), np.nextafter(domain.hi, domain.lo))


def delta_for(c, domain: Interval):
    """Inverse of :func:`breakpoint_of`."""
    return logit((np.asarray(c, dtype=float) - domain.lo) / domain.width)


@dataclass(eq=False)
class LnnParams:
    """Network parameters as parallel arrays, one entry per hidden unit."""

    w1: np.ndarray
    w2: np.ndarray
    delta: np.ndarray
    v: np.ndarray
    bias: float
    domain: Interval

    def __post_init__(self):
        self.w1 = np.array(self.w1, dtype=float)
        self.w2 = np.array(self.w2, dtype=float)
        self.delta = np.array(self.delta, dtype=float)
        self.v = np.array(self.v, dtype=float)
        self.bias = float(self.bias)
        k = len(self.w1)
        if k < 1:
            raise ContractError("an LNN needs at least one hidden unit")
        if not (self.w2.shape == self.delta.shape == self.v.shape == (k,)):
            raise ContractError("parameter arrays must have one entry per unit")
        if not np.all(np.isfinite(self.to_vector())):
            raise ContractError("LNN parameters must be finite")

    @classmethod
    def from_neurons(cls, neurons, bias: float, domain: Interval) -> LnnParams:
        return cls(
            [u.w1 for u in neurons], [u.w2 for u in neurons],
            [u.delta for u in neurons], [u.v for u in neurons], bias, domain,
        )

    @property
    def neurons(self) -> list[LnnNeuron]:
        return [LnnNeuron(*map(float, t)) for t in zip(self.w1, self.w2, self.delta, self.v)]

    @property
    def size(self) -> int:
        return len(self.w1)

    @property
    def centers(self) -> np.ndarray:
        return breakpoint_of(self.delta, self.domain)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.w1, self.w2, self.delta, self.v, [self.bias]])

    def with_vector(self, theta) -> LnnParams:
        k = self.size
        theta = np.asarray(theta, dtype=float)
        return LnnParams(theta[:k], theta[k:2 * k], theta[2 * k:3 * k], theta[3 * k:4 * k], theta[-1], self.domain)

    def copy(self) -> LnnParams:
        return self.with_vector(self.to_vector())

    def __call__(self, x):
        return lnn_forward(self, x)


def _branches(params: LnnParams, x):
    t = np.asarray(x, dtype=float)[..., None] - params.centers
    z1 = params.w1 * t
    z2 = params.w2 * t
    # ties go to branch 1
    first = z1 >= z2
    return t, first, np.where(first, z1, z2)


def lnn_forward(params: LnnParams, x):
    _, _, h = _branches(params, x)
    out = params.bias + h @ params.v
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class LnnGrad:
    w1: np.ndarray
    w2: np.ndarray
    delta: np.ndarray
    v: np.ndarray
    bias: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.w1, self.w2, self.delta, self.v, [self.bias]])


def lnn_backward(params: LnnParams, xs, ys, freeze_breakpoints: bool = False) -> tuple[float, LnnGrad]:
    """MSE on ``(xs, ys)`` and its analytic gradient.

    For the active branch ``k`` of unit ``j`` at sample ``x``:
    ``dg/dw_k = v_j (x - c_j)``, ``dg/dv_j = w_k (x - c_j)`` and
    ``dg/ddelta_j = -v_j w_k (hi - lo) s (1 - s)`` with ``s = sigmoid(delta_j)``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) == 0:
        raise ContractError("empty batch")
    t, first, h = _branches(params, xs)
    g = params.bias + h @ params.v
    r = g - ys
    loss = float(r @ r) / len(xs)
    dg = 2.0 * r / len(xs)

    dv = dg @ h
    vt = t * params.v
    gw1 = dg @ np.where(first, vt, 0.0)
    gw2 = dg @ np.where(first, 0.0, vt)
    if freeze_breakpoints:
        gd = np.zeros(params.size)
    else:
        s = expit(params.delta)
        w_act = np.where(first, params.w1, params.w2)
        gd = -(dg @ w_act) * params.v * params.domain.width * s * (1.0 - s)
    return loss, LnnGrad(gw1, gw2, gd, dv, float(np.sum(dg)))


def lnn_mse(params: LnnParams, data: Dataset) -> float:
    r = lnn_forward(params, data.xs) - data.ys
    return float(r @ r) / data.m


# ---------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta - self.lr * grad


class Adam:
    def __init__(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Literal["sgd", "adam"] = "adam"
    learning_rate: float = 3e-3
    batch_size: int | None = None  # None means full batch
    epochs: int = 300
    seed: int = 0
    freeze_breakpoints: bool = False
    init: Literal["lsq", "curvature", "random"] = "lsq"

    def __post_init__(self):
        if self.init not in INIT_METHODS:
            raise ContractError(f"unknown init {self.init!r}; choose from {', '.join(INIT_METHODS)}")
        if self.optimizer not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ContractError("learning rate must be positive")
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ContractError("batch size must be >= 1")


@dataclass
class TrainTrace:
    mse: list[float] = field(default_factory=list)
    breakpoints: list[float] = field(default_factory=list)
    seconds: float = 0.0


def _units_from_slopes(lo_slope, hi_slope, centers, data: Dataset) -> LnnParams:
    """Units whose left/right slopes are ``lo_slope``/``hi_slope`` at ``centers``.

    Concave kinks get a negative output weight; ``|v|`` and ``|w|`` are
    balanced so both factors of each product start on the same scale.
    """
    sgn = np.where(hi_slope >= lo_slope, 1.0, -1.0)
    w1, w2 = sgn * lo_slope, sgn * hi_slope
    mag = np.sqrt(np.maximum(np.maximum(np.abs(w1), np.abs(w2)), 1e-3))
    p = LnnParams(w1 / mag, w2 / mag, delta_for(centers, data.domain), sgn * mag, 0.0, data.domain)
    p.bias = float(np.mean(data.ys - lnn_forward(p, data.xs)))
    return p


def init_params(
    data: Dataset,
    n_neurons: int,
    rng: np.random.Generator,
    breakpoints=None,
    method: str = "lsq",
) -> LnnParams:
    """Initial network with hinges at ``breakpoints`` (default: equally spaced).

    Methods
    -------
    ``"random"``
        ``w1, w2 ~ U(-0.5, 0.5)``, ``v = 1``, bias = mean(y).
    ``"curvature"``
        Each unit's kink sign follows the sign of the data's chord-slope
        change at its hinge; slopes are the single-line trend plus random
        ``U(-0.5, 0.5)`` kinks. No piecewise fit is involved.
    ``"lsq"``
        Slopes and bias of the least-squares continuous fit with the
        initial hinges, jittered by ``LSQ_JITTER * U(-0.5, 0.5)``.
    """
    domain = data.domain
    if method not in INIT_METHODS:
        raise ContractError(f"unknown init {method!r}")
    if breakpoints is None:
        n = n_neurons + 1
        c = domain.lo + domain.width * np.arange(1, n) / n
    else:
        c = np.asarray(breakpoints, dtype=float)
        if len(c) != n_neurons:
            raise ContractError(f"need {n_neurons} preset breakpoints, got {len(c)}")
        if np.any((c <= domain.lo) | (c >= domain.hi)):
            raise ContractError("preset breakpoints must lie strictly inside the domain")
    u = rng.uniform(-0.5, 0.5, size=(2, n_neurons))

    if method == "random":
        return LnnParams(u[0], u[1], delta_for(c, domain), np.ones(n_neurons), float(np.mean(data.ys)), domain)

    if method == "curvature":
        knots = np.concatenate([[domain.lo], np.sort(c), [domain.hi]])
        chord = np.diff(np.interp(knots, data.xs, data.ys)) / np.diff(knots)
        turn = np.empty(n_neurons)
        turn[np.argsort(c)] = np.diff(chord)
        trend = fit_line(MomentCache.from_dataset(data), 0, data.m).segment.b / n_neurons
        lo = trend + u[0]
        hi = lo + np.where(turn >= 0, 1.0, -1.0) * np.abs(u[1])
        return _units_from_slopes(lo, hi, c, data)

    order = np.argsort(c)
    fit = fit_cpwl_fixed(data, c[order]).model
    jumps = np.empty(n_neurons)
    jumps[order] = np.diff(fit.slopes)
    lo = fit.slopes[0] / n_neurons + LSQ_JITTER * u[0]
    hi = lo + jumps + LSQ_JITTER * u[1]
    return _units_from_slopes(lo, hi, c, data)


def train(
    target: Dataset | TargetFunction,
    n_neurons: int,
    cfg: TrainConfig = TrainConfig(),
    init: LnnParams | None = None,
    m: int = 2000,
) -> tuple[LnnParams, TrainTrace]:
    """Fit an LNN by (mini-batch) gradient descent on the sample MSE.

    ``init`` overrides the seeded initialisation (e.g. to preset frozen
    breakpoints); the random stream still drives batch shuffling. Every
    epoch records the full-data mse.
    """
    data = make_grid(target, m) if isinstance(target, TargetFunction) else target
    bs = data.m if cfg.batch_size is None else cfg.batch_size
    if bs > data.m:
        raise ContractError(f"batch size {bs} exceeds sample count {data.m}")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(data, n_neurons, rng, method=cfg.init) if init is None else init.copy()
    if params.size != n_neurons:
        raise ContractError(f"initial parameters have {params.size} units, expected {n_neurons}")
    opt = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)
    theta = params.to_vector()
    xs, ys = data.xs, data.ys
    full = bs >= data.m

    trace = TrainTrace()
    start = time.perf_counter()
    mse0 = lnn_mse(params, data)
    limit = DIVERGENCE_FACTOR * max(mse0, np.finfo(float).tiny)
    for epoch in range(cfg.epochs):
        order = None if full else rng.permutation(data.m)
        for s in range(0, data.m, bs):
            if full:
                bx, by = xs, ys
            else:
                idx = order[s:s + bs]
                bx, by = xs[idx], ys[idx]
            _, grad = lnn_backward(params, bx, by, cfg.freeze_breakpoints)
            theta = opt.step(theta, grad.to_vector())
            params = params.with_vector(theta) if np.all(np.isfinite(theta)) else None
            if params is None:
                raise DivergenceError(f"non-finite parameters at epoch {epoch + 1}")
        cur = lnn_mse(params, data)
        trace.mse.append(cur)
        if not np.isfinite(cur) or cur > limit:
            raise DivergenceError(
                f"mse {cur:.3g} exceeds {DIVERGENCE_FACTOR:g} x initial mse {mse0:.3g} at epoch {epoch + 1}"
                f" (lr={cfg.learning_rate:g}, batch={bs})"
            )
    trace.seconds = time.perf_counter() - start
    trace.breakpoints = sorted(float(c) for c in params.centers)
    return params, trace


# ---------------------------------------------------------------------------
# conversion and persistence


def to_pwl(params: LnnParams, tol: float = 1e-9) -> PwlModel:
    """Equivalent continuous :class:`PwlModel`.

    Units whose two slopes agree (``|v (w1 - w2)| <= tol``) carry no
    breakpoint; coincident hinges merge.
    """
    dom = params.domain
    active = np.abs(params.v * (params.w1 - params.w2)) > tol
    inner = np.unique(params.centers[active])
    bps = np.concatenate([[dom.lo], inner, [dom.hi]])
    lo_s = np.minimum(params.w1, params.w2)
    hi_s = np.maximum(params.w1, params.w2)
    c = params.centers
    slopes, icpts = [], []
    for a, b in zip(bps[:-1], bps[1:]):
        mid = 0.5 * (a + b)
        right = mid > c
        # unit contributes v*(slope)*(x - c) on this segment
        s_unit = np.where(right, hi_s, lo_s) * params.v
        slopes.append(float(np.sum(s_unit)))
        icpts.append(float(params.bias - np.sum(s_unit * c)))
    return PwlModel(bps, icpts, slopes, continuous=True)


HEADER = "lnn v1"


def save_lnn(params: LnnParams, path) -> None:
    """Plain text: header ``lnn v1 <lo> <hi>``, one ``w1 w2 delta v`` line per unit, then ``bias <value>``."""
    fmt = "{:.17g}"
    lines = [f"{HEADER} {fmt.format(params.domain.lo)} {fmt.format(params.domain.hi)}"]
    for u in params.neurons:
        lines.append(" ".join(fmt.format(x) for x in (u.w1, u.w2, u.delta, u.v)))
    lines.append(f"bias {fmt.format(params.bias)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_lnn(path) -> LnnParams:
    """Inverse of :func:`save_lnn`; three-column unit lines get ``v = 1``."""
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or lines[0][:2] != HEADER.split() or len(lines[0]) != 4:
        raise ContractError(f"{path}: not an '{HEADER}' model file")
    domain = Interval(float(lines[0][2]), float(lines[0][3]))
    if lines[-1][0] != "bias" or len(lines[-1]) != 2:
        raise ContractError(f"{path}: missing final 'bias' line")
    units = []
    for row in lines[1:-1]:
        if len(row) not in (3, 4):
            raise ContractError(f"{path}: unit lines need 3 or 4 values")
        try:
            units.append(LnnNeuron(*map(float, row)))
        except ValueError:
            raise ContractError(f"{path}: non-numeric unit line") from None
    return LnnParams.from_neurons(units, float(lines[-1][1]), domain)
