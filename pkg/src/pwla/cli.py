"""Command-line entry point: ``pwla fit``, ``pwla bench`` and ``pwla check``.

Exit codes: 0 success, 1 optimality check failed, 2 bad usage or input,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import oracle
from .core import (
    CATALOG, ContractError, Dataset, PwlaError, PwlModel, get_function, load_csv, load_model,
    make_grid, mse, save_model,
)
from .linfit import fit_cpwl_fixed
from .lnn import INIT_METHODS, LnnParams, TrainConfig, init_params, load_lnn, save_lnn, to_pwl, train
from .svg import Series, line_plot
from .theorems import check_theorem1, check_theorem2, grid_moment_tol

log = logging.getLogger("pwla")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3

BENCH_LRS = (1e-3, 5e-4, 3e-4, 1e-4, 5e-5, 3e-5, 1e-5)
BENCH_BATCHES = (20, 40, 100)
BENCH_COLUMNS = ("function", "method", "order", "lr", "batch", "seed", "mse", "seconds")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def parse_orders(text: str) -> list[int]:
    """``"2..12"``, ``"2-12"`` or ``"2,4,6"``."""
    text = text.strip()
    for sep in ("..", "-"):
        if sep in text and not text.startswith("-"):
            a, b = text.split(sep, 1)
            try:
                lo, hi = int(a), int(b)
            except ValueError:
                raise UsageError(f"bad order range {text!r}") from None
            if hi < lo:
                raise UsageError(f"empty order range {text!r}")
            return list(range(lo, hi + 1))
    return parse_ints(text)


def parse_ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def load_data(args) -> Dataset:
    try:
        if args.data:
            return load_csv(args.data)
        return make_grid(get_function(args.fn), args.m)
    except OSError as exc:
        raise UsageError(f"cannot read {args.data}: {exc.strerror}") from None
    except PwlaError as exc:
        raise UsageError(str(exc)) from None


def _add_data_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--fn", choices=sorted(CATALOG), help="catalog target function")
    src.add_argument("--data", help="CSV file with an 'x,y' header and equally spaced x")
    p.add_argument("--m", type=int, default=2000, help="samples for catalog functions (default 2000)")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PWLA_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# fit


def _fit_lnn(data: Dataset, args) -> tuple[PwlModel, LnnParams, float]:
    if args.neurons is None and args.order is None:
        raise UsageError("lnn needs --neurons or --order")
    neurons = args.neurons if args.neurons is not None else args.order - 1
    if neurons < 1:
        raise UsageError("lnn needs at least one neuron")
    cfg = TrainConfig(optimizer=args.opt, learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
                      seed=args.seed, freeze_breakpoints=args.freeze, init=args.init)
    init = None
    if args.breakpoints:
        init = init_params(data, neurons, np.random.default_rng(args.seed), parse_floats(args.breakpoints),
                           method=args.init)
    params, trace = train(data, neurons, cfg, init=init)
    return to_pwl(params), params, trace.seconds


def _fit_model(data: Dataset, args) -> tuple[PwlModel, LnnParams | None, float]:
    if args.method == "lnn":
        return _fit_lnn(data, args)
    if args.method == "fixed":
        if not args.breakpoints:
            raise UsageError("--method fixed needs --breakpoints")
        bps = parse_floats(args.breakpoints)
        t0 = time.perf_counter()
        model = fit_cpwl_fixed(data, bps).model
        return model, None, time.perf_counter() - t0
    if args.order is None:
        raise UsageError(f"--method {args.method} needs --order")
    solver = {
        "dp": oracle.solve_pwla_dp,
        "scan": oracle.solve_cpwla_scan,
        "de": lambda d, n: oracle.solve_cpwla_de(d, n, oracle.DeConfig(seed=args.seed, init=args.de_init)),
    }[args.method]
    t0 = time.perf_counter()
    model = solver(data, args.order)
    return model, None, time.perf_counter() - t0


def cmd_fit(args) -> int:
    data = load_data(args)
    try:
        model, params, seconds = _fit_model(data, args)
    except UsageError:
        raise
    except PwlaError as exc:
        print(f"error: {args.method} failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.no_timing:
        seconds = 0.0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if params is not None:
        save_lnn(params, out / "model.txt")
    else:
        save_model(model, out / "model.txt")
    err = mse(model, data)
    report = {
        "function": args.fn or args.data,
        "method": args.method,
        "order": model.order,
        "continuous": model.continuous,
        "m": data.m,
        "seed": args.seed,
        "mse": err,
        "seconds": seconds,
        "breakpoints": [float(x) for x in model.interior],
    }
    if args.method == "lnn":
        report.update(neurons=params.size, optimizer=args.opt, lr=args.lr, batch=args.batch, epochs=args.epochs,
                      init=args.init, frozen=args.freeze)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    svg = line_plot(
        [Series("target", data.xs, data.ys), Series(f"{args.method} fit", data.xs, model(data.xs), dashed=True)],
        title=f"{report['function']}: {args.method}, order {model.order}, mse {err:.4g}", xlabel="x", ylabel="y",
    )
    (out / "fit.svg").write_text(svg)
    print(f"{args.method} order {model.order}: mse {err:.6g}, breakpoints "
          + ", ".join(f"{x:.6g}" for x in model.interior))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def _bench_job(job: tuple) -> dict:
    fn, method, order, lr, batch, seed, epochs, m, de_init = job
    row = {"function": fn, "method": method, "order": order, "lr": lr, "batch": batch, "seed": seed,
           "mse": math.nan, "seconds": math.nan, "error": ""}
    data = make_grid(get_function(fn), m)
    try:
        if method == "de":
            t0 = time.perf_counter()
            model = oracle.solve_cpwla_de(data, order, oracle.DeConfig(seed=seed, init=de_init))
            row["seconds"] = time.perf_counter() - t0
            row["mse"] = mse(model, data)
        else:
            cfg = TrainConfig(learning_rate=lr, batch_size=batch, epochs=epochs, seed=seed)
            params, trace = train(data, order - 1, cfg)
            row["seconds"] = trace.seconds
            row["mse"] = mse(to_pwl(params), data)
    except PwlaError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _sort_key(row: dict):
    return (row["function"], row["method"], row["order"], -(row["lr"] or 0.0), row["batch"] or 0, row["seed"])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_bench_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCH_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in BENCH_COLUMNS])


def _bench_plots(rows: list[dict], fn: str, out: Path) -> None:
    mine = [r for r in rows if r["function"] == fn]
    orders = sorted({r["order"] for r in mine})
    mse_series, time_series = [], []
    for method in ("lnn", "de"):
        rs = [r for r in mine if r["method"] == method]
        if not rs:
            continue
        best, secs = [], []
        for n in orders:
            at = [r for r in rs if r["order"] == n]
            # best hyperparameter setting by mean mse over seeds
            groups: dict = {}
            for r in at:
                groups.setdefault((r["lr"], r["batch"]), []).append(r["mse"])
            means = [np.mean(v) for v in groups.values() if np.all(np.isfinite(v))]
            best.append(min(means) if means else math.nan)
            t = [r["seconds"] for r in at if np.isfinite(r["seconds"])]
            secs.append(float(np.mean(t)) if t else math.nan)
        label = "LNN (best lr, batch)" if method == "lnn" else "DE"
        mse_series.append(Series(label, orders, best, dashed=method == "de", markers=True))
        time_series.append(Series(label, orders, secs, dashed=method == "de", markers=True))
    (out / f"{fn}_mse.svg").write_text(line_plot(mse_series, f"{fn}: mse vs order", "order", "mse", logy=True))
    (out / f"{fn}_time.svg").write_text(line_plot(time_series, f"{fn}: time per run vs order", "order", "seconds"))


def cmd_bench(args) -> int:
    fns = [f.strip() for f in args.fn.split(",") if f.strip()]
    for f in fns:
        if f not in CATALOG:
            raise UsageError(f"unknown function {f!r}; choose from {', '.join(CATALOG)}")
    orders = parse_orders(args.orders)
    if not orders or min(orders) < 2:
        raise UsageError("orders must be >= 2")
    seeds = parse_ints(args.seeds)
    lrs = parse_floats(args.lrs) if args.lrs else list(BENCH_LRS)
    batches = parse_ints(args.batches) if args.batches else list(BENCH_BATCHES)
    jobs = []
    for fn in fns:
        for n in orders:
            for seed in seeds:
                if not args.no_de:
                    jobs.append((fn, "de", n, None, None, seed, args.epochs, args.m, args.de_init))
                if not args.no_lnn:
                    jobs.extend((fn, "lnn", n, lr, b, seed, args.epochs, args.m, args.de_init)
                                for lr in lrs for b in batches)
    threads = _threads()
    log.info("bench: %d jobs on %d worker(s)", len(jobs), threads)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_bench_job, jobs))
    else:
        rows = []
        for k, job in enumerate(jobs, 1):
            rows.append(_bench_job(job))
            log.info("[%d/%d] %s %s order %d lr=%s batch=%s seed %d: mse %.4g", k, len(jobs), *job[:6],
                     rows[-1]["mse"])
    rows.sort(key=_sort_key)
    failed = [r for r in rows if r["error"]]
    for r in failed:
        print(f"warning: {r['function']} {r['method']} order {r['order']} lr={r['lr']} batch={r['batch']} "
              f"seed {r['seed']}: {r['error']}", file=sys.stderr)
    if args.no_timing:
        for r in rows:
            r["seconds"] = 0.0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_bench_csv(rows, out / "bench.csv")
    for fn in fns:
        _bench_plots(rows, fn, out)
    print(f"wrote {len(rows)} rows to {out / 'bench.csv'} ({len(failed)} failed)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# check


def read_any_model(path) -> PwlModel:
    """Load a ``pwl v1`` or ``lnn v1`` model file as a :class:`PwlModel`."""
    try:
        with open(path) as fh:
            head = fh.readline().split()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        if head[:2] == ["lnn", "v1"]:
            return to_pwl(load_lnn(path))
        return load_model(path)
    except (PwlaError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_check(args) -> int:
    data = load_data(args)
    model = read_any_model(args.model)
    lo, hi = model.domain.lo, model.domain.hi
    scale = max(1.0, abs(lo), abs(hi))
    if abs(lo - data.xs[0]) > 1e-9 * scale or abs(hi - data.xs[-1]) > 1e-9 * scale:
        raise UsageError(f"model domain [{lo:g}, {hi:g}] does not match data [{data.xs[0]:g}, {data.xs[-1]:g}]")
    theorem = args.theorem
    if theorem == "auto":
        theorem = "2" if model.continuous else "1"
    tol = grid_moment_tol(data) if args.grid else args.tol_moment
    try:
        if theorem == "1":
            report = check_theorem1(model, data, tol_moment=tol, tol_junction=args.tol_junction)
        else:
            report = check_theorem2(model, data, tol_moment=tol)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    text = report.to_jsonl()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for msg in report.failures():
        print(f"FAIL {msg}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_CHECK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pwla", description="Piecewise linear approximation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one model and write model.txt, report.json and fit.svg")
    _add_data_args(p)
    p.add_argument("--method", required=True, choices=["lnn", "dp", "scan", "de", "fixed"])
    p.add_argument("--order", type=int, help="number of segments")
    p.add_argument("--neurons", type=int, help="LNN hidden units (default order - 1)")
    p.add_argument("--opt", choices=["adam", "sgd"], default="adam")
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--batch", type=int, default=None, help="mini-batch size (default full batch)")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--init", choices=INIT_METHODS, default="lsq")
    p.add_argument("--freeze", action="store_true", help="keep LNN breakpoints fixed")
    p.add_argument("--de-init", choices=["dp", "random"], default="dp",
                   help="DE starting population; 'dp' seeds one member from the discontinuous optimum")
    p.add_argument("--breakpoints", help="comma-separated interior breakpoints (fixed, or LNN start)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-timing", action="store_true", help="write seconds as 0 for byte-stable output")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", help="LNN hyperparameter sweep and DE baseline over orders")
    p.add_argument("--fn", default="table2_1,table2_2,table2_3", help="comma-separated catalog names")
    p.add_argument("--orders", default="2..12")
    p.add_argument("--seeds", default="0")
    p.add_argument("--lrs", help="comma-separated learning rates (default: 7-value sweep)")
    p.add_argument("--batches", help="comma-separated batch sizes (default 20,40,100)")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--no-de", action="store_true")
    p.add_argument("--de-init", choices=["random", "dp"], default="random",
                   help="DE starting population (default random, the plain DE baseline)")
    p.add_argument("--no-lnn", action="store_true")
    p.add_argument("--no-timing", action="store_true", help="write seconds as 0 for byte-stable output")
    p.add_argument("--out", default="bench")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="verify optimality conditions of a saved model")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--theorem", choices=["auto", "1", "2"], default="auto",
                   help="1: discontinuous conditions, 2: continuous; auto picks by the model's flag")
    p.add_argument("--grid", action="store_true", help="moment tolerance for grid-restricted breakpoints")
    p.add_argument("--tol-moment", type=float)
    p.add_argument("--tol-junction", type=float)
    p.add_argument("--out", help="JSON-lines report path (default stdout)")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PwlaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def console() -> None:
    sys.exit(main())
