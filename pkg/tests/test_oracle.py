import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pwla import ContractError, Dataset, Interval, TargetFunction, fit_cpwl_fixed, make_grid, mse, sse
from pwla.linfit import MomentCache, fit_line
from pwla.oracle import (
    DeConfig, InfeasibleError, brute_force_pwla, grid_optima, pwla_dp_table, repair, solve_cpwla_de,
    solve_cpwla_scan, solve_pwla_dp,
)

from brute import pwla as brute_pwla
from brute import scan_cpwla as brute_scan


def _linear(m=200):
    return make_grid(TargetFunction("lin", lambda x: 0.5 - 2 * x, Interval(-1.0, 1.0)), m)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_dp_linear_target_is_exact(n):
    d = _linear()
    assert sse(solve_pwla_dp(d, n), d) <= 1e-20 * d.m + 1e-24


def test_dp_x2_two_segments_are_reflections(grid):
    d = grid("x2")
    model = solve_pwla_dp(d, 2)
    assert abs(model.interior[0]) <= d.spacing
    a1, a2 = model.intercepts
    b1, b2 = model.slopes
    assert b2 == pytest.approx(-b1, abs=1e-9)
    assert a2 == pytest.approx(a1, abs=1e-9)


def test_dp_x3_symmetric_optima(grid):
    d = grid("x3")
    model = solve_pwla_dp(d, 2)
    mirrored = model.mirrored()
    assert sse(mirrored, d) == pytest.approx(sse(model, d), abs=1e-9)


def test_dp_infeasible():
    d = _linear(9)
    with pytest.raises(InfeasibleError):
        solve_pwla_dp(d, 5)
    with pytest.raises(ContractError):
        solve_pwla_dp(d, 0)


def test_dp_table_invariants(grid):
    d = grid("table2_2", 120)
    cache = MomentCache.from_dataset(d)
    table = pwla_dp_table(d, 4, cache)
    finite = np.isfinite(table.cost)
    for k in range(1, 4):
        both = finite[k] & finite[k - 1]
        assert np.all(table.cost[k][both] <= table.cost[k - 1][both] + 1e-9)
    for j in range(2, d.m + 1):
        assert table.cost[0, j] == pytest.approx(fit_line(cache, 0, j).sse, abs=1e-9)


@given(
    arrays(np.float64, st.integers(6, 22), elements=st.floats(-5, 5)),
    st.integers(1, 3),
)
def test_dp_equals_brute_force(ys, n):
    d = Dataset(np.linspace(-1, 1, len(ys)), ys)
    if d.m < 2 * n:
        return
    got = sse(solve_pwla_dp(d, n), d)
    ref, _ = brute_pwla(d.xs, d.ys, n)
    assert got == pytest.approx(ref, abs=1e-12 * (1 + ref))
    assert brute_force_pwla(d, n)[0] == pytest.approx(ref, abs=1e-12 * (1 + ref))


@given(
    arrays(np.float64, st.integers(5, 24), elements=st.floats(-5, 5)),
    st.integers(2, 3),
)
def test_scan_equals_brute_force(ys, n):
    d = Dataset(np.linspace(0, 3, len(ys)), ys)
    got = sse(solve_cpwla_scan(d, n), d)
    ref, _ = brute_scan(d.xs, d.ys, n)
    assert got == pytest.approx(ref, abs=1e-12 * (1 + ref))


def test_scan_x2_at_origin(grid):
    d = grid("x2")
    assert abs(solve_cpwla_scan(d, 2).interior[0]) <= d.spacing


def test_scan_x3_two_symmetric_optima(grid):
    d = grid("x3")
    optima = grid_optima(d, 2)
    assert len(optima) == 2
    (s1, (i1,), m1), (s2, (i2,), m2) = optima
    assert i1 + i2 == d.m - 1
    assert abs(s1 - s2) <= 1e-9
    assert m1.interior[0] == pytest.approx(-0.7071, abs=0.01)
    assert solve_cpwla_scan(d, 2).interior[0] == m1.interior[0]


def test_scan_linear_target_picks_smallest_breakpoint():
    d = _linear(50)
    model = solve_cpwla_scan(d, 2)
    assert sse(model, d) <= 1e-20
    assert model.interior[0] == d.xs[1]


def test_scan_refuses_high_order(grid):
    with pytest.raises(ContractError, match="differential evolution"):
        solve_cpwla_scan(grid("x2", 50), 4)


def test_de_mix1_reported_breakpoints(grid):
    d = grid("mix1")
    model = solve_cpwla_de(d, 4, DeConfig(seed=0))
    np.testing.assert_allclose(model.interior, [-0.4082, -0.1055, 0.4660], atol=0.01)
    assert model.continuous


@pytest.mark.parametrize("name", ["x2", "x3", "mix1"])
def test_de_agrees_with_scan_at_two_segments(grid, name):
    d = grid(name)
    scan = sse(solve_cpwla_scan(d, 2), d)
    model = solve_cpwla_de(d, 2, DeConfig(seed=3))
    de = sse(model, d)
    # continuous breakpoints can only improve on the grid optimum, by a
    # quantization term of order (grid step)^2; x^2 has its optimum midway
    # between two samples, the worst case
    assert de <= scan * (1 + 1e-12)
    assert (scan - de) / scan <= 1e-4
    # snapping the DE breakpoint to its nearer grid neighbour lands on the scan optimum
    k = d.nearest_index(model.interior[0])
    idx = [k - 1, k, k + 1]
    best = min(fit_cpwl_fixed(d, [d.xs[i]]).sse for i in idx)
    assert best == pytest.approx(scan, rel=1e-9)


def test_de_is_deterministic(grid):
    d = grid("table2_1", 500)
    a = solve_cpwla_de(d, 4, DeConfig(seed=11))
    b = solve_cpwla_de(d, 4, DeConfig(seed=11))
    assert a.interior.tobytes() == b.interior.tobytes()
    assert a.intercepts.tobytes() == b.intercepts.tobytes()


def test_repair_nudges_duplicates():
    out = repair([0.2, 0.2, 0.2], -1.0, 1.0, 0.01)
    assert np.all(np.diff(out) >= 0.01 - 1e-15)
    out = repair([5.0, -5.0], -1.0, 1.0, 0.01)
    assert out[0] >= -0.99 and out[1] <= 0.99


def test_de_config_validation():
    with pytest.raises(ContractError):
        DeConfig(population=3)
    with pytest.raises(ContractError):
        DeConfig(crossover=1.5)
    with pytest.raises(ContractError):
        DeConfig(weight=2.5)
    assert DeConfig().population_for(11) == 165
    for bad in ({"init": "lhs"}, {"strategy": "best2bin"}, {"dither": (0.9, 0.5)}, {"dither": (0.5, 2.5)}):
        with pytest.raises(ContractError):
            DeConfig(**bad)


@pytest.mark.parametrize("extra", [{"strategy": "best1bin"}, {"dither": (0.5, 1.0)}, {"init": "random"}])
def test_de_variants_are_deterministic_and_sane(grid, extra):
    d = grid("mix1", 400)
    a = solve_cpwla_de(d, 3, DeConfig(seed=5, **extra))
    b = solve_cpwla_de(d, 3, DeConfig(seed=5, **extra))
    np.testing.assert_array_equal(a.breakpoints, b.breakpoints)
    # the polished result should not lose to the best grid-restricted fit
    assert sse(a, d) <= sse(solve_cpwla_scan(d, 3), d) * (1 + 1e-6)


def test_de_handles_tiny_grid():
    d = _linear(12)
    model = solve_cpwla_de(d, 3, DeConfig(generations=5))
    assert sse(model, d) <= 1e-18
    with pytest.raises(ContractError):
        solve_cpwla_de(d, 1)


@pytest.mark.parametrize("name", ["x2", "table2_3"])
def test_orders_do_not_increase_error(grid, name):
    d = grid(name, 400)
    errs = [mse(solve_pwla_dp(d, n), d) for n in range(1, 6)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    c2, c3 = sse(solve_cpwla_scan(d, 2), d), sse(solve_cpwla_scan(d, 3), d)
    assert c3 <= c2 * (1 + 1e-9)
