import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from pwla import (
    CATALOG, ContractError, Dataset, DomainError, EvaluationError, Interval, PwlModel, Segment,
    TargetFunction, eval_pwl, fit_cpwl_fixed, get_function, load_csv, load_model, make_grid, mse,
    save_csv, save_model, sse,
)
from pwla.oracle import solve_cpwla_scan


def test_interval_rejects_bad_bounds():
    with pytest.raises(ContractError):
        Interval(1.0, 1.0)
    with pytest.raises(ContractError):
        Interval(0.0, math.inf)
    assert 0.5 in Interval(0.0, 1.0)


def test_make_grid_three_points():
    d = make_grid(get_function("x2"), 3)
    np.testing.assert_array_equal(d.xs, [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(d.ys, [1.0, 0.0, 1.0])


def test_make_grid_default_size_hits_endpoints():
    d = make_grid(get_function("x3"), 2000)
    assert d.m == 2000
    assert d.xs[0] == -1.0 and d.xs[1999] == 1.0


def test_sinc_removable_singularity():
    f = get_function("table2_1")
    assert f(np.array([0.0]))[0] == 1.0
    # an even-sized grid on a symmetric domain straddles 0; an odd one lands on it
    assert not np.any(make_grid(f, 2000).xs == 0.0)
    d = make_grid(f, 2001)
    assert d.xs[1000] == 0.0 and d.ys[1000] == 1.0


def test_make_grid_names_bad_x():
    f = TargetFunction("inv", lambda x: 1.0 / x, Interval(-1.0, 1.0))
    with pytest.raises(EvaluationError, match="x=0.0"):
        make_grid(f, 3)
    with pytest.raises(ContractError):
        make_grid(f, 1)


def test_dataset_rejects_nonuniform():
    with pytest.raises(ContractError):
        Dataset(np.array([0.0, 1.0, 3.0]), np.zeros(3))
    with pytest.raises(ContractError):
        Dataset(np.array([0.0, 1.0]), np.zeros(3))


@given(
    lo=st.floats(-100, 100),
    width=st.floats(1e-3, 100),
    m=st.integers(2, 5000),
)
def test_grid_uniformity(lo, width, m):
    f = TargetFunction("lin", lambda x: 2 * x, Interval(lo, lo + width))
    d = make_grid(f, m)
    step = width / (m - 1)
    assert d.xs[0] == lo and d.xs[-1] == lo + width
    # absolute float resolution near max|x| bounds how uniform a grid can be
    floor = max(1.0, np.max(np.abs(d.xs)) / step)
    assert np.max(np.abs(np.diff(d.xs) - step)) / step <= 1e-12 * floor


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_grids_uniform_to_1e12(name):
    d = make_grid(get_function(name), 2000)
    step = d.spacing
    assert np.max(np.abs(np.diff(d.xs) - step)) / step <= 1e-12


def test_eval_identity_line():
    model = PwlModel.from_segments([Segment(0.0, 1.0, 0.0, 1.0)])
    assert eval_pwl(model, 0.5) == 0.5


def test_eval_half_open_convention():
    model = PwlModel([-1.0, 0.0, 1.0], [10.0, 20.0], [1.0, 1.0])
    assert eval_pwl(model, 0.0) == 20.0
    # last segment is closed
    assert eval_pwl(model, 1.0) == 21.0


def test_eval_outside_domain():
    model = PwlModel([0.0, 1.0], [0.0], [1.0])
    with pytest.raises(DomainError):
        eval_pwl(model, 1.5)
    with pytest.raises(DomainError):
        model(np.array([-0.1, 0.5]))


def test_optimal_cpwla_x2_value_at_one():
    # on [0, 1] the continuous least-squares line of x^2 is x - 1/6
    d = make_grid(get_function("x2"), 2001)
    model = fit_cpwl_fixed(d, [0.0]).model
    assert abs(eval_pwl(model, 1.0) - 5.0 / 6.0) < 2e-3


def test_sse_exact_and_constant():
    d = make_grid(TargetFunction("lin", lambda x: 3 * x + 2, Interval(0.0, 1.0)), 50)
    model = PwlModel([0.0, 1.0], [2.0], [3.0])
    assert sse(model, d) == pytest.approx(0.0, abs=1e-24)
    zero = PwlModel([0.0, 1.0], [0.0], [0.0])
    ones = Dataset(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    assert sse(zero, ones) == 2.0 and mse(zero, ones) == 1.0


def test_two_segment_x2_against_integral():
    # integral optimum: segments |x| - 1/6, error 2 * int_0^1 (x^2 - x + 1/6)^2 over a length-2 domain
    integral, _ = quad(lambda x: (x * x - x + 1.0 / 6.0) ** 2, 0.0, 1.0)
    target = 2 * integral / 2.0
    assert target == pytest.approx(1.0 / 180.0, rel=1e-12)
    d = make_grid(get_function("x2"), 2000)
    got = mse(solve_cpwla_scan(d, 2), d)
    assert abs(got - target) / target < 0.10


@st.composite
def models(draw, continuous=False):
    n = draw(st.integers(1, 6))
    inner = sorted(set(draw(st.lists(st.floats(-0.99, 0.99), min_size=n - 1, max_size=n - 1))))
    bps = [-1.0] + inner + [1.0]
    if np.any(np.diff(bps) < 1e-6):
        bps = list(np.linspace(-1, 1, len(bps)))
    k = len(bps)
    if continuous:
        ky = draw(st.lists(st.floats(-10, 10), min_size=k, max_size=k))
        return PwlModel.from_knots(bps, ky)
    a = draw(st.lists(st.floats(-10, 10), min_size=k - 1, max_size=k - 1))
    b = draw(st.lists(st.floats(-10, 10), min_size=k - 1, max_size=k - 1))
    return PwlModel(bps, a, b)


@given(models(), st.floats(0.01, 0.99))
def test_eval_is_affine_inside_segments(model, t):
    for seg in model.segments:
        x = seg.lo + t * (seg.hi - seg.lo)
        if seg.lo < x < seg.hi:
            assert eval_pwl(model, x) == seg.a + seg.b * x


@given(models(continuous=True))
def test_continuous_models_meet(model):
    mu = model.interior
    left = model.intercepts[:-1] + model.slopes[:-1] * mu
    assert np.all(np.abs(model.junction_gaps()) <= 1e-9 * (1 + np.abs(left)))


def test_continuous_flag_rejects_jump():
    with pytest.raises(ContractError, match="jumps"):
        PwlModel([-1.0, 0.0, 1.0], [0.0, 1.0], [0.0, 0.0], continuous=True)


def test_model_invariants():
    with pytest.raises(ContractError):
        PwlModel([0.0, 0.0, 1.0], [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ContractError):
        PwlModel([0.0, 1.0], [0.0, 1.0], [0.0])
    with pytest.raises(ContractError):
        Segment(0.0, 0.0, 1.0, 1.0)
    model = PwlModel([0.0, 1.0], [0.0], [1.0])
    with pytest.raises(ValueError):
        model.slopes[0] = 5.0


def test_mirrored():
    model = PwlModel([-1.0, 0.25, 1.0], [0.0, 1.0], [2.0, -1.0])
    mir = model.mirrored()
    xs = np.linspace(-0.99, 0.99, 31)
    xs = xs[np.abs(xs + 0.25) > 1e-9]
    np.testing.assert_allclose(mir(xs), -model(-xs), atol=1e-12)


def test_catalog_is_complete():
    assert set(CATALOG) == {"x2", "x3", "mix1", "table2_1", "table2_2", "table2_3", "sec54"}
    for f in CATALOG.values():
        assert np.all(np.isfinite(make_grid(f, 2000).ys))
    with pytest.raises(ContractError, match="unknown function"):
        get_function("x4")


def test_catalog_spot_values():
    assert get_function("mix1")(0.0) == pytest.approx(1.0)
    assert get_function("table2_2")(np.pi / 2) == pytest.approx(1.0)
    assert get_function("table2_3")(0.0) == pytest.approx(20 - 5 - 3 * math.e)
    assert get_function("sec54")(0.0) == pytest.approx(1 + math.exp(0.5))


def test_csv_round_trip(tmp_path, grid):
    d = grid("table2_1", 101)
    path = tmp_path / "d.csv"
    save_csv(d, path)
    back = load_csv(path)
    np.testing.assert_array_equal(back.xs, d.xs)
    np.testing.assert_array_equal(back.ys, d.ys)


@pytest.mark.parametrize(
    "text, msg",
    [
        ("a,b\n0,1\n1,2\n", "header"),
        ("x,y\n0,1\n", "at least 2"),
        ("x,y\n0,1\n1,oops\n", "non-numeric"),
        ("x,y\n0,1\n1,2\n3,4\n", "equally spaced"),
        ("x,y\n1,1\n0,2\n", "increasing"),
    ],
)
def test_csv_malformed(tmp_path, text, msg):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ContractError, match=msg):
        load_csv(path)


def test_csv_snaps_small_jitter(tmp_path):
    path = tmp_path / "j.csv"
    path.write_text("x,y\n0,0\n0.5000000001,1\n1,2\n")
    d = load_csv(path)
    assert d.xs[1] == 0.5


@given(models())
def test_model_file_round_trip(tmp_path_factory, model):
    path = tmp_path_factory.mktemp("m") / "model.txt"
    save_model(model, path)
    back = load_model(path)
    np.testing.assert_array_equal(back.breakpoints, model.breakpoints)
    np.testing.assert_array_equal(back.intercepts, model.intercepts)
    np.testing.assert_array_equal(back.slopes, model.slopes)
    assert back.continuous == model.continuous


def test_model_file_malformed(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("pwl v1 1\n0 1 2\n")
    with pytest.raises(ContractError):
        load_model(path)
    path.write_text("nonsense\n")
    with pytest.raises(ContractError):
        load_model(path)
