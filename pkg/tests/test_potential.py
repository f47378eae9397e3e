import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.interpolate import CubicHermiteSpline

from infswap.potential import (
    ConditionViolation, LandscapeError, LandscapeGraph, classify_two_well, condition_bullets,
    extract_landscape, flat_potential, format_critical_points, franz_potential, hermite_potential,
    parse_critical_points, polynomial_potential, potential_from_dict,
)


def franz_formula(x, th):
    return (3 * x**4 - 4 * (th - 1) * x**3 - 6 * th * x**2) / (2 * th + 1) + 1


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.85, 1.0])
def test_franz_matches_formula(theta):
    p = franz_potential(theta)
    xs = np.linspace(-2.4, 1.9, 101)
    assert np.allclose(p.evaluate(xs), franz_formula(xs, theta), rtol=1e-13, atol=1e-13)


def test_franz_landmarks(franz):
    assert franz.evaluate(-1.0) == pytest.approx(0.0, abs=1e-14)
    assert franz.evaluate(0.0) == pytest.approx(1.0)
    assert franz.gradient(0.85) == pytest.approx(0.0, abs=1e-12)
    assert franz.evaluate(0.85) == pytest.approx(0.35175694444, rel=1e-9)


def test_franz_rejects_theta():
    with pytest.raises(ValueError):
        franz_potential(1.5)


@given(st.floats(-2.4, 1.9))
def test_gradient_matches_finite_difference(x):
    p = franz_potential(0.85)
    h = 1e-6
    fd = (p.evaluate(x + h) - p.evaluate(x - h)) / (2 * h)
    assert p.gradient(x) == pytest.approx(fd, rel=1e-6, abs=1e-6)


@given(st.floats(-50, 50))
def test_periodic_extension(x):
    p = franz_potential(0.85)
    assert p.evaluate(x) == pytest.approx(p.evaluate(x + p.period), abs=1e-9)


def test_reflecting_only_when_seam_jumps(franz):
    assert franz.reflecting
    assert not flat_potential().reflecting
    assert not hermite_potential([("min", 0.0, 0.0), ("saddle", 1.0, 2.0)], 2.0).reflecting


def test_hermite_matches_scipy_spline():
    pts = [("min", 0.0, 0.0), ("saddle", 1.0, 3.0), ("min", 2.5, 1.0), ("saddle", 4.0, 5.0)]
    p = hermite_potential(pts, 6.0)
    knots = np.array([0.0, 1.0, 2.5, 4.0, 6.0])
    vals = np.array([0.0, 3.0, 1.0, 5.0, 0.0])
    ref = CubicHermiteSpline(knots, vals, np.zeros(5))
    xs = np.linspace(0, 5.999, 301)
    assert np.allclose(p.evaluate(xs), ref(xs), atol=1e-12)
    assert np.allclose(p.gradient(xs), ref(xs, 1), atol=1e-10)


def test_hermite_rejects_bad_ordering():
    with pytest.raises(LandscapeError):
        hermite_potential([("min", 0.0, 0.0), ("min", 1.0, 1.0)], 2.0)
    with pytest.raises(LandscapeError):
        hermite_potential([("min", 0.0, 3.0), ("saddle", 1.0, 2.0)], 2.0)


def test_critical_point_text_roundtrip():
    text = "# two wells\nperiod 6\nmin(0, 0)\nsaddle(1, 3)  # barrier\nmin(2.5, 1)\nsaddle(4, 5)\n"
    period, pts = parse_critical_points(text)
    assert period == 6.0 and len(pts) == 4
    again = parse_critical_points(format_critical_points(period, pts))
    assert again == (period, pts)


def test_critical_point_parse_errors():
    with pytest.raises(LandscapeError, match="period"):
        parse_critical_points("min(0, 0)\n")
    with pytest.raises(LandscapeError, match="line 2"):
        parse_critical_points("period 2\nmax(0, 1)\n")


def test_extract_franz(franz_landscape):
    lg = franz_landscape
    locs = sorted(round(p.location, 6) for p in lg.minima)
    assert locs == [-1.0, 0.85]
    vals = sorted(p.value for p in lg.saddles)
    assert vals[0] == pytest.approx(1.0, abs=1e-12)
    assert vals[1] == pytest.approx(29.125)
    assert lg.violations() == []


def test_extract_hermite_recovers_knots():
    pts = [("min", 0.0, 0.0), ("saddle", 1.0, 3.0), ("min", 2.5, 1.0), ("saddle", 4.0, 5.0)]
    lg = extract_landscape(hermite_potential(pts, 6.0))
    got = sorted((round(p.location, 7), round(p.value, 9)) for p in lg.minima + lg.saddles)
    assert got == [(0.0, 0.0), (1.0, 3.0), (2.5, 1.0), (4.0, 5.0)]


def test_degenerate_critical_point_named():
    p = polynomial_potential([0, 0, 0, 0, 1.0], -1.0, 1.0)  # x^4 has a flat minimum at 0
    with pytest.raises(LandscapeError, match="x=0"):
        extract_landscape(p)


def test_single_well_self_loop():
    lg = extract_landscape(hermite_potential([("min", 0.0, 0.0), ("saddle", 1.0, 2.0)], 2.0))
    (m,) = lg.minima
    assert lg.neighbours(m.id)


def test_classify_two_well(franz_landscape):
    spec = classify_two_well(franz_landscape)
    assert spec.h_L == pytest.approx(1.0)
    assert spec.h_R == pytest.approx(1 - 0.35175694444, rel=1e-9)
    assert spec.x_L == pytest.approx(-1.0)


def test_classify_rejects_three_wells(three_well_chain):
    with pytest.raises(ConditionViolation, match="two local minima"):
        classify_two_well(three_well_chain)


def test_classify_rejects_equal_minima():
    lg = LandscapeGraph.chain([0, 1, 0, 2])
    with pytest.raises(ConditionViolation, match=r"V\(x_L\) < V\(x_R\)"):
        classify_two_well(lg)


def test_condition_bullets(franz):
    assert all(condition_bullets(franz).values())
    sym = franz_potential(1.0)  # symmetric wells violate the strict ordering
    b = condition_bullets(sym)
    assert not b["two_minima"]


def test_potential_dict_roundtrip(franz):
    p2 = potential_from_dict(franz.params)
    xs = np.linspace(-2.5, 2.0, 50, endpoint=False)
    assert np.array_equal(p2.evaluate(xs), franz.evaluate(xs))
