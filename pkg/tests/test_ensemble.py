import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from infswap.ensemble import (
    CapacityError, EnsembleState, TemperatureLadder, compute_weights, excess_energy,
    ins_coefficients, permutation_table, symmetrized_potential,
)
from infswap.potential import franz_potential


@st.composite
def ladders(draw, max_k=5):
    K = draw(st.integers(1, max_k))
    rest = sorted(draw(st.lists(st.floats(0.01, 1.0), min_size=K - 1, max_size=K - 1)), reverse=True)
    return TemperatureLadder(tuple([1.0] + rest))


@st.composite
def states(draw, max_k=5):
    lad = draw(ladders(max_k))
    v = draw(st.lists(st.floats(0.0, 30.0), min_size=lad.K, max_size=lad.K))
    return lad, np.array(v)


def test_ladder_validation():
    with pytest.raises(ValueError, match="not in Delta"):
        TemperatureLadder((0.9, 0.5))
    with pytest.raises(ValueError, match="not in Delta"):
        TemperatureLadder((1.0, 0.5, 0.7))
    with pytest.raises(ValueError, match="not in Delta"):
        TemperatureLadder((1.0, 0.0))
    assert TemperatureLadder.geometric(3).alphas == (1, Fraction(1, 2), Fraction(1, 4))


def test_permutation_table_cap():
    assert permutation_table(3).shape == (6, 3)
    with pytest.raises(CapacityError):
        permutation_table(9)


@given(states())
def test_symmetrized_potential_is_permutation_minimum(data):
    lad, v = data
    brute = min(sum(a * v[s[l]] for l, a in enumerate(lad.alphas))
                for s in itertools.permutations(range(lad.K)))
    assert symmetrized_potential(v.tolist(), lad) == pytest.approx(brute, abs=1e-9)
    assert excess_energy(v.tolist(), lad) >= -1e-9


def test_symmetrized_potential_exact():
    lad = TemperatureLadder((1, Fraction(1, 2)))
    assert symmetrized_potential([0, 4], lad) == 2
    assert symmetrized_potential([Fraction(3, 2), 0], lad) == Fraction(3, 4)


@given(states(), st.floats(0.01, 5.0))
def test_weights_are_doubly_stochastic(data, eps):
    lad, v = data
    t = compute_weights(EnsembleState(np.zeros(lad.K), v), lad, eps)
    assert t.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(t.rho.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(t.rho.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(t.rho >= 0)


@given(states(max_k=4), st.floats(0.05, 2.0))
def test_weights_match_direct_formula(data, eps):
    lad, v = data
    t = compute_weights(EnsembleState(np.zeros(lad.K), v), lad, eps)
    perms = list(itertools.permutations(range(lad.K)))
    e = np.array([sum(a * v[s[l]] for l, a in enumerate(lad.alphas)) for s in perms])
    w = np.exp(-(e - e.min()) / eps)
    w /= w.sum()
    for s, ws in zip(perms, w):
        assert t.weight_of(s) == pytest.approx(ws, rel=1e-9, abs=1e-300)


@given(states(max_k=4), st.floats(0.05, 2.0))
def test_halving_eps_concentrates_weight(data, eps):
    lad, v = data
    st0 = EnsembleState(np.zeros(lad.K), v)
    w1 = compute_weights(st0, lad, eps).weights.max()
    w2 = compute_weights(st0, lad, eps / 2).weights.max()
    assert w2 >= w1 - 1e-12


def test_weights_survive_tiny_eps():
    lad = TemperatureLadder((1.0, 0.5))
    t = compute_weights(EnsembleState(np.zeros(2), np.array([0.0, 5.0])), lad, 1e-4)
    assert np.isfinite(t.rho).all()
    # the low-energy particle takes the coldest slot
    assert t.rho[0, 0] == pytest.approx(1.0) and t.rho[1, 0] == pytest.approx(0.0)


def test_rejects_nonpositive_eps():
    lad = TemperatureLadder((1.0,))
    with pytest.raises(ValueError):
        compute_weights(EnsembleState(np.zeros(1), np.zeros(1)), lad, 0.0)


def test_ins_coefficients_single_temperature():
    p = franz_potential(0.85)
    st0 = EnsembleState.from_positions([0.3], p)
    drift, amp = ins_coefficients(st0, TemperatureLadder((1.0,)), 0.25, p)
    assert drift[0] == pytest.approx(-p.gradient(0.3))
    assert amp[0] == math.sqrt(2 * 0.25)


def test_ins_coefficients_equal_positions():
    p = franz_potential(0.85)
    st0 = EnsembleState.from_positions([0.3, 0.3], p)
    _, amp = ins_coefficients(st0, TemperatureLadder((1.0, 0.5)), 0.25, p)
    # equal energies give uniform weights, so each particle sees the mean inverse multiplier
    assert np.allclose(amp, math.sqrt(2 * 0.25 * 1.5))
