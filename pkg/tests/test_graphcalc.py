from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from infswap import graphcalc as g
from infswap.ensemble import TemperatureLadder
from infswap.potential import CriticalPoint, LandscapeGraph


@st.composite
def chains(draw, wells=(2, 3)):
    """Closed chains with a unique global minimum at 0 and integer-ish exact values."""
    H = draw(st.sampled_from(wells))
    mins = [F(0)] + [F(draw(st.integers(1, 40)), 4) for _ in range(H - 1)]
    vals = []
    for i in range(H):
        lo = max(mins[i], mins[(i + 1) % H])
        vals += [mins[i], lo + F(draw(st.integers(1, 40)), 4)]
    return LandscapeGraph.chain(vals)


alphas2 = st.fractions(F(1, 20), F(1)).map(lambda a: TemperatureLadder((F(1), a)))


def lad(*a):
    return TemperatureLadder(tuple(F(x) for x in a))


# one-step costs

def test_one_step_single_particle(two_well_chain):
    lg = two_well_chain
    assert g.one_step_cost((0,), (2,), lg, lad(1)) == 4


def test_one_step_two_particles(two_well_chain):
    assert g.one_step_cost((0, 0), (0, 2), two_well_chain, lad(1, F(1, 2))) == 2


def test_one_step_from_saddle_is_free(two_well_chain):
    # coordinate already sits on the saddle (id 1), so the move costs nothing
    assert g.one_step_cost((1,), (2,), two_well_chain, lad(1)) == 0


def test_one_step_errors(two_well_chain, three_well_chain):
    with pytest.raises(g.StructureError, match="differ in 2"):
        g.one_step_cost((0, 0), (2, 2), two_well_chain, lad(1, F(1, 2)))
    with pytest.raises(g.StructureError, match="not adjacent"):
        g.one_step_cost((1,), (3,), two_well_chain, lad(1))


# W-graph enumeration

def test_wgraph_small_counts():
    assert [gr.arrows for gr in g.enumerate_wgraphs(2, {1})] == [{2: 1}]
    three = {tuple(sorted(gr.arrows.items())) for gr in g.enumerate_wgraphs(3, {1})}
    assert three == {((2, 1), (3, 1)), ((2, 1), (3, 2)), ((2, 3), (3, 1))}
    assert len(g.enumerate_wgraphs(3, {1, 2})) == 2


@pytest.mark.parametrize("n", [2, 3, 4])
def test_wgraph_count_is_cayley(n):
    assert len(g.enumerate_wgraphs(n, {1})) == n ** (n - 2)


def test_wgraph_capacity():
    with pytest.raises(g.GraphCapacityError):
        g.enumerate_wgraphs(10, {1})


def test_wgraphs_are_acyclic_forests():
    for gr in g.enumerate_wgraphs(5, {1, 3}):
        assert set(gr.arrows) == {2, 4, 5}
        for start in gr.arrows:
            node, seen = start, set()
            while node not in {1, 3}:
                assert node not in seen
                seen.add(node)
                node = gr.arrows[node]


@given(st.integers(2, 5), st.data())
def test_w_of_matches_enumeration(n, data):
    cost = {(a, b): F(data.draw(st.integers(0, 30)), 3)
            for a in range(1, n + 1) for b in range(1, n + 1) if a != b}
    k = data.draw(st.integers(1, n - 1))
    target = set(data.draw(st.permutations(range(1, n + 1)))[:k])
    assert g.w_of(target, cost) == g.w_by_enumeration(target, cost, n)


def test_w_of_two_nodes():
    assert g.w_of({1}, {(1, 2): 5, (2, 1): 3}) == 3


def test_w_two_well_single_particle(two_well_chain):
    W = g.w_values(two_well_chain, lad(1))
    assert W == {0: F(5, 2), 1: 4}  # h_R and h_L


def test_w_of_disconnected():
    with pytest.raises(g.StructureError):
        g.w_of({1}, {(1, 2): 1, (3, 2): 1})


# W differences equal energy differences

@given(chains(), alphas2)
def test_w_differences_match_energy(lg, ladder):
    eqs = g.product_equilibria(lg, ladder)
    W = g.w_values(lg, ladder)
    for i in W:
        for j in W:
            assert W[i] - W[j] == eqs[i].u_value - eqs[j].u_value


def test_product_equilibria_order(three_well_chain):
    eqs = g.product_equilibria(three_well_chain, lad(1, F(1, 2)))
    assert len(eqs) == 9
    assert eqs[0].well_ids == (0, 0) and eqs[0].u_value == 0


# h, w and B

def test_h_examples(two_well_chain):
    assert g.compute_h(two_well_chain, lad(1, F(1, 2))) == 2
    assert g.compute_h(two_well_chain, lad(1)) == 4


def test_h_franz(franz_landscape):
    assert g.compute_h(franz_landscape, TemperatureLadder((1.0, 0.5))) == pytest.approx(0.5)


@given(chains(), alphas2)
def test_h_closed_form_matches_exit_cost(lg, ladder):
    # compute_h raises if the closed form and the basin-exit path cost disagree
    assert g.compute_h(lg, ladder) == ladder.last * g.lowest_exit_barrier(lg)


@given(chains(), alphas2)
def test_w_below_bound(lg, ladder):
    w, bound = g.compute_w_and_bound(lg, ladder)
    assert 0 <= w <= bound


@given(chains())
def test_min_max_C_matches_enumeration_and_W_hat(lg):
    c = g.min_max_C(lg)
    assert c == g.min_max_C_by_enumeration(lg)
    w_hat = g.w_values(lg, lad(1))[0]
    assert c <= w_hat


@given(alphas2)
def test_three_well_instance(ladder):
    a2 = ladder.last
    lg = LandscapeGraph.chain([0, 4, 2, 6, 1, 8])
    assert g.compute_h(lg, ladder) == 4 * a2
    w, bound = g.compute_w_and_bound(lg, ladder)
    assert w == 5 * a2
    assert g.w_values(lg, lad(1))[0] == 7
    assert bound == 14 * a2
    assert w < bound


def test_single_well_w_is_zero():
    lg = LandscapeGraph.chain([0, 3])
    assert g.compute_w(lg, lad(1)) == 0
    assert g.compute_B(lg, 3) == 3


def test_B_two_well():
    lg = LandscapeGraph.chain([0, 1, F(1, 2), 9])  # h_L = 1, h_R = 1/2
    assert g.compute_B(lg, 2) == 1
    lg = LandscapeGraph.chain([0, 4, F(3, 2), 20])  # h_L = 4, h_R = 5/2
    assert g.compute_B(lg, 2) == max(4, 2 * F(5, 2))


def radial(N):
    """Global well 0 joined to N satellites of depth 1 through saddles of height 3."""
    minima = [CriticalPoint(0, None, F(0))]
    saddles, edges = [], []
    for k in range(N):
        m, s = 1 + 2 * k, 2 + 2 * k
        minima.append(CriticalPoint(m, None, F(1)))
        saddles.append(CriticalPoint(s, None, F(3)))
        edges.append((0, s, m))
    return LandscapeGraph(minima, saddles, edges)


def test_B_radial_independent_of_N():
    assert g.compute_B(radial(2), 3) == g.compute_B(radial(4), 3) == 6


def test_capacity_beyond_exact_mode(three_well_chain):
    ladder = lad(1, F(1, 2), F(1, 4))  # 27 product equilibria
    with pytest.raises(g.GraphCapacityError):
        g.compute_w(three_well_chain, ladder)
    data = g.graph_rate_data(three_well_chain, ladder)
    assert not data.exact and data.w is None
    assert data.h == F(1, 4) * 4 and data.B == max(4, 3 * 7)
