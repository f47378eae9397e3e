"""Freidlin-Wentzell graph arithmetic over product equilibria of the replica system.

All quantities reduce to barrier arithmetic on the symmetrized potential
because the replica dynamics is reversible. Arithmetic is generic, so
landscapes with ``Fraction`` values give exact results.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import networkx as nx

from .ensemble import TemperatureLadder, symmetrized_potential
from .potential import LandscapeGraph

EXACT_CAP = 9


class StructureError(ValueError):
    """A move or cost table does not respect the landscape structure."""


class GraphCapacityError(ValueError):
    pass


class TheoryViolation(AssertionError):
    """A proven inequality failed; indicates an implementation bug."""


@dataclass(frozen=True)
class ProductEquilibrium:
    well_ids: tuple
    u_value: object


def product_equilibria(lg: LandscapeGraph, ladder: TemperatureLadder) -> list[ProductEquilibrium]:
    """All product minima, with ``O_1 = (y_1, ..., y_1)`` first."""
    g = lg.global_min_id
    ids = [g] + sorted(p.id for p in lg.minima if p.id != g)
    out = []
    for combo in itertools.product(ids, repeat=ladder.K):
        u = symmetrized_potential([lg.value(i) for i in combo], ladder)
        out.append(ProductEquilibrium(tuple(combo), u))
    return out


def _u_of(lg, ids, ladder, override=None):
    vals = [lg.value(i) for i in ids]
    if override is not None:
        k, v = override
        vals[k] = v
    return symmetrized_potential(vals, ladder)


def _barrier_between(lg: LandscapeGraph, a: int, b: int):
    if lg.is_min(a) and lg.is_min(b):
        return lg.barrier(a, b)
    if not lg.is_min(a) and lg.is_min(b):
        return lg.value(a) if any(s == a for s, _ in lg.neighbours(b)) else None
    if lg.is_min(a) and not lg.is_min(b):
        return lg.value(b) if any(s == b for s, _ in lg.neighbours(a)) else None
    return None


def one_step_cost(src, dst, lg: LandscapeGraph, ladder: TemperatureLadder):
    """Cost of moving one replica coordinate across its connecting barrier.

    ``src``/``dst`` are tuples of critical-point ids (or ProductEquilibrium).
    The cost is the rise of the symmetrized potential from ``src`` to the
    configuration with the moving coordinate sitting on the barrier.
    """
    a = tuple(getattr(src, "well_ids", src))
    b = tuple(getattr(dst, "well_ids", dst))
    if len(a) != len(b) or len(a) != ladder.K:
        raise StructureError("configurations and ladder differ in length")
    diff = [k for k in range(len(a)) if a[k] != b[k]]
    if len(diff) != 1:
        raise StructureError(f"configurations differ in {len(diff)} coordinates, expected 1")
    k = diff[0]
    top = _barrier_between(lg, a[k], b[k])
    if top is None:
        raise StructureError(f"critical points {a[k]} and {b[k]} are not adjacent")
    rise = _u_of(lg, a, ladder, (k, top)) - _u_of(lg, a, ladder)
    return rise if rise > 0 else 0 * rise


def one_step_graph(lg: LandscapeGraph, ladder: TemperatureLadder, eqs=None):
    """Adjacency ``{i: {j: cost}}`` between product minima (indices into ``eqs``)."""
    eqs = eqs if eqs is not None else product_equilibria(lg, ladder)
    index = {e.well_ids: i for i, e in enumerate(eqs)}
    adj = {i: {} for i in range(len(eqs))}
    for i, e in enumerate(eqs):
        for k, m in enumerate(e.well_ids):
            for s, n in lg.neighbours(m):
                if n == m:
                    continue
                tgt = list(e.well_ids)
                tgt[k] = n
                j = index[tuple(tgt)]
                c = _u_of(lg, e.well_ids, ladder, (k, lg.value(s))) - e.u_value
                if j not in adj[i] or c < adj[i][j]:
                    adj[i][j] = c
    return adj


def shortest_paths(adj: dict, source: int) -> dict:
    dist = {source: 0}
    heap = [(0, 0, source)]
    tie = itertools.count(1)
    done = set()
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, c in adj[u].items():
            nd = d + c
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, next(tie), v))
    return dist


def cost_table(lg: LandscapeGraph, ladder: TemperatureLadder, eqs=None) -> dict:
    """Pairwise arrow costs ``V(O_m, O_n)`` as shortest one-step-move paths."""
    eqs = eqs if eqs is not None else product_equilibria(lg, ladder)
    adj = one_step_graph(lg, ladder, eqs)
    table = {}
    for i in range(len(eqs)):
        d = shortest_paths(adj, i)
        if len(d) != len(eqs):
            raise StructureError("product equilibria are not mutually reachable")
        for j in range(len(eqs)):
            if j != i:
                table[(i, j)] = d[j]
    return table


# ---------------------------------------------------------------------------
# W-graphs


@dataclass(frozen=True)
class WGraph:
    arrows: dict
    target_set: frozenset

    def cost(self, table) -> object:
        return sum((table[(m, n)] for m, n in self.arrows.items()), start=0)


def _reaches(arrows: dict, target: frozenset) -> bool:
    for start in arrows:
        seen = set()
        node = start
        while node not in target:
            if node in seen:
                return False
            seen.add(node)
            node = arrows[node]
    return True


def enumerate_wgraphs(L_size: int, target) -> list[WGraph]:
    """Every W-graph on nodes ``1..L_size`` whose roots are ``target``."""
    if L_size > EXACT_CAP:
        raise GraphCapacityError(f"{L_size} nodes exceeds exact enumeration cap {EXACT_CAP}")
    target = frozenset(target)
    nodes = list(range(1, L_size + 1))
    free = [n for n in nodes if n not in target]
    choices = [[m for m in nodes if m != n] for n in free]
    out = []
    for pick in itertools.product(*choices):
        arrows = dict(zip(free, pick))
        if _reaches(arrows, target):
            out.append(WGraph(arrows, target))
    return out


def w_of(target, cost: dict, nodes=None):
    """Least total arrow cost over W-graphs rooted in ``target``.

    ``cost`` maps ``(m, n)`` to the arrow cost. The target set is merged into
    a single root and the problem becomes a minimum spanning arborescence
    (Edmonds), so no enumeration is needed. Exact for Fraction costs.
    """
    target = set(target)
    if nodes is None:
        nodes = {m for m, _ in cost} | {n for _, n in cost} | target
    nodes = set(nodes)
    if not target or not target <= nodes:
        raise StructureError("target must be a nonempty subset of the nodes")
    free = nodes - target
    if not free:
        return 0
    root = ("root",)
    g = nx.DiGraph()
    g.add_node(root)
    g.add_nodes_from(free)
    # arborescence edges point away from the root, i.e. against the arrows
    for (m, n), c in cost.items():
        if m not in free:
            continue
        src = root if n in target else n
        if g.has_edge(src, m) and not c < g[src][m]["weight"]:
            continue
        g.add_edge(src, m, weight=c)
    try:
        tree = nx.minimum_spanning_arborescence(g, preserve_attrs=True)
    except nx.NetworkXException as exc:
        raise StructureError("cost table is disconnected: no W-graph exists") from exc
    return sum((d["weight"] for _, _, d in tree.edges(data=True)), start=0)


def w_by_enumeration(target, cost: dict, L_size: int):
    """Brute-force W over every W-graph; nodes are ``1..L_size``."""
    return min(g.cost(cost) for g in enumerate_wgraphs(L_size, target))


def _check_capacity(eqs, cap):
    if cap is not None and len(eqs) > cap:
        raise GraphCapacityError(
            f"{len(eqs)} product equilibria exceed the exact-mode cap of {cap}")


def w_values(lg: LandscapeGraph, ladder: TemperatureLadder, cap: int | None = EXACT_CAP) -> dict:
    """``W(O_j)`` for every product equilibrium index ``j`` (0 is ``O_1``)."""
    eqs = product_equilibria(lg, ladder)
    _check_capacity(eqs, cap)
    table = cost_table(lg, ladder, eqs)
    nodes = range(len(eqs))
    return {j: w_of({j}, table, nodes) for j in nodes}


# ---------------------------------------------------------------------------
# h, w and B


def lowest_exit_barrier(lg: LandscapeGraph):
    """``b_1``: value of the lowest saddle adjacent to the global-minimum well."""
    g = lg.global_min_id
    tops = [lg.value(s) for s, _ in lg.neighbours(g)]
    if not tops:
        raise StructureError("global minimum has no adjacent saddle")
    return min(tops)


def compute_h(lg: LandscapeGraph, ladder: TemperatureLadder, check: bool = True):
    h = ladder.last * lowest_exit_barrier(lg)
    if check and len(lg.minima) > 1:
        eqs = product_equilibria(lg, ladder)
        adj = one_step_graph(lg, ladder, eqs)
        exit_cost = min(adj[0].values())
        if exit_cost != h:
            raise TheoryViolation(f"h closed form {h} differs from basin exit cost {exit_cost}")
    return h


def minima_climb_costs(lg: LandscapeGraph) -> dict:
    """Arrow costs ``barrier - V(start)`` between adjacent minima of ``lg``."""
    adj = {m.id: {} for m in lg.minima}
    for m in lg.minima:
        for s, n in lg.neighbours(m.id):
            if n == m.id:
                continue
            c = lg.value(s) - lg.value(m.id)
            if n not in adj[m.id] or c < adj[m.id][n]:
                adj[m.id][n] = c
    return adj


def min_max_C(lg: LandscapeGraph):
    """``min over graphs ending at y_1 of max_k C(k)``.

    A shortest-path tree into ``y_1`` minimizes every path cost at once, so
    the optimum is the largest shortest-path distance to ``y_1``.
    """
    adj = minima_climb_costs(lg)
    rev = {m: {} for m in adj}
    for m, nbrs in adj.items():
        for n, c in nbrs.items():
            rev[n][m] = c
    dist = shortest_paths(rev, lg.global_min_id)
    if len(dist) != len(adj):
        raise StructureError("landscape minima are not connected")
    return max(dist.values())


def min_max_C_by_enumeration(lg: LandscapeGraph):
    """Brute-force oracle for :func:`min_max_C` over graphs on minima."""
    ids = [lg.global_min_id] + [m.id for m in lg.minima if m.id != lg.global_min_id]
    if len(ids) == 1:
        return 0 * lg.value(ids[0])
    adj = minima_climb_costs(lg)
    best = None
    for g in enumerate_wgraphs(len(ids), {1}):
        arrows = {ids[a - 1]: ids[b - 1] for a, b in g.arrows.items()}
        if any(b not in adj[a] for a, b in arrows.items()):
            continue
        worst = 0
        for k in arrows:
            c, node = 0, k
            while node != ids[0]:
                c += adj[node][arrows[node]]
                node = arrows[node]
            worst = max(worst, c)
        best = worst if best is None else min(best, worst)
    return best


def compute_w(lg: LandscapeGraph, ladder: TemperatureLadder, cap: int | None = EXACT_CAP):
    """``W(O_1) - min_{i != 1} W(O_1 u O_i)`` on product equilibria."""
    eqs = product_equilibria(lg, ladder)
    if len(eqs) == 1:
        return 0 * eqs[0].u_value
    _check_capacity(eqs, cap)
    table = cost_table(lg, ladder, eqs)
    nodes = range(len(eqs))
    w1 = w_of({0}, table, nodes)
    return w1 - min(w_of({0, i}, table, nodes) for i in range(1, len(eqs)))


def compute_w_and_bound(lg: LandscapeGraph, ladder: TemperatureLadder, cap: int | None = EXACT_CAP):
    bound = ladder.K * ladder.last * min_max_C(lg)
    w = compute_w(lg, ladder, cap)
    if w > bound:
        raise TheoryViolation(f"w = {w} exceeds its upper bound {bound}")
    return w, bound


def compute_B(lg: LandscapeGraph, K: int):
    b1 = lowest_exit_barrier(lg)
    return max(b1, K * min_max_C(lg))


@dataclass
class GraphRateData:
    h: object
    w: object
    w_upper_bound: object
    b1: object
    B: object
    W_values: dict = field(default_factory=dict)
    exact: bool = True

    def to_dict(self) -> dict:
        f = lambda v: None if v is None else float(v)  # noqa: E731
        return {"h": f(self.h), "w": f(self.w), "w_upper_bound": f(self.w_upper_bound),
                "b1": f(self.b1), "B": f(self.B), "exact": self.exact,
                "W_values": {str(k): float(v) for k, v in self.W_values.items()}}


def graph_rate_data(lg: LandscapeGraph, ladder: TemperatureLadder, cap: int | None = EXACT_CAP) -> GraphRateData:
    """Everything the rate formulas need; ``w`` is None beyond the exact cap."""
    b1 = lowest_exit_barrier(lg)
    h = compute_h(lg, ladder)
    bound = ladder.K * ladder.last * min_max_C(lg)
    B = compute_B(lg, ladder.K)
    try:
        w, _ = compute_w_and_bound(lg, ladder, cap)
        W = w_values(lg, ladder, cap)
        exact = True
    except GraphCapacityError:
        w, W, exact = None, {}, False
    return GraphRateData(h, w, bound, b1, B, W, exact)
