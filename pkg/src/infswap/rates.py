"""Decay-rate formulas for the weighted estimator and the ladders that optimize them."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar

from . import graphcalc
from .ensemble import TemperatureLadder, symmetrized_potential
from .potential import LandscapeGraph, Potential, TwoWellSpec

PROVENANCE = ("thm21_left", "thm21_right", "thm22", "thm23", "multiwell_bound",
              "brute_force", "r_terms")
SIDES = ("left_of_barrier", "right_of_barrier", "general")
DEFAULT_DELTA = 0.1


class HypothesisError(ValueError):
    """A rate formula was asked for outside the range where it is proven."""


@dataclass
class RateReport:
    predicted_rate: float
    benchmark: float
    optimal_ladder: TemperatureLadder
    formula_provenance: str
    components: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    horizon_exponent: float | None = None

    def __post_init__(self):
        if self.formula_provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.formula_provenance!r}")
        if self.predicted_rate > self.benchmark + 1e-12:
            raise graphcalc.TheoryViolation(
                f"rate {self.predicted_rate} exceeds benchmark {self.benchmark}")

    @property
    def gap(self) -> float:
        return self.benchmark - self.predicted_rate

    def to_dict(self) -> dict:
        return {
            "predicted_rate": float(self.predicted_rate),
            "benchmark": float(self.benchmark),
            "gap": float(self.gap),
            "optimal_ladder": self.optimal_ladder.to_list(),
            "formula_provenance": self.formula_provenance,
            "components": {k: float(v) for k, v in self.components.items()},
            "flags": list(self.flags),
            "horizon_exponent": None if self.horizon_exponent is None else float(self.horizon_exponent),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RateReport":
        return cls(d["predicted_rate"], d["benchmark"], TemperatureLadder(tuple(d["optimal_ladder"])),
                   d["formula_provenance"], dict(d.get("components", {})), list(d.get("flags", [])),
                   d.get("horizon_exponent"))


@dataclass(frozen=True)
class TargetSet:
    """Rare set ``A``; ``basin_values`` maps a minimum id to ``inf V`` over ``A`` within its basin."""

    interval: tuple | None
    v_of_A: object
    side: str = "general"
    basin_values: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")
        if not self.v_of_A > 0:
            raise ValueError("V(A) must be positive: the target may not contain the global minimum")

    def to_dict(self) -> dict:
        return {"interval": None if self.interval is None else list(self.interval),
                "v_of_A": float(self.v_of_A), "side": self.side,
                "basin_values": {str(k): float(v) for k, v in self.basin_values.items()}}


def _basins(lg: LandscapeGraph, period: float) -> dict:
    """Circular basin interval ``(left saddle, right saddle)`` of each minimum."""
    pts = sorted(lg.minima + lg.saddles, key=lambda p: p.location)
    out = {}
    n = len(pts)
    for i, p in enumerate(pts):
        if lg.is_min(p.id):
            left = pts[(i - 1) % n].location
            right = pts[(i + 1) % n].location
            if left >= p.location:
                left -= period
            if right <= p.location:
                right += period
            out[p.id] = (left, right)
    return out


def _inf_on(potential: Potential, a: float, b: float, n: int = 4001) -> float:
    xs = np.linspace(a, b, n)
    v = potential.evaluate(xs)
    k = int(np.argmin(v))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, n - 1)]
    best = float(v[k])
    if hi > lo:
        res = minimize_scalar(lambda x: float(potential.evaluate(x)), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def make_target(potential: Potential, lg: LandscapeGraph, lo: float, hi: float,
                spec: TwoWellSpec | None = None) -> TargetSet:
    """Build a target interval, measuring ``V(A)`` relative to the global minimum."""
    dlo, dhi = potential.domain
    if not (dlo <= lo < hi <= dhi):
        raise ValueError(f"target [{lo}, {hi}] must lie within the domain [{dlo}, {dhi}]")
    period = potential.period
    per_basin = {}
    for mid, (bl, br) in _basins(lg, period).items():
        for shift in (-period, 0.0, period):
            a, b = max(lo, bl + shift), min(hi, br + shift)
            if a <= b:
                v = _inf_on(potential, a, b) - lg.offset
                per_basin[mid] = min(v, per_basin.get(mid, np.inf))
    v_of_A = min(per_basin.values())
    side = "general"
    if spec is not None:
        basins = _basins(lg, period)
        for name, mid in (("left_of_barrier", spec.left_id), ("right_of_barrier", spec.right_id)):
            bl, br = basins[mid]
            tol = 1e-8 * period
            if any(bl + s - tol <= lo and hi <= br + s + tol for s in (-period, 0.0, period)):
                side = name
    return TargetSet((lo, hi), max(v_of_A, 0.0), side, per_basin)


# ---------------------------------------------------------------------------
# r(alpha)


def _ladder(ladder) -> TemperatureLadder:
    return ladder if isinstance(ladder, TemperatureLadder) else TemperatureLadder(tuple(ladder))


def r_of_alpha(v_of_A, ladder, potential_max=None):
    """Rate of the weighted estimator for a fixed ladder.

    The linear program over ``0 <= V_2 <= ... <= V_K <= V_1 = V(A)`` attains its
    minimum at a vertex where a tail of the ``V_l`` equals ``V(A)`` and the
    rest vanish, which gives a minimum over ``K`` partial sums.
    ``potential_max`` is accepted for interface symmetry with the grid oracle.
    """
    a = _ladder(ladder).alphas
    K = len(a)
    tails = []
    for j in range(1, K + 1):
        tails.append(sum((2 * a[l] - a[l - 1] for l in range(j, K)), start=0 * a[0]))
    return v_of_A * ((2 * a[0] - a[-1]) + min(tails))


def r_objective(values, ladder: TemperatureLadder):
    """``2 sum_l a_l V_l - U``: the quantity r(alpha) minimizes."""
    return 2 * sum(x * v for x, v in zip(ladder.alphas, values)) - symmetrized_potential(values, ladder)


def r_brute_force(v_of_A, ladder, potential_max, n: int = 201):
    """Grid minimum of :func:`r_objective` with ``V_1 = V(A)`` and ``V_l`` in ``[0, potential_max]``."""
    lad = _ladder(ladder)
    K = lad.K
    if K == 1:
        return float(v_of_A)
    grid = np.linspace(0.0, float(potential_max), n)
    grid = np.union1d(grid, [float(v_of_A)])
    alphas = lad.as_array()
    mesh = np.stack(np.meshgrid(*([grid] * (K - 1)), indexing="ij"), axis=-1).reshape(-1, K - 1)
    vals = np.concatenate([np.full((len(mesh), 1), float(v_of_A)), mesh], axis=1)
    lin = 2 * vals @ alphas
    u = np.sort(vals, axis=1) @ np.sort(alphas)[::-1]
    return float(np.min(lin - u))


def sup_r(v_of_A, K: int):
    """Best rate over all ladders and the geometric ladder attaining it."""
    if K < 1:
        raise ValueError("K must be at least 1")
    half = Fraction(1, 2) if isinstance(v_of_A, (int, Fraction)) else 0.5
    return (2 - half ** (K - 1)) * v_of_A, TemperatureLadder.geometric(K, half)


# ---------------------------------------------------------------------------
# Two-well theorems


def two_well_rates(spec: TwoWellSpec, target: TargetSet, ladder):
    """The three rate terms ``(r1, r2, r3)`` of the two-well lower bound."""
    if target.side == "general":
        raise HypothesisError("target must lie entirely on one side of the barrier")
    a = _ladder(ladder).alphas
    K = len(a)
    V, hL, hR = target.v_of_A, spec.h_L, spec.h_R
    r1 = r_of_alpha(V, a)
    coef = []
    for i in range(2, K + 2):
        s = sum((a[K - l] for l in range(1, i - 1)), start=0 * a[0])  # alpha_{K-l+1}
        coef.append(s - a[K - i + 1])  # alpha_{K-i+2}
    r2 = 2 * V - a[-1] * hR + (hL - hR) * min(coef)
    r3 = 2 * V - a[-1] * hL
    return r1, r2, r3


def two_well_bound(spec: TwoWellSpec, target: TargetSet, ladder):
    r1, r2, r3 = two_well_rates(spec, target, ladder)
    return min(r1, r3) if target.side == "left_of_barrier" else min(r1, r2)


def _geometric_head(K: int, last):
    return TemperatureLadder(tuple([0.5 ** l for l in range(K - 1)] + [last]))


def optimal_two_well(spec: TwoWellSpec, target: TargetSet, K: int, delta: float = DEFAULT_DELTA,
                     rel_tol: float = 1e-9) -> RateReport:
    """Closed-form optimal ladder and rate for a target on one side of the barrier."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    V, hL, hR = float(target.v_of_A), float(spec.h_L), float(spec.h_R)
    left = target.side == "left_of_barrier"
    if target.side == "general":
        raise HypothesisError("target straddles the barrier; the two-well theorems need one side")
    flags = []
    if K == 1:
        lad = TemperatureLadder((1.0,))
        prov = "thm21_left" if left else "thm21_right"
        rate = None
    elif left:
        prov = "thm22"
        if V >= hL:
            lad = TemperatureLadder.geometric(K, 0.5)
            rate = 2 * V - 0.5 ** (K - 1) * V
        else:
            lad = _geometric_head(K, V / (V + hL) * 0.5 ** (K - 2))
            rate = 2 * V - 0.5 ** (K - 2) * (hL / (V + hL)) * V
    else:
        prov = "thm23"
        if V < (hL - hR) * (1 - rel_tol):
            raise HypothesisError(
                f"V(A)={V} is below V(x_R)={hL - hR}; a right-side target cannot be that low")
        if hL >= 2 * hR or V >= hL:
            lad = TemperatureLadder.geometric(K, 0.5)
            rate = 2 * V - 0.5 ** (K - 1) * max(V, hL)
        else:
            num = V - (hL - hR)
            last = num / (V - (hL - 2 * hR)) * 0.5 ** (K - 2)
            rate = 2 * V - 0.5 ** (K - 2) * (hR / (V - (hL - 2 * hR))) * V
            if last <= rel_tol * 0.5 ** (K - 2):
                last = delta * 0.5 ** (K - 2)
                flags.append(f"alpha_K=0 boundary: substituted alpha_K = {delta} * (1/2)^(K-2)")
                rate = None
            lad = _geometric_head(K, last)
    r1, r2, r3 = two_well_rates(spec, target, lad)
    achieved = min(r1, r3) if left else min(r1, r2)
    if rate is None:
        rate = achieved
    return RateReport(
        predicted_rate=float(rate), benchmark=2 * V, optimal_ladder=lad, formula_provenance=prov,
        components={"r1": r1, "r2": r2, "r3": r3, "V(A)": V, "h_L": hL, "h_R": hR,
                    "bound_at_ladder": achieved},
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Multi-well terms


def _boxes(lg: LandscapeGraph, target: TargetSet):
    """Ranges of ``V`` values a coordinate can take inside each basin."""
    lows = {m.id: m.value for m in lg.minima}
    tops = {m.id: lg.basin_top(m.id) for m in lg.minima}
    first = {m: (target.basin_values[m], tops[m]) for m in target.basin_values if m in tops}
    if not first:
        raise ValueError("target meets no basin of the landscape")
    rest = {m: (lows[m], tops[m]) for m in lows}
    return first, rest


def _candidates(first, rest):
    c = set()
    for lo, hi in list(first.values()) + list(rest.values()):
        c.add(lo)
        c.add(hi)
    return sorted(c)


def _inf_2f_plus_u(box, ladder, cands):
    """Minimum of ``2 sum a_l V_l - U`` over a product box of V-ranges.

    The objective is convex and piecewise linear with breaks on ``V_i = V_j``,
    so the minimum sits at a point whose coordinates are all box endpoints.
    """
    choices = [[c for c in cands if lo <= c <= hi] for lo, hi in box]
    return min(r_objective(v, ladder) for v in itertools.product(*choices))


def assemble_R_terms(lg: LandscapeGraph, ladder, target: TargetSet,
                     graph_data: graphcalc.GraphRateData | None = None) -> RateReport:
    """Lower bound from the R-terms of the general theorem, by critical-value reduction."""
    lad = _ladder(ladder)
    K = lad.K
    gd = graph_data or graphcalc.graph_rate_data(lg, lad)
    if not gd.exact:
        raise graphcalc.GraphCapacityError("R-terms need exact W values")
    eqs = graphcalc.product_equilibria(lg, lad)
    index = {e.well_ids: i for i, e in enumerate(eqs)}
    n = len(eqs)
    table = graphcalc.cost_table(lg, lad, eqs) if n > 1 else {}
    dist = lambda i, j: 0 if i == j else table[(i, j)]  # noqa: E731
    first, rest = _boxes(lg, target)
    cands = _candidates(first, rest)
    ids = [m.id for m in lg.minima]

    # per product basin: best value of 2f+U and of f+U over x inside it
    basin_terms = []
    for m1 in first:
        for tail in itertools.product(ids, repeat=K - 1):
            wells = (m1,) + tail
            box = [first[m1]] + [rest[m] for m in tail]
            j = index[tuple(wells)]
            two_f = _inf_2f_plus_u(box, lad, cands)
            low = [b[0] for b in box]
            one_f = sum(x * v for x, v in zip(lad.alphas, low))
            basin_terms.append((j, two_f, one_f))

    W = gd.W_values
    W1 = W[0]
    W1i = {}
    if n > 1:
        nodes = range(n)
        W1i = {i: graphcalc.w_of({0, i}, table, nodes) for i in range(1, n)}
    h, w = gd.h, gd.w
    R1, R2, R3 = {}, {}, {}
    for i in range(n):
        inf2 = min(t2 + dist(i, j) - eqs[j].u_value for j, t2, _ in basin_terms)
        inf1 = min(t1 + dist(i, j) - eqs[j].u_value for j, _, t1 in basin_terms)
        R1[i] = inf2 + W[i] - W1
        if i == 0:
            R2[i] = 2 * inf1 - h
        else:
            R2[i] = 2 * inf1 + W[i] - 2 * W1 + W1i[i]
        R3[i] = 2 * inf1 + 2 * W[i] - 2 * W1 - w
    use3 = not h >= w
    rate = min(min(R1[i], R2[i], R3[i]) if use3 else min(R1[i], R2[i]) for i in range(n))
    comps = {"min_R1": min(R1.values()), "min_R2": min(R2.values()), "min_R3": min(R3.values()),
             "h": h, "w": w, "r_alpha": r_of_alpha(target.v_of_A, lad)}
    for i in range(n):
        comps[f"R1_{i + 1}"] = R1[i]
        comps[f"R2_{i + 1}"] = R2[i]
        comps[f"R3_{i + 1}"] = R3[i]
    flags = ["R3 terms included (h < w)"] if use3 else []
    return RateReport(float(rate), 2 * float(target.v_of_A), lad, "r_terms", comps, flags,
                      horizon_exponent=float(max(h, w)))


def multiwell_bound(lg: LandscapeGraph, K: int, target: TargetSet) -> RateReport:
    """Geometric-ladder lower bound valid for any number of wells."""
    V = target.v_of_A
    B = graphcalc.compute_B(lg, K)
    top, lad = sup_r(V, K)
    half = lad.last
    c_min = B * half
    rate = top - B * half
    return RateReport(float(rate), 2 * float(V), lad, "multiwell_bound",
                      {"B": B, "b1": graphcalc.lowest_exit_barrier(lg), "sup_r": top,
                       "min_max_C": graphcalc.min_max_C(lg)},
                      horizon_exponent=float(c_min))
