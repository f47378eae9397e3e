"""One-dimensional periodic potentials and their critical-point landscapes.

Two concrete families are supported, both evaluable from compiled kernels so
the samplers can use them directly:

* ``POLY``: a polynomial restricted to ``[lo, lo + period)`` and repeated
  periodically (the Franz quartic, flat and quadratic test wells).
* ``HERMITE``: a periodic piecewise cubic Hermite interpolant through
  prescribed critical points (zero slope at every knot).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

POLY = 0
HERMITE = 1

# Domain used for the Franz quartic; boundary values exceed the unit barrier
# for every theta in [0, 1].
FRANZ_DOMAIN = (-2.5, 2.0)


class LandscapeError(ValueError):
    """Raised when a potential's critical-point structure is unusable."""


@njit(cache=True)
def _wrap(lo, period, x):
    y = (x - lo) % period
    if y < 0.0:
        y += period
    if y >= period:
        y -= period
    return lo + y


@njit(cache=True)
def move(lo, period, reflect, x, dx):
    """Advance ``x`` by ``dx``: wrap around the period, or reflect at the ends."""
    y = x + dx
    if not reflect:
        return _wrap(lo, period, y)
    hi = lo + period
    while y < lo or y > hi:
        if y < lo:
            y = 2.0 * lo - y
        else:
            y = 2.0 * hi - y
    return y


@njit(cache=True)
def value_and_grad(kind, lo, period, a, b, c, x):
    """Energy and derivative at ``x``.

    ``a`` holds ascending polynomial coefficients for ``POLY``; for ``HERMITE``
    ``a``, ``b``, ``c`` are the closed knot, value and slope arrays.
    """
    x = _wrap(lo, period, x)
    if kind == POLY:
        v = 0.0
        g = 0.0
        for k in range(a.shape[0] - 1, -1, -1):
            g = g * x + v
            v = v * x + a[k]
        return v, g
    j = np.searchsorted(a, x, side="right") - 1
    if j < 0:
        j = 0
    if j > a.shape[0] - 2:
        j = a.shape[0] - 2
    h = a[j + 1] - a[j]
    t = (x - a[j]) / h
    t2 = t * t
    t3 = t2 * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    v = h00 * b[j] + h10 * h * c[j] + h01 * b[j + 1] + h11 * h * c[j + 1]
    d00 = (6 * t2 - 6 * t) / h
    d10 = 3 * t2 - 4 * t + 1
    d01 = (-6 * t2 + 6 * t) / h
    d11 = 3 * t2 - 2 * t
    g = d00 * b[j] + d10 * c[j] + d01 * b[j + 1] + d11 * c[j + 1]
    return v, g


@njit(cache=True)
def _eval_many(kind, lo, period, a, b, c, xs, out_v, out_g):
    for i in range(xs.shape[0]):
        v, g = value_and_grad(kind, lo, period, a, b, c, xs[i])
        out_v[i] = v
        out_g[i] = g


_EMPTY = np.zeros(0)


@dataclass(frozen=True, eq=False)
class Potential:
    """A periodic one-dimensional potential on ``[lo, lo + period)``."""

    kind: int
    lo: float
    period: float
    a: np.ndarray
    b: np.ndarray = field(default_factory=lambda: _EMPTY)
    c: np.ndarray = field(default_factory=lambda: _EMPTY)
    description: str = ""
    params: dict = field(default_factory=dict)

    @property
    def reflecting(self) -> bool:
        """True when the periodic extension jumps at the seam.

        Gradient dynamics cannot see such a jump, so samplers reflect at the
        domain ends instead of wrapping; the Gibbs law on the domain is the same.
        """
        v = self.evaluate(np.array([self.lo, self.lo + self.period * (1 - 1e-15)]))
        return bool(abs(v[0] - v[1]) > 1e-9 * max(1.0, abs(v[0])))

    @property
    def domain_period(self) -> float:
        return self.period

    @property
    def domain(self) -> tuple[float, float]:
        return (self.lo, self.lo + self.period)

    @property
    def kernel_args(self):
        return (self.kind, self.lo, self.period, self.a, self.b, self.c)

    def _eval(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        v = np.empty_like(xs)
        g = np.empty_like(xs)
        _eval_many(*self.kernel_args, xs, v, g)
        shape = np.shape(x)
        return v.reshape(shape), g.reshape(shape)

    def evaluate(self, x):
        v, _ = self._eval(x)
        return float(v) if v.ndim == 0 else v

    def gradient(self, x):
        _, g = self._eval(x)
        return float(g) if g.ndim == 0 else g

    def wrap(self, x):
        return self.lo + np.mod(np.asarray(x, dtype=float) - self.lo, self.period)

    def max_value(self, n: int = 20001) -> float:
        xs = np.linspace(self.lo, self.lo + self.period, n, endpoint=False)
        return float(np.max(self.evaluate(xs)))

    def to_dict(self) -> dict:
        return {
            "description": self.description,
            "params": dict(self.params),
        }


def franz_potential(theta: float) -> Potential:
    """The Franz quartic two-well potential.

    ``V(x) = (3x^4 - 4(theta-1)x^3 - 6 theta x^2)/(2 theta + 1) + 1`` with a
    minimum of 0 at -1, a barrier of 1 at 0 and a second minimum at ``theta``.
    """
    if not (0.0 <= theta <= 1.0):
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    d = 2.0 * theta + 1.0
    coeffs = np.array([1.0, 0.0, -6.0 * theta / d, -4.0 * (theta - 1.0) / d, 3.0 / d])
    lo, hi = FRANZ_DOMAIN
    return Potential(
        POLY, lo, hi - lo, coeffs,
        description=f"franz(theta={theta})",
        params={"type": "franz", "theta": float(theta), "domain": [lo, hi]},
    )


def polynomial_potential(coeffs, lo: float, hi: float, description: str = "") -> Potential:
    """Polynomial (ascending coefficients) on ``[lo, hi)`` repeated periodically."""
    coeffs = np.asarray(coeffs, dtype=float)
    if hi <= lo:
        raise ValueError("empty domain")
    return Potential(
        POLY, float(lo), float(hi - lo), coeffs,
        description=description or f"poly{list(coeffs)}",
        params={"type": "poly", "coeffs": coeffs.tolist(), "domain": [lo, hi]},
    )


def flat_potential(lo: float = 0.0, hi: float = 1.0) -> Potential:
    return polynomial_potential([0.0], lo, hi, description="flat")


def hermite_potential(points, period: float, description: str = "") -> Potential:
    """Periodic cubic Hermite potential through ``(kind, location, value)``.

    Kinds must alternate between ``"min"`` and ``"saddle"`` around the circle,
    and every minimum must lie strictly below both neighbouring saddles. The
    interpolant has zero slope at each knot, so the knots are exactly the
    critical points.
    """
    pts = sorted((float(loc), str(kind), val) for kind, loc, val in points)
    if len(pts) < 2 or len(pts) % 2:
        raise LandscapeError("need an even number (>= 2) of alternating critical points")
    locs = [p[0] for p in pts]
    if locs[-1] - locs[0] >= period:
        raise LandscapeError("critical points span more than one period")
    if len(set(locs)) != len(locs):
        raise LandscapeError("duplicate critical point location")
    n = len(pts)
    for i, (loc, kind, val) in enumerate(pts):
        if kind not in ("min", "saddle"):
            raise LandscapeError(f"unknown critical point kind {kind!r}")
        nxt = pts[(i + 1) % n]
        if nxt[1] == kind:
            raise LandscapeError(f"critical points at {loc} and {nxt[0]} are both {kind}s")
        if kind == "min" and not float(val) < float(nxt[2]):
            raise LandscapeError(f"minimum at {loc} is not below the saddle at {nxt[0]}")
        if kind == "saddle" and not float(val) > float(nxt[2]):
            raise LandscapeError(f"saddle at {loc} is not above the minimum at {nxt[0]}")
    knots = np.array(locs + [locs[0] + period])
    vals = np.array([float(p[2]) for p in pts] + [float(pts[0][2])])
    slopes = np.zeros_like(knots)
    spec = [[p[1], p[0], float(p[2])] for p in pts]
    return Potential(
        HERMITE, locs[0], float(period), knots, vals, slopes,
        description=description or f"hermite({n} critical points)",
        params={"type": "hermite", "period": float(period), "points": spec},
    )


_POINT_RE = re.compile(r"^(min|saddle)\s*\(\s*([^,]+?)\s*,\s*([^)]+?)\s*\)$")


def parse_critical_points(text: str):
    """Parse the critical-point text format.

    The first non-comment line declares the period (``period 6.0``); every
    following line is ``min(location, value)`` or ``saddle(location, value)``.
    """
    period = None
    points = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if period is None:
            m = re.match(r"^period\s*[:=]?\s*(\S+)$", line)
            if not m:
                raise LandscapeError(f"line {lineno}: expected 'period <length>' header")
            period = float(m.group(1))
            if period <= 0:
                raise LandscapeError(f"line {lineno}: period must be positive")
            continue
        m = _POINT_RE.match(line)
        if not m:
            raise LandscapeError(f"line {lineno}: cannot parse {raw!r}")
        points.append((m.group(1), float(m.group(2)), float(m.group(3))))
    if period is None:
        raise LandscapeError("missing period header")
    return period, points


def load_critical_points(path) -> Potential:
    path = Path(path)
    period, points = parse_critical_points(path.read_text())
    return hermite_potential(points, period, description=path.name)


def format_critical_points(period: float, points) -> str:
    lines = [f"period {period!r}"]
    for kind, loc, val in points:
        lines.append(f"{kind}({float(loc)!r}, {float(val)!r})")
    return "\n".join(lines) + "\n"


def potential_from_dict(d: dict) -> Potential:
    kind = d.get("type")
    if kind == "franz":
        return franz_potential(d["theta"])
    if kind == "poly":
        lo, hi = d["domain"]
        return polynomial_potential(d["coeffs"], lo, hi)
    if kind == "hermite":
        return hermite_potential([tuple(p) for p in d["points"]], d["period"])
    raise ValueError(f"unknown potential type {kind!r}")


# ---------------------------------------------------------------------------
# Landscape graphs


@dataclass(frozen=True)
class CriticalPoint:
    id: int
    location: float | None
    value: object  # float or Fraction


@dataclass
class LandscapeGraph:
    """Minima, saddles and the saddle-mediated adjacency between wells.

    ``edges`` are ``(min_id, saddle_id, min_id)`` triples. Locations are
    optional so abstract landscapes (any dimension) can be built directly.
    """

    minima: list
    saddles: list
    edges: list
    offset: float = 0.0

    def __post_init__(self):
        self._by_id = {p.id: p for p in list(self.minima) + list(self.saddles)}
        self._min_ids = {p.id for p in self.minima}

    @property
    def global_min_id(self) -> int:
        return min(self.minima, key=lambda p: p.value).id

    def value(self, pid: int):
        return self._by_id[pid].value

    def is_min(self, pid: int) -> bool:
        return pid in self._min_ids

    def point(self, pid: int) -> CriticalPoint:
        return self._by_id[pid]

    def neighbours(self, min_id: int):
        """(saddle_id, other_min_id) pairs reachable from a minimum."""
        out = []
        for m1, s, m2 in self.edges:
            if m1 == min_id:
                out.append((s, m2))
            if m2 == min_id:
                out.append((s, m1))
        return out

    def barrier(self, a: int, b: int):
        """Value of the lowest saddle joining minima ``a`` and ``b`` (None if not adjacent)."""
        vals = [self.value(s) for m1, s, m2 in self.edges if {m1, m2} == {a, b} and a != b]
        return min(vals) if vals else None

    def basin_top(self, min_id: int):
        """Highest value reachable inside the closed basin of a minimum."""
        vals = [self.value(s) for s, _ in self.neighbours(min_id)]
        return max(vals) if vals else self.value(min_id)

    def violations(self) -> list[str]:
        out = []
        zeros = [p for p in list(self.minima) + list(self.saddles) if p.value == 0]
        if len(zeros) != 1 or not self.is_min(zeros[0].id):
            out.append("exactly one critical point (a minimum) must have value 0")
        vmin = sorted(p.value for p in self.minima)
        if len(vmin) > 1 and vmin[0] == vmin[1]:
            out.append("global minimum is not unique")
        for m1, s, m2 in self.edges:
            if not (self.value(s) > self.value(m1) and self.value(s) > self.value(m2)):
                out.append(f"saddle {s} does not exceed minima {m1}, {m2}")
        if self.minima:
            seen = {self.minima[0].id}
            stack = [self.minima[0].id]
            while stack:
                m = stack.pop()
                for _, n in self.neighbours(m):
                    if n not in seen:
                        seen.add(n)
                        stack.append(n)
            if seen != self._min_ids:
                out.append("well adjacency graph is disconnected")
        else:
            out.append("no minima")
        return out

    def require_valid(self) -> None:
        bad = self.violations()
        if bad:
            raise LandscapeError("; ".join(bad))

    @classmethod
    def chain(cls, values, closed: bool = True, locations=None) -> "LandscapeGraph":
        """Landscape from alternating values ``min, saddle, min, saddle, ...``.

        With ``closed`` the last saddle joins the last minimum back to the
        first (a periodic landscape); otherwise the sequence must end on a
        minimum. Values may be Fractions for exact graph arithmetic.
        """
        values = list(values)
        if closed and len(values) % 2:
            raise LandscapeError("closed chain needs min/saddle pairs")
        if not closed and len(values) % 2 == 0:
            raise LandscapeError("open chain must end on a minimum")
        locs = list(locations) if locations is not None else [None] * len(values)
        minima, saddles, edges = [], [], []
        for i, v in enumerate(values):
            (minima if i % 2 == 0 else saddles).append(CriticalPoint(i, locs[i], v))
        n = len(values)
        for i in range(1, n, 2):
            left = i - 1
            right = (i + 1) % n
            edges.append((left, i, right))
        return cls(minima, saddles, edges)

    def to_dict(self) -> dict:
        def pt(p):
            return {"id": p.id, "location": p.location, "value": float(p.value)}

        return {
            "minima": [pt(p) for p in self.minima],
            "saddles": [pt(p) for p in self.saddles],
            "edges": [list(e) for e in self.edges],
            "global_min_id": self.global_min_id,
        }


def _second_difference(p: Potential, x: float, h: float) -> float:
    v = p.evaluate(np.array([x - h, x, x + h]))
    return float(v[0] - 2 * v[1] + v[2])


def extract_landscape(p: Potential, grid_n: int = 4096, xtol: float = 1e-10) -> LandscapeGraph:
    """Locate and classify all critical points of ``p`` over one period."""
    if grid_n < 1000:
        raise ValueError("grid_n must be at least 1000")
    lo, period = p.lo, p.period
    h = period / grid_n
    xs = lo + h * np.arange(grid_n)
    g = p.gradient(xs)
    sg = np.sign(g)
    roots = []
    for i in range(grid_n):
        j = (i + 1) % grid_n
        if sg[i] == 0:
            if sg[i - 1] != 0 and sg[j] != 0 and sg[i - 1] != sg[j]:
                roots.append((xs[i], xs[i], xs[i], sg[i - 1] > 0))
            continue
        if sg[j] == 0 or sg[i] == sg[j]:
            continue
        a = xs[i]
        b = a + h
        ga = g[i]
        rising_first = ga > 0
        while b - a > xtol:
            mid = 0.5 * (a + b)
            gm = p.gradient(mid)
            if gm == 0:
                a = b = mid
                break
            if np.sign(gm) == np.sign(ga):
                a, ga = mid, gm
            else:
                b = mid
        roots.append((0.5 * (a + b), a, b, rising_first))

    pts = []
    for x, a, b, is_max in roots:
        # a + to - gradient change is a maximum even across a jump at the seam
        d2 = _second_difference(p, x, h)
        if abs(d2) < 1e-8 * h:
            raise LandscapeError(f"degenerate critical point at x={float(p.wrap(x)):.10g}")
        va, vb = p.evaluate(np.array([a, b]))
        if not is_max:
            pts.append(("min", float(p.wrap(x)), float(min(va, vb, p.evaluate(x)))))
        else:
            pts.append(("saddle", float(p.wrap(x)), float(max(va, vb, p.evaluate(x)))))
    pts.sort(key=lambda t: t[1])
    for i in range(len(pts)):
        if pts[i][0] == pts[(i + 1) % len(pts)][0] and len(pts) > 1:
            raise LandscapeError(
                f"consecutive {pts[i][0]}s at {pts[i][1]:.6g} and {pts[(i + 1) % len(pts)][1]:.6g}"
            )
    if not pts:
        raise LandscapeError("no critical points found")
    offset = min(v for k, _, v in pts if k == "min")
    minima, saddles = [], []
    for i, (kind, x, v) in enumerate(pts):
        cp = CriticalPoint(i, x, v - offset)
        (minima if kind == "min" else saddles).append(cp)
    n = len(pts)
    edges = []
    for s in saddles:
        left = pts[(s.id - 1) % n]
        right = pts[(s.id + 1) % n]
        assert left[0] == "min" and right[0] == "min"
        edges.append(((s.id - 1) % n, s.id, (s.id + 1) % n))
    return LandscapeGraph(minima, saddles, edges, offset=offset)


# ---------------------------------------------------------------------------
# Two-well classification


@dataclass(frozen=True)
class TwoWellSpec:
    h_L: float
    h_R: float
    x_L: float
    x_R: float
    barrier: float
    outer: float  # location of the other (boundary) saddle
    left_id: int = 0
    right_id: int = 0


class ConditionViolation(LandscapeError):
    """The two-well condition fails; ``bullet`` names the violated clause."""

    def __init__(self, bullet: str, detail: str = ""):
        self.bullet = bullet
        super().__init__(f"{bullet}" + (f": {detail}" if detail else ""))


def classify_two_well(lg: LandscapeGraph) -> TwoWellSpec:
    if len(lg.minima) != 2:
        raise ConditionViolation("two local minima required", f"found {len(lg.minima)}")
    a, b = sorted(lg.minima, key=lambda p: p.value)
    if not a.value < b.value:
        raise ConditionViolation("V(x_L) < V(x_R) required", "minima have equal values")
    if not b.value > 0:
        raise ConditionViolation("V(x_R) = h_L - h_R > 0 required")
    sads = sorted(lg.saddles, key=lambda p: p.value)
    if len(sads) != 2:
        raise ConditionViolation("only one local maximum between the minima", f"found {len(sads)} saddles")
    inner, outer = sads
    if not outer.value > inner.value:
        raise ConditionViolation(
            "boundary values must exceed h_L", "both separating maxima have the same height"
        )
    h_L = inner.value
    h_R = h_L - b.value
    return TwoWellSpec(
        h_L=h_L, h_R=h_R, x_L=a.location, x_R=b.location,
        barrier=inner.location, outer=outer.location,
        left_id=a.id, right_id=b.id,
    )


def condition_bullets(p: Potential, lg: LandscapeGraph | None = None) -> dict[str, bool]:
    """Check each clause of the two-well condition for a potential on its domain."""
    lg = lg or extract_landscape(p)
    res = {}
    lo, hi = p.domain
    xs = np.linspace(lo, hi, 4001)[1:-1]
    res["bounded_periodic"] = bool(np.all(np.isfinite(p.evaluate(xs))))
    try:
        spec = classify_two_well(lg)
    except ConditionViolation:
        return {**res, "two_minima": False, "one_max": False, "values": False, "boundary": False}
    res["two_minima"] = True
    interior = [s for s in lg.saddles if lo < s.location < hi and not math.isclose(s.location, lo)]
    between = [s for s in interior if min(spec.x_L, spec.x_R) < s.location < max(spec.x_L, spec.x_R)]
    res["one_max"] = len(between) == 1 and math.isclose(between[0].location, spec.barrier)
    res["values"] = abs(lg.value(spec.left_id)) < 1e-12 and spec.h_L > spec.h_R > 0
    vb = min(p.evaluate(lo) - lg.offset, p.evaluate(hi - 1e-12) - lg.offset)
    res["boundary"] = bool(vb > spec.h_L)
    return res
