"""Command-line front end: ``infswap analyze|optimize|simulate|verify``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import graphcalc, harness, rates
from .ensemble import MAX_K, TemperatureLadder, compute_weights, EnsembleState
from .potential import (LandscapeError, LandscapeGraph, classify_two_well, extract_landscape,
                        franz_potential, load_critical_points)

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
LADDER_TYPES = ("explicit", "geometric", "optimal")
CLI_METHODS = ("mcmc", "pt", "ins", "synthetic", "paired")


class ConfigError(ValueError):
    def __init__(self, field_name: str, msg: str):
        self.field = field_name
        super().__init__(f"{field_name}: {msg}")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    potential: dict = field(default_factory=lambda: {"type": "franz", "theta": 0.85})
    ladder: dict = field(default_factory=lambda: {"type": "optimal", "K": 2})
    target: list = field(default_factory=lambda: [0.6, 1.1])
    method: str = "ins"
    eps_grid: list = field(default_factory=lambda: [0.40, 0.30, 0.22])
    replications: int = 100
    seed: int | None = None
    out: str = "out"
    horizon_exponent: float | None = 1.2
    T: float | None = None
    dt: float = 1e-3
    swap_rate: float = 0.0
    tolerance: float = 0.15
    delta: float = rates.DEFAULT_DELTA
    predicted_rate: float | None = None
    synthetic_rate: float = 2.0

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown field")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"not valid JSON ({exc})") from exc
        return cls.from_dict(d)

    # -- validation and construction

    def build_potential(self):
        p = self.potential
        kind = p.get("type")
        if kind == "franz":
            try:
                return franz_potential(float(p["theta"]))
            except (KeyError, ValueError) as exc:
                raise ConfigError("potential.theta", str(exc)) from exc
        if kind == "file":
            try:
                return load_critical_points(p["path"])
            except (KeyError, OSError, LandscapeError) as exc:
                raise ConfigError("potential.path", str(exc)) from exc
        raise ConfigError("potential.type", f"expected 'franz' or 'file', got {kind!r}")

    @property
    def K(self) -> int:
        lad = self.ladder
        if lad.get("type") == "explicit":
            return len(lad.get("alphas", []))
        return int(lad.get("K", 0))

    def explicit_ladder(self) -> TemperatureLadder | None:
        lad = self.ladder
        t = lad.get("type")
        if t == "explicit":
            try:
                return TemperatureLadder(tuple(float(a) for a in lad["alphas"]))
            except (KeyError, ValueError) as exc:
                raise ConfigError("ladder.alphas", str(exc)) from exc
        if t == "geometric":
            return TemperatureLadder.geometric(self.K, 0.5)
        return None

    def validate(self):
        if self.ladder.get("type") not in LADDER_TYPES:
            raise ConfigError("ladder.type", f"must be one of {LADDER_TYPES}")
        if not 1 <= self.K <= MAX_K:
            raise ConfigError("ladder.K", f"K must lie in 1..{MAX_K}, got {self.K}")
        self.explicit_ladder()
        p = self.build_potential()
        if len(self.target) != 2:
            raise ConfigError("target", "expected [lo, hi]")
        lo, hi = p.domain
        a, b = self.target
        if not (lo <= a < b <= hi):
            raise ConfigError("target", f"[{a}, {b}] must lie within the domain [{lo}, {hi}]")
        if self.method not in CLI_METHODS:
            raise ConfigError("method", f"must be one of {CLI_METHODS}")
        g = list(self.eps_grid)
        if not g or any(not x > 0 for x in g) or any(not x > y for x, y in zip(g, g[1:])):
            raise ConfigError("eps_grid", "must be positive and strictly decreasing")
        if self.replications < harness.MIN_REPLICATIONS:
            raise ConfigError("replications", f"need at least {harness.MIN_REPLICATIONS}")
        if (self.T is None) == (self.horizon_exponent is None):
            raise ConfigError("horizon_exponent", "give exactly one of horizon_exponent and T")
        if not 0 < self.delta < 1:
            raise ConfigError("delta", "must lie in (0, 1)")


# ---------------------------------------------------------------------------
# helpers


def _landscape(cfg: RunConfig):
    p = cfg.build_potential()
    lg = extract_landscape(p)
    try:
        spec = classify_two_well(lg)
    except LandscapeError:
        spec = None
    target = rates.make_target(p, lg, cfg.target[0], cfg.target[1], spec)
    return p, lg, spec, target


def _resolve_ladder(cfg: RunConfig, spec, target):
    """Ladder for the run and, when it came from the theorems, the report behind it."""
    lad = cfg.explicit_ladder()
    if lad is not None:
        return lad, None
    if spec is not None and target.side != "general":
        rep = rates.optimal_two_well(spec, target, cfg.K, cfg.delta)
        return rep.optimal_ladder, rep
    rep = rates.multiwell_bound(_landscape(cfg)[1], cfg.K, target)
    return rep.optimal_ladder, rep


def _write_json(path: Path, obj):
    harness.atomic_write(path, json.dumps(obj, indent=2) + "\n")


def analyze(cfg: RunConfig) -> dict:
    p, lg, spec, target = _landscape(cfg)
    lad, opt = _resolve_ladder(cfg, spec, target)
    out = {"config": cfg.to_dict(), "target": target.to_dict(),
           "landscape": lg.to_dict(), "ladder": lad.to_list()}
    if spec is not None and target.side != "general":
        if opt is None:
            opt = rates.optimal_two_well(spec, target, cfg.K, cfg.delta)
        out["two_well"] = {"optimal": opt.to_dict(),
                           "bound_at_ladder": float(rates.two_well_bound(spec, target, lad))}
    else:
        out["two_well"] = None
    mw = rates.multiwell_bound(lg, cfg.K, target)
    out["multiwell"] = mw.to_dict()
    gd = graphcalc.graph_rate_data(lg, lad)
    out["graph"] = gd.to_dict()
    out["min_horizon_exponent"] = float(gd.B * lad.last)
    return out


def _predicted(cfg: RunConfig, spec, target, lad) -> float | None:
    if cfg.predicted_rate is not None:
        return cfg.predicted_rate
    if cfg.method == "synthetic":
        return cfg.synthetic_rate
    if spec is None or target.side == "general":
        return None
    if cfg.method == "mcmc":
        return float(rates.two_well_bound(spec, target, TemperatureLadder((1.0,))))
    return float(rates.two_well_bound(spec, target, lad))


def _plan(cfg: RunConfig, method: str, lad, predicted, p, x_start) -> harness.ExperimentPlan:
    return harness.ExperimentPlan(
        potential=p, eps_grid=list(cfg.eps_grid), replications=cfg.replications, method=method,
        target=tuple(cfg.target), seed=int(cfg.seed), ladder=lad,
        horizon_exponent=cfg.horizon_exponent, T=cfg.T, dt=cfg.dt, swap_rate=cfg.swap_rate,
        initial_position=x_start, predicted_rate=predicted, tolerance=cfg.tolerance,
        synthetic_rate=cfg.synthetic_rate,
    )


def simulate(cfg: RunConfig) -> tuple[int, dict]:
    if cfg.seed is None:
        raise ConfigError("seed", "simulate requires an explicit --seed")
    p, lg, spec, target = _landscape(cfg)
    lad, _ = _resolve_ladder(cfg, spec, target)
    x0 = lg.point(lg.global_min_id).location
    out = Path(cfg.out)
    summary = {}
    if cfg.method == "paired":
        recs = {}
        for m in ("mcmc", "ins"):
            sub = RunConfig(**{**cfg.to_dict(), "method": m})
            plan = _plan(cfg, m, lad if m == "ins" else TemperatureLadder((1.0,)),
                         _predicted(sub, spec, target, lad), p, x0)
            recs[m] = harness.run_experiment(plan)
            harness.persist(recs[m], out, stem=f"experiment_{m}")
        fi, fm = recs["ins"].fit, recs["mcmc"].fit
        ok = fi is not None and fm is not None and fi.rate > fm.rate and bool(recs["ins"].verdict)
        summary = {"fitted_rates": {m: (None if r.fit is None else r.fit.rate) for m, r in recs.items()},
                   "predicted": recs["ins"].plan["predicted_rate"], "pass": ok}
    else:
        plan = _plan(cfg, cfg.method, lad, _predicted(cfg, spec, target, lad), p, x0)
        rec = harness.run_experiment(plan)
        harness.persist(rec, out)
        ok = rec.verdict is not False
        summary = {"fitted_rate": None if rec.fit is None else rec.fit.rate,
                   "predicted": plan.predicted_rate, "verdict": rec.verdict, "pass": ok}
    _write_json(out / "summary.json", summary)
    return (EXIT_OK if summary["pass"] else EXIT_FAIL), summary


# ---------------------------------------------------------------------------
# verify


def _check_weights(rng, fault):
    from .potential import franz_potential as fp
    p = fp(0.85)
    for _ in range(200):
        K = int(rng.integers(1, 5))
        a = np.sort(rng.uniform(0.05, 1.0, K))[::-1]
        a[0] = 1.0
        lad = TemperatureLadder(tuple(a))
        st = EnsembleState.from_positions(rng.uniform(-2.5, 2.0, K), p)
        t = compute_weights(st, lad, float(rng.uniform(0.05, 2.0)))
        if not (np.allclose(t.rho.sum(0), 1, atol=1e-12) and np.allclose(t.rho.sum(1), 1, atol=1e-12)):
            return False
    return True


def _check_w_differences(rng, fault):
    F = Fraction
    for vals in ([0, 4, F(3, 2), 20], [0, 4, 2, 6, 1, 8], [0, 3, 1, 5, F(1, 2), 7]):
        lg = LandscapeGraph.chain(vals)
        lad = TemperatureLadder((1, F(1, 2)))
        eqs = graphcalc.product_equilibria(lg, lad)
        table = graphcalc.cost_table(lg, lad, eqs)
        if fault == "cost-table":
            k = next(iter(table))
            table[k] = table[k] + 1
        W = {j: graphcalc.w_of({j}, table, range(len(eqs))) for j in range(len(eqs))}
        for i in W:
            for j in W:
                if W[i] - W[j] != eqs[i].u_value - eqs[j].u_value:
                    return False
    return True


def _check_h(rng, fault):
    F = Fraction
    lg = LandscapeGraph.chain([0, 4, F(3, 2), 20])
    for a2 in (F(1, 2), F(1, 3), F(3, 4)):
        if graphcalc.compute_h(lg, TemperatureLadder((1, a2))) != 4 * a2:
            return False
    return True


def _check_sup_r(rng, fault):
    for K in range(1, 8):
        rate, lad = rates.sup_r(Fraction(1), K)
        if rate != 2 - Fraction(1, 2) ** (K - 1) or rates.r_of_alpha(Fraction(1), lad) != rate:
            return False
    return True


def _check_wgraph_counts(rng, fault):
    return (len(graphcalc.enumerate_wgraphs(2, {1})) == 1
            and len(graphcalc.enumerate_wgraphs(3, {1})) == 3
            and len(graphcalc.enumerate_wgraphs(3, {1, 2})) == 2
            and len(graphcalc.enumerate_wgraphs(4, {1})) == 16)


CHECKS = {
    "weights": _check_weights,
    "w_differences": _check_w_differences,
    "h": _check_h,
    "sup_r": _check_sup_r,
    "wgraph_counts": _check_wgraph_counts,
}


def verify(checks, fault=None, stream=sys.stdout) -> int:
    if not checks:
        raise UsageError("verify: empty check selection")
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise UsageError(f"verify: unknown checks {unknown}; choose from {sorted(CHECKS)}")
    rng = np.random.default_rng(0)
    ok = True
    for name in checks:
        t0 = time.perf_counter()
        res = CHECKS[name](rng, fault)
        ok &= res
        print(f"{'PASS' if res else 'FAIL'} {name} ({time.perf_counter() - t0:.2f}s)", file=stream)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="infswap", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("analyze", "optimize", "simulate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path)
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--eps-grid")
        sp.add_argument("--K", type=int)
        sp.add_argument("--theta", type=float)
        sp.add_argument("--potential-file")
        sp.add_argument("--ladder", help="explicit multipliers a1,a2,...")
        sp.add_argument("--geometric", action="store_true", help="use the (1, 1/2, ...) ladder")
        sp.add_argument("--target", help="lo,hi")
        sp.add_argument("--method", choices=CLI_METHODS)
        sp.add_argument("--replications", type=int)
        sp.add_argument("--horizon-exponent", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--delta", type=float)
    vp = sub.add_parser("verify")
    vp.add_argument("--checks", default=",".join(CHECKS))
    vp.add_argument("--inject-fault", choices=["cost-table"], help=argparse.SUPPRESS)
    return ap


def config_from_args(args) -> RunConfig:
    d = RunConfig().to_dict()
    if args.config is not None:
        try:
            d.update(json.loads(args.config.read_text()))
        except OSError as exc:
            raise ConfigError("config", str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"not valid JSON ({exc})") from exc
    if args.theta is not None:
        d["potential"] = {"type": "franz", "theta": args.theta}
    if args.potential_file is not None:
        d["potential"] = {"type": "file", "path": args.potential_file}
    if args.ladder is not None:
        d["ladder"] = {"type": "explicit", "alphas": _floats(args.ladder)}
    elif args.K is not None or args.geometric:
        kind = "geometric" if args.geometric else d["ladder"].get("type", "optimal")
        if kind == "explicit":
            kind = "optimal"
        d["ladder"] = {"type": kind, "K": args.K if args.K is not None else RunConfig(**d).K}
    if args.target is not None:
        d["target"] = _floats(args.target)
    if args.eps_grid is not None:
        d["eps_grid"] = _floats(args.eps_grid)
    for key in ("out", "seed", "method", "replications", "dt", "delta"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    if args.horizon_exponent is not None:
        d["horizon_exponent"], d["T"] = args.horizon_exponent, None
    return RunConfig.from_dict(d)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "verify":
            return verify([c for c in args.checks.split(",") if c.strip()], args.inject_fault)
        cfg = config_from_args(args)
        out = Path(cfg.out)
        if args.command == "analyze":
            res = analyze(cfg)
            _write_json(out / "analysis.json", res)
            tw = res["two_well"]
            if tw:
                o = tw["optimal"]
                print(f"two-well rate {o['predicted_rate']:.6g} ({o['formula_provenance']}), "
                      f"ladder {o['optimal_ladder']}")
            mw = res["multiwell"]
            print(f"multi-well bound {mw['predicted_rate']:.6g}, gap {mw['gap']:.6g}")
            g = res["graph"]
            print(f"h={g['h']:.6g} w={g['w']} B={g['B']:.6g} "
                  f"min horizon exponent={res['min_horizon_exponent']:.6g}")
            return EXIT_OK
        if args.command == "optimize":
            _, _, spec, target = _landscape(cfg)
            lad, rep = _resolve_ladder(RunConfig(**{**cfg.to_dict(), "ladder": {"type": "optimal", "K": cfg.K}}),
                                       spec, target)
            obj = {"ladder": lad.to_list(), "report": rep.to_dict()}
            _write_json(out / "ladder.json", obj)
            print(json.dumps(obj["ladder"]))
            for f in rep.flags:
                print(f"flag: {f}")
            return EXIT_OK
        code, summary = simulate(cfg)
        print(json.dumps(summary))
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ConfigError, ValueError, LandscapeError, harness.ReplicateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
