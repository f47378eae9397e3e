"""Variance-decay experiments: replication, quadrature truth, rate fits and persistence."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from .ensemble import TemperatureLadder
from .potential import LandscapeError, Potential, extract_landscape, potential_from_dict
from .sampler import MAX_STEPS, RUNNERS, SimulationConfig

SCHEMA_VERSION = 1
METHODS = ("mcmc", "pt", "ins", "synthetic")
CSV_COLUMNS = ("eps", "replicate", "seed", "theta", "var_contrib")
MIN_REPLICATIONS = 30


class QuadratureError(RuntimeError):
    pass


class ReplicateError(RuntimeError):
    def __init__(self, seed: int, eps: float, cause: Exception):
        self.seed = seed
        super().__init__(f"replicate with seed {seed} at eps={eps} failed: {cause}")


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# ground truth


def _breakpoints(potential: Potential) -> list[float]:
    try:
        lg = extract_landscape(potential)
    except LandscapeError:
        return []
    return sorted(p.location for p in lg.minima + lg.saddles)


def _integral(potential, eps, a, b, vmin, pts):
    inner = [x for x in pts if a < x < b]
    f = lambda x: math.exp(-(potential.evaluate(x) - vmin) / eps)  # noqa: E731
    val, err, *rest = integrate.quad(f, a, b, points=inner or None, epsabs=0.0, epsrel=1e-11,
                                     limit=500, full_output=1)
    if len(rest) > 1 and val > 0 and err > 1e-8 * val:
        raise QuadratureError(f"quadrature reached only relative accuracy {err / val:.2e}")
    return val


def gibbs_quadrature(potential: Potential, eps: float, target) -> float:
    """Gibbs probability of the interval ``target`` at temperature ``eps``."""
    lo, hi = potential.domain
    a, b = target
    if a <= lo and b >= hi:
        return 1.0
    xs = np.linspace(lo, hi, 20001)
    vmin = float(np.min(potential.evaluate(xs)))
    pts = _breakpoints(potential)
    z = _integral(potential, eps, lo, hi, vmin, pts)
    num = _integral(potential, eps, max(a, lo), min(b, hi), vmin, pts)
    return num / z


def gibbs_riemann(potential: Potential, eps: float, target, n: int = 10**6) -> float:
    """Midpoint-rule brute force of :func:`gibbs_quadrature`."""
    lo, hi = potential.domain
    a, b = max(target[0], lo), min(target[1], hi)
    vmin = float(np.min(potential.evaluate(np.linspace(lo, hi, 20001))))

    def mid(p, q):
        h = (q - p) / n
        xs = p + h * (np.arange(n) + 0.5)
        return h * float(np.exp(-(potential.evaluate(xs) - vmin) / eps).sum())

    return mid(a, b) / mid(lo, hi)


def gibbs_density(potential: Potential, eps: float, edges) -> np.ndarray:
    """Gibbs mass of each bin ``[edges[k], edges[k+1])``."""
    edges = np.asarray(edges, dtype=float)
    lo, hi = potential.domain
    xs = np.linspace(lo, hi, 20001)
    vmin = float(np.min(potential.evaluate(xs)))
    pts = _breakpoints(potential)
    mass = np.array([_integral(potential, eps, edges[k], edges[k + 1], vmin, pts)
                     for k in range(len(edges) - 1)])
    return mass / mass.sum()


# ---------------------------------------------------------------------------
# plans and records


@dataclass
class ExperimentPlan:
    potential: Potential
    eps_grid: list
    replications: int
    method: str
    target: tuple
    seed: int
    ladder: TemperatureLadder = field(default_factory=lambda: TemperatureLadder((1.0,)))
    horizon_exponent: float | None = None
    T: float | None = None
    dt: float = 1e-3
    swap_rate: float = 0.0
    initial_position: float = -1.0
    predicted_rate: float | None = None
    tolerance: float = 0.15
    max_steps: int = MAX_STEPS
    workers: int | None = None
    synthetic_rate: float = 2.0  # synthetic method only
    synthetic_mean: float = 0.5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        g = list(self.eps_grid)
        if not g or any(not x > 0 for x in g):
            raise ValueError("eps grid must be nonempty and positive")
        if any(not a > b for a, b in zip(g, g[1:])):
            raise ValueError("eps grid must be strictly decreasing")
        self.eps_grid = [float(x) for x in g]
        if self.replications < MIN_REPLICATIONS:
            raise ValueError(f"at least {MIN_REPLICATIONS} replications are needed for a slope fit")
        if (self.T is None) == (self.horizon_exponent is None):
            raise ValueError("give exactly one of T and horizon_exponent")
        if self.method == "pt" and self.ladder.K != 2:
            raise ValueError("pt needs a two-temperature ladder")
        if self.method == "mcmc" and self.ladder.K != 1:
            self.ladder = TemperatureLadder((1.0,))

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("potential", "ladder")}
        d["potential"] = dict(self.potential.params)
        d["ladder"] = self.ladder.to_list()
        d["target"] = list(self.target)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        d = dict(d)
        d["potential"] = potential_from_dict(d["potential"])
        d["ladder"] = TemperatureLadder(tuple(d["ladder"]))
        d["target"] = tuple(d["target"])
        return cls(**d)

    def horizon(self, eps: float) -> float:
        return self.T if self.T is not None else math.exp(self.horizon_exponent / eps)


def replicate_seed(master: int, eps_index: int, replicate: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(eps_index, replicate))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class RateFit:
    rate: float
    ci_low: float
    ci_high: float
    intercept: float
    level: float = 0.95


@dataclass
class ExperimentRecord:
    plan: dict
    eps: list
    seeds: list  # per eps, per replicate
    thetas: list
    horizons: list
    truncated: list
    truth: list
    fit: RateFit | None = None
    verdict: bool | None = None
    flags: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def stats(self) -> list[dict]:
        out = []
        for e, th, T, mu in zip(self.eps, self.thetas, self.horizons, self.truth):
            a = np.asarray(th, dtype=float)
            n = len(a)
            var = float(a.var(ddof=1)) if n > 1 else 0.0
            se = math.sqrt(var / n) if n else float("nan")
            mean = float(a.mean()) if n else float("nan")
            rel = abs(mean - mu) / mu if mu else float("nan")
            out.append({"eps": e, "mean": mean, "variance": var, "std_error": se,
                        "var_times_T": var * T, "truth": mu, "relative_error": rel, "n": n})
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "plan": self.plan,
            "eps": self.eps,
            "horizons": self.horizons,
            "truncated": self.truncated,
            "truth": self.truth,
            "stats": self.stats(),
            "fit": None if self.fit is None else asdict(self.fit),
            "verdict": self.verdict,
            "flags": self.flags,
        }


def _var_contribs(th):
    a = np.asarray(th, dtype=float)
    n = len(a)
    if n < 2:
        return [0.0] * n
    return ((a - a.mean()) ** 2 / (n - 1)).tolist()


# ---------------------------------------------------------------------------
# fitting


def fit_decay_rate(eps, var_times_T, n_reps, level: float = 0.95) -> RateFit:
    """Weighted fit of ``log(Var * T)`` against ``1/eps``; the rate is minus the slope.

    Weights ``(n - 1) / 2`` are the inverse asymptotic variance of a log
    sample variance from ``n`` normal replicates.
    """
    x = 1.0 / np.asarray(eps, dtype=float)
    v = np.asarray(var_times_T, dtype=float)
    if not np.all(v > 0):
        raise ValueError("variances must be positive to fit a decay rate")
    y = np.log(v)
    if not np.all(np.isfinite(y)):
        raise ValueError("variances must be positive to fit a decay rate")
    w = (np.broadcast_to(np.asarray(n_reps, dtype=float), x.shape) - 1.0) / 2.0
    m = len(x)
    if m < 2:
        raise ValueError("need at least two temperatures for a fit")
    X = np.column_stack([np.ones(m), x])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    intercept, slope = coef
    dof = m - 2
    if dof > 0:
        resid = y - X @ coef
        s2 = float(np.sum(w * resid**2) / dof)
        cov = s2 * np.linalg.inv(X.T @ (X * w[:, None]))
        half = stats.t.ppf(0.5 + level / 2, dof) * math.sqrt(cov[1, 1])
    else:
        half = math.inf
    rate = -float(slope)
    return RateFit(rate, rate - half, rate + half, float(intercept), level)


# ---------------------------------------------------------------------------
# running


def _synthetic_thetas(plan: ExperimentPlan, eps: float, T: float) -> list[float]:
    n = plan.replications
    target_var = math.exp(-plan.synthetic_rate / eps) / T
    signs = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(n)])
    if n % 2:
        signs[-1] = 0.0
    dev = signs - signs.mean()
    d = math.sqrt(target_var * (n - 1) / float(np.sum(dev**2)))
    return (plan.synthetic_mean + d * dev).tolist()


def _config(plan: ExperimentPlan, eps: float, seed: int) -> SimulationConfig:
    K = plan.ladder.K
    return SimulationConfig(
        eps=eps, dt=plan.dt, ladder=plan.ladder, seed=seed, target=tuple(plan.target),
        horizon_exponent=plan.horizon_exponent, T=plan.T,
        initial_positions=(plan.initial_position,) * K, swap_rate=plan.swap_rate,
        max_steps=plan.max_steps,
    )


def run_replicate(plan: ExperimentPlan, eps: float, seed: int):
    cfg = _config(plan, eps, seed)
    try:
        out = RUNNERS[plan.method](cfg, plan.potential)
    except Exception as exc:  # noqa: BLE001
        raise ReplicateError(seed, eps, exc) from exc
    return out.theta, out.truncated


def run_experiment(plan: ExperimentPlan) -> ExperimentRecord:
    """Run every replicate, fit the variance decay rate and compare with the prediction."""
    seeds, thetas, horizons, truncs, truth = [], [], [], [], []
    flags = []
    for k, eps in enumerate(plan.eps_grid):
        sd = [replicate_seed(plan.seed, k, r) for r in range(plan.replications)]
        T = plan.horizon(eps)
        if plan.method == "synthetic":
            th = _synthetic_thetas(plan, eps, T)
            trunc = False
            mu = plan.synthetic_mean
        else:
            with ThreadPoolExecutor(max_workers=plan.workers or os.cpu_count()) as pool:
                res = list(pool.map(lambda s, e=eps: run_replicate(plan, e, s), sd))
            th = [r[0] for r in res]
            trunc = any(r[1] for r in res)
            if trunc:
                T = plan.max_steps * plan.dt
                flags.append(f"horizon-truncated at eps={eps}")
            mu = gibbs_quadrature(plan.potential, eps, plan.target)
        seeds.append(sd)
        thetas.append(th)
        horizons.append(T)
        truncs.append(trunc)
        truth.append(mu)
    rec = ExperimentRecord(plan.to_dict(), list(plan.eps_grid), seeds, thetas, horizons, truncs, truth,
                           flags=flags)
    st = rec.stats()
    if len(plan.eps_grid) >= 2 and all(s["variance"] > 0 for s in st):
        rec.fit = fit_decay_rate(rec.eps, [s["var_times_T"] for s in st], plan.replications)
        if plan.predicted_rate is not None:
            rec.verdict = bool(rec.fit.rate >= plan.predicted_rate - plan.tolerance)
    else:
        rec.flags.append("no fit: fewer than two temperatures or a zero variance")
    return rec


def bias_check(plan: ExperimentPlan, record: ExperimentRecord | None = None) -> dict:
    """Relative bias of the mean estimate against quadrature, judged in standard errors."""
    rec = record if record is not None else run_experiment(plan)
    rows = []
    for s in rec.stats():
        mu = s["truth"]
        bias = abs(s["mean"] - mu) / mu
        allowed = 3 * s["std_error"] / mu
        rows.append({"eps": s["eps"], "relative_bias": bias, "allowed": allowed,
                     "pass": bool(bias <= allowed)})
    return {"rows": rows, "pass": all(r["pass"] for r in rows)}


def dt_sensitivity(plan: ExperimentPlan, eps: float, replications: int | None = None) -> dict:
    """Compare mean estimates at ``dt`` and ``dt/2`` on common seeds."""
    n = replications or plan.replications
    sd = [replicate_seed(plan.seed, 0, r) for r in range(n)]
    out = {}
    for label, dt in (("dt", plan.dt), ("dt/2", plan.dt / 2)):
        p = ExperimentPlan(**{**plan.__dict__, "dt": dt, "eps_grid": [eps]})
        th = np.array([run_replicate(p, eps, s)[0] for s in sd])
        out[label] = (float(th.mean()), float(th.std(ddof=1) / math.sqrt(n)))
    diff = abs(out["dt"][0] - out["dt/2"][0])
    se = math.hypot(out["dt"][1], out["dt/2"][1])
    return {"means": out, "difference": diff, "std_error": se, "within_3se": bool(diff <= 3 * se)}


def compare_variances(thetas_a, thetas_b, n_boot: int = 2000, seed: int = 0, level: float = 0.05) -> dict:
    """Bootstrap check that ``Var(a) <= Var(b)`` is not contradicted at the given level.

    Resamples each sample independently and reports how often the resampled
    variance of ``a`` exceeds that of ``b``.
    """
    a = np.asarray(thetas_a, dtype=float)
    b = np.asarray(thetas_b, dtype=float)
    rng = np.random.default_rng(seed)
    va = a[rng.integers(0, a.size, (n_boot, a.size))].var(axis=1, ddof=1)
    vb = b[rng.integers(0, b.size, (n_boot, b.size))].var(axis=1, ddof=1)
    frac = float(np.mean(va > vb))
    return {"ratio": float(a.var(ddof=1) / b.var(ddof=1)), "p_exceed": frac, "pass": frac < 1 - level}


# ---------------------------------------------------------------------------
# persistence


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def records_csv(record: ExperimentRecord) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for e, sd, th in zip(record.eps, record.seeds, record.thetas):
        for r, (s, t, v) in enumerate(zip(sd, th, _var_contribs(th))):
            wr.writerow([repr(float(e)), r, s, repr(float(t)), repr(float(v))])
    return buf.getvalue()


def persist(record: ExperimentRecord, directory, stem: str = "experiment") -> tuple[Path, Path]:
    d = Path(directory)
    jp, cp = d / f"{stem}.json", d / f"{stem}.csv"
    atomic_write(cp, records_csv(record))
    atomic_write(jp, json.dumps({**record.to_dict(), "seeds": record.seeds}, indent=2))
    return jp, cp


def load(directory, stem: str = "experiment") -> ExperimentRecord:
    d = Path(directory)
    meta = json.loads((d / f"{stem}.json").read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"record schema {meta.get('schema_version')} != supported {SCHEMA_VERSION}")
    with open(d / f"{stem}.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise SchemaError(f"unexpected CSV columns {rows[0]}")
    eps = meta["eps"]
    thetas = [[] for _ in eps]
    seeds = [[] for _ in eps]
    index = {float(e): k for k, e in enumerate(eps)}
    for row in rows[1:]:
        k = index[float(row[0])]
        seeds[k].append(int(row[2]))
        thetas[k].append(float(row[3]))
    fit = RateFit(**meta["fit"]) if meta["fit"] else None
    return ExperimentRecord(meta["plan"], eps, seeds, thetas, meta["horizons"], meta["truncated"],
                            meta["truth"], fit, meta["verdict"], meta["flags"], meta["schema_version"])
