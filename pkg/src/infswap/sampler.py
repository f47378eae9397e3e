"""Euler-Maruyama samplers for plain Langevin, parallel tempering and infinite swapping.

Particles wrap around the period, or reflect at the domain ends when the
periodic extension of the potential is discontinuous.

Random numbers come from numpy Generators, one independent stream per
particle slot, derived as ``SeedSequence(seed, spawn_key=(slot,))``. Swap
decisions in parallel tempering use their own stream (``SWAP_STREAM``), so a
run with swap rate zero follows exactly the path of the plain sampler, and an
infinite-swapping run with one temperature reproduces it bit for bit.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .ensemble import MAX_K, CapacityError, TemperatureLadder, permutation_table
from .potential import Potential, move, value_and_grad

SWAP_STREAM = 255
CHUNK = 1 << 15
MAX_STEPS = 10**8
DUMP_MAGIC = b"INSTRAJ1"
_HEADER = struct.Struct("<8sqddq")  # magic, K, dt, eps, stride


class StepSizeError(RuntimeError):
    """The integrator moved a particle by more than half a period in one step."""


@dataclass
class SimulationConfig:
    eps: float
    dt: float
    ladder: TemperatureLadder
    seed: int
    target: tuple
    horizon_exponent: float | None = None
    T: float | None = None
    initial_positions: tuple | None = None
    swap_rate: float = 0.0
    hist_bins: int = 200
    max_steps: int = MAX_STEPS
    min_horizon_exponent: float | None = None  # set to enforce the horizon rule
    dump_path: str | None = None
    dump_stride: int = 0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if (self.T is None) == (self.horizon_exponent is None):
            raise ValueError("give exactly one of T and horizon_exponent")
        if self.T is not None and self.T < self.dt:
            raise ValueError("horizon T must be at least one step")
        if self.min_horizon_exponent is not None:
            if self.horizon_exponent is None or not self.horizon_exponent > self.min_horizon_exponent:
                raise ValueError(
                    f"horizon exponent must exceed {self.min_horizon_exponent} for the estimator "
                    "to be essentially unbiased")
        if self.swap_rate < 0:
            raise ValueError("swap rate must be nonnegative")
        lo, hi = self.target
        if not lo <= hi:
            raise ValueError("target interval must satisfy lo <= hi")

    @property
    def horizon(self) -> float:
        return self.T if self.T is not None else math.exp(self.horizon_exponent / self.eps)

    def n_steps(self) -> tuple[int, bool]:
        """Step count and whether the horizon had to be truncated."""
        n = max(1, int(math.ceil(self.horizon / self.dt - 1e-9)))
        if n > self.max_steps:
            return self.max_steps, True
        return n, False


@dataclass
class EstimatorOutput:
    theta: float
    occupation_histogram: np.ndarray  # (K, bins), each row sums to 1
    wall_steps: int
    seed: int
    truncated: bool = False
    bin_edges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    swaps: int = 0


def streams(seed: int, K: int):
    return [np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))
            for k in range(K)]


def swap_stream(seed: int):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(SWAP_STREAM,))))


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def _kahan_add(acc, x):
    y = x - acc[1]
    t = acc[0] + y
    acc[1] = (t - acc[0]) - y
    acc[0] = t


@njit(cache=True, nogil=True)
def _bin(x, h_lo, h_w, nb):
    k = int((x - h_lo) / h_w)
    if k < 0:
        k = 0
    if k >= nb:
        k = nb - 1
    return k


@njit(cache=True, nogil=True)
def _mcmc_chunk(x, noise, n, dt, eps, refl, kind, lo, period, pa, pb, pc,
                a_lo, a_hi, hist, h_lo, h_w, acc, dump, stride, offset):
    amp = math.sqrt(2.0 * eps * 1.0)
    sq = math.sqrt(dt)
    nd = 0
    nb = hist.shape[1]
    for s in range(n):
        _, g = value_and_grad(kind, lo, period, pa, pb, pc, x[0])
        dx = -g * dt + amp * (sq * noise[0, s])
        if abs(dx) > 0.5 * period:
            return 1, nd
        x[0] = move(lo, period, refl, x[0], dx)
        _kahan_add(acc, 1.0 if a_lo <= x[0] <= a_hi else 0.0)
        hist[0, _bin(x[0], h_lo, h_w, nb)] += 1.0
        if stride > 0 and (offset + s + 1) % stride == 0:
            dump[nd, 0] = x[0]
            nd += 1
    return 0, nd


@njit(cache=True, nogil=True)
def _pt_chunk(x, noise, unif, n, dt, eps, alphas, rate, refl, kind, lo, period, pa, pb, pc,
              a_lo, a_hi, hist, h_lo, h_w, acc, dump, stride, offset):
    sq = math.sqrt(dt)
    nd = 0
    nsw = 0
    nb = hist.shape[1]
    amp0 = math.sqrt(2.0 * eps * (1.0 / alphas[0]))
    amp1 = math.sqrt(2.0 * eps * (1.0 / alphas[1]))
    for s in range(n):
        _, g0 = value_and_grad(kind, lo, period, pa, pb, pc, x[0])
        _, g1 = value_and_grad(kind, lo, period, pa, pb, pc, x[1])
        d0 = -g0 * dt + amp0 * (sq * noise[0, s])
        d1 = -g1 * dt + amp1 * (sq * noise[1, s])
        if abs(d0) > 0.5 * period or abs(d1) > 0.5 * period:
            return 1, nd, nsw
        x[0] = move(lo, period, refl, x[0], d0)
        x[1] = move(lo, period, refl, x[1], d1)
        if rate > 0.0:
            v0, _ = value_and_grad(kind, lo, period, pa, pb, pc, x[0])
            v1, _ = value_and_grad(kind, lo, period, pa, pb, pc, x[1])
            ratio = math.exp(min(0.0, -(alphas[0] - alphas[1]) * (v1 - v0) / eps))
            if unif[s] < ratio * rate * dt:
                t = x[0]
                x[0] = x[1]
                x[1] = t
                nsw += 1
        _kahan_add(acc, 1.0 if a_lo <= x[0] <= a_hi else 0.0)
        hist[0, _bin(x[0], h_lo, h_w, nb)] += 1.0
        hist[1, _bin(x[1], h_lo, h_w, nb)] += 1.0
        if stride > 0 and (offset + s + 1) % stride == 0:
            dump[nd, 0] = x[0]
            dump[nd, 1] = x[1]
            nd += 1
    return 0, nd, nsw


@njit(cache=True, nogil=True)
def _weights(v, alphas, perms, eps, rho):
    """Fill ``rho[i, j]`` for positions with energies ``v``."""
    ns, K = perms.shape
    e = np.empty(ns)
    emin = np.inf
    for s in range(ns):
        t = 0.0
        for l in range(K):
            t += alphas[l] * v[perms[s, l]]
        e[s] = t
        if t < emin:
            emin = t
    z = 0.0
    for s in range(ns):
        e[s] = math.exp(-(e[s] - emin) / eps)
        z += e[s]
    rho[:, :] = 0.0
    for s in range(ns):
        w = e[s] / z
        for l in range(K):
            rho[perms[s, l], l] += w


@njit(cache=True, nogil=True)
def _ins_chunk(x, noise, n, dt, eps, alphas, perms, refl, kind, lo, period, pa, pb, pc,
               a_lo, a_hi, hist, h_lo, h_w, acc, dump, stride, offset):
    K = x.shape[0]
    sq = math.sqrt(dt)
    nd = 0
    nb = hist.shape[1]
    v = np.empty(K)
    g = np.empty(K)
    rho = np.empty((K, K))
    inv = 1.0 / alphas
    for i in range(K):
        v[i], g[i] = value_and_grad(kind, lo, period, pa, pb, pc, x[i])
    _weights(v, alphas, perms, eps, rho)
    for s in range(n):
        for i in range(K):
            t = 0.0
            for j in range(K):
                t += rho[i, j] * inv[j]
            amp = math.sqrt(2.0 * eps * t)
            dx = -g[i] * dt + amp * (sq * noise[i, s])
            if abs(dx) > 0.5 * period:
                return 1, nd
            x[i] = move(lo, period, refl, x[i], dx)
        for i in range(K):
            v[i], g[i] = value_and_grad(kind, lo, period, pa, pb, pc, x[i])
        _weights(v, alphas, perms, eps, rho)
        est = 0.0
        for i in range(K):
            if a_lo <= x[i] <= a_hi:
                est += rho[i, 0]
        _kahan_add(acc, est)
        for i in range(K):
            k = _bin(x[i], h_lo, h_w, nb)
            for l in range(K):
                hist[l, k] += rho[i, l]
        if stride > 0 and (offset + s + 1) % stride == 0:
            for i in range(K):
                dump[nd, i] = x[i]
            nd += 1
    return 0, nd


# ---------------------------------------------------------------------------
# drivers


def _initial(cfg: SimulationConfig, potential: Potential, K: int) -> np.ndarray:
    if cfg.initial_positions is None:
        raise ValueError("initial_positions are required")
    x0 = np.asarray(cfg.initial_positions, dtype=float).ravel()
    if x0.size == 1:
        x0 = np.full(K, x0[0])
    if x0.size != K:
        raise ValueError(f"need {K} initial positions, got {x0.size}")
    return potential.wrap(x0).astype(float)


class _Dump:
    def __init__(self, cfg: SimulationConfig, K: int):
        self.stride = int(cfg.dump_stride) if cfg.dump_path else 0
        self.fh = None
        if self.stride > 0:
            self.fh = open(cfg.dump_path, "wb")
            self.fh.write(_HEADER.pack(DUMP_MAGIC, K, cfg.dt, cfg.eps, self.stride))
        self.buf = np.zeros((CHUNK // self.stride + 1 if self.stride else 1, K))

    def write(self, nd: int):
        if self.fh is not None and nd:
            self.fh.write(np.ascontiguousarray(self.buf[:nd], dtype="<f8").tobytes())

    def close(self):
        if self.fh is not None:
            self.fh.close()


def _run(cfg: SimulationConfig, potential: Potential, K: int, step):
    n_total, truncated = cfg.n_steps()
    x = _initial(cfg, potential, K)
    rngs = streams(cfg.seed, K)
    lo, hi = potential.domain
    nb = cfg.hist_bins
    h_w = (hi - lo) / nb
    hist = np.zeros((K, nb))
    acc = np.zeros(2)
    dump = _Dump(cfg, K)
    done = 0
    extra = 0
    try:
        while done < n_total:
            n = min(CHUNK, n_total - done)
            noise = np.empty((K, n))
            for k in range(K):
                noise[k] = rngs[k].standard_normal(n)
            status, nd, more = step(x, noise, n, hist, lo, h_w, acc, dump.buf, dump.stride, done)
            if status:
                raise StepSizeError(
                    f"step size dt={cfg.dt} too large at eps={cfg.eps}: a particle jumped more than "
                    "half a period; reduce dt")
            dump.write(nd)
            extra += more
            done += n
    finally:
        dump.close()
    theta = min(max(acc[0] / n_total, 0.0), 1.0)
    edges = lo + h_w * np.arange(nb + 1)
    return EstimatorOutput(theta, hist / n_total, n_total, cfg.seed, truncated, edges, extra)


def run_mcmc(cfg: SimulationConfig, potential: Potential) -> EstimatorOutput:
    """Overdamped Langevin at temperature ``eps``; theta is the time fraction in the target."""
    a_lo, a_hi = cfg.target
    refl = potential.reflecting

    def step(x, noise, n, hist, lo, h_w, acc, dump, stride, off):
        st, nd = _mcmc_chunk(x, noise, n, cfg.dt, cfg.eps, refl, *potential.kernel_args,
                             a_lo, a_hi, hist, lo, h_w, acc, dump, stride, off)
        return st, nd, 0

    return _run(cfg, potential, 1, step)


def run_pt(cfg: SimulationConfig, potential: Potential) -> EstimatorOutput:
    """Two-temperature parallel tempering with swaps thinned per step."""
    if cfg.ladder.K != 2:
        raise ValueError("parallel tempering is implemented for two temperatures")
    rate = float(cfg.swap_rate)
    if rate * cfg.dt > 0.1:
        raise StepSizeError(f"swap_rate*dt = {rate * cfg.dt:.3g} > 0.1; thinning is inaccurate, reduce dt")
    alphas = cfg.ladder.as_array()
    a_lo, a_hi = cfg.target
    refl = potential.reflecting
    urng = swap_stream(cfg.seed)

    def step(x, noise, n, hist, lo, h_w, acc, dump, stride, off):
        unif = urng.random(n)
        return _pt_chunk(x, noise, unif, n, cfg.dt, cfg.eps, alphas, rate, refl, *potential.kernel_args,
                         a_lo, a_hi, hist, lo, h_w, acc, dump, stride, off)

    return _run(cfg, potential, 2, step)


def run_ins(cfg: SimulationConfig, potential: Potential) -> EstimatorOutput:
    """Infinite-swapping dynamics with the slot-1 weighted estimator."""
    K = cfg.ladder.K
    if K > MAX_K:
        raise CapacityError(f"K={K} exceeds the enumeration cap of {MAX_K}")
    alphas = cfg.ladder.as_array()
    perms = permutation_table(K)
    a_lo, a_hi = cfg.target
    refl = potential.reflecting

    def step(x, noise, n, hist, lo, h_w, acc, dump, stride, off):
        st, nd = _ins_chunk(x, noise, n, cfg.dt, cfg.eps, alphas, perms, refl, *potential.kernel_args,
                            a_lo, a_hi, hist, lo, h_w, acc, dump, stride, off)
        return st, nd, 0

    return _run(cfg, potential, K, step)


RUNNERS = {"mcmc": run_mcmc, "pt": run_pt, "ins": run_ins}


# ---------------------------------------------------------------------------
# offline tools


@njit(cache=True)
def _hist_kernel(states, v, alphas, perms, eps, h_lo, h_w, hist):
    n, K = states.shape
    rho = np.empty((K, K))
    nb = hist.shape[1]
    for t in range(n):
        _weights(v[t], alphas, perms, eps, rho)
        for i in range(K):
            k = _bin(states[t, i], h_lo, h_w, nb)
            for l in range(K):
                hist[l, k] += rho[i, l]


def weighted_histogram(states, potential: Potential, ladder: TemperatureLadder, eps: float, bins):
    """Per-slot weighted occupation histograms of a stream of ensemble states.

    ``bins`` is an array of equally spaced edges covering the domain. Row ``l``
    of the result estimates the Gibbs law at temperature ``eps / alpha_l``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    K = ladder.K
    if states.shape[1] != K:
        raise ValueError("state width differs from the ladder size")
    edges = np.asarray(bins, dtype=float)
    lo, hi = potential.domain
    if edges[0] > lo + 1e-12 or edges[-1] < hi - 1e-12:
        raise ValueError("bin grid must cover the domain")
    widths = np.diff(edges)
    if not np.allclose(widths, widths[0]):
        raise ValueError("bins must be equally spaced")
    wrapped = potential.wrap(states)
    v = potential.evaluate(wrapped).reshape(states.shape)
    hist = np.zeros((K, len(edges) - 1))
    _hist_kernel(wrapped, v, ladder.as_array(), permutation_table(K), float(eps),
                 float(edges[0]), float(widths[0]), hist)
    return hist / len(states)


def read_trajectory(path):
    """Read a dump written by a sampler; returns ``(header dict, states array)``."""
    raw = Path(path).read_bytes()
    magic, K, dt, eps, stride = _HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ValueError("not a trajectory dump")
    states = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(-1, K)
    return {"K": K, "dt": dt, "eps": eps, "stride": stride}, states


def suggest_dt(potential: Potential, minima_locations) -> float:
    """``0.01 * min(1, 1/kappa)`` with ``kappa`` the largest well curvature."""
    xs = np.asarray(list(minima_locations), dtype=float)
    h = 1e-4
    curv = (potential.gradient(xs + h) - potential.gradient(xs - h)) / (2 * h)
    kappa = float(np.max(np.abs(curv))) if xs.size else 1.0
    return 0.01 * min(1.0, 1.0 / kappa) if kappa > 0 else 0.01
