"""Permutation weights, occupation matrix and symmetrized potential for K replicas."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

MAX_K = 8


class CapacityError(ValueError):
    """Factorial enumeration requested beyond the supported ensemble size."""


@dataclass(frozen=True)
class TemperatureLadder:
    """Temperature multipliers ``1 = a_1 >= a_2 >= ... >= a_K > 0``.

    Replica slot ``l`` runs at temperature ``eps / a_l``. Entries may be
    Fractions when exact arithmetic is wanted downstream.
    """

    alphas: tuple

    def __post_init__(self):
        a = tuple(self.alphas)
        object.__setattr__(self, "alphas", a)
        if not a:
            raise ValueError("ladder must have at least one temperature")
        if a[0] != 1:
            raise ValueError(f"ladder not in Delta: first multiplier must be 1, got {a[0]}")
        for x, y in zip(a, a[1:]):
            if y > x:
                raise ValueError(f"ladder not in Delta: multipliers must be nonincreasing ({x} < {y})")
        if not a[-1] > 0:
            raise ValueError(f"ladder not in Delta: last multiplier must be positive, got {a[-1]}")

    @property
    def K(self) -> int:
        return len(self.alphas)

    def __len__(self):
        return len(self.alphas)

    def __getitem__(self, i):
        return self.alphas[i]

    @property
    def last(self):
        return self.alphas[-1]

    def as_array(self) -> np.ndarray:
        return np.array([float(a) for a in self.alphas])

    @classmethod
    def geometric(cls, K: int, ratio=Fraction(1, 2)) -> "TemperatureLadder":
        return cls(tuple(ratio ** k for k in range(K)))

    def to_list(self) -> list[float]:
        return [float(a) for a in self.alphas]


@dataclass
class EnsembleState:
    positions: np.ndarray
    v_values: np.ndarray

    @classmethod
    def from_positions(cls, positions, potential) -> "EnsembleState":
        x = np.asarray(positions, dtype=float)
        return cls(x, np.asarray(potential.evaluate(x), dtype=float).reshape(x.shape))


@dataclass
class WeightTable:
    perms: np.ndarray  # (K!, K): perms[s, l] = particle placed in slot l
    log_weights: np.ndarray
    rho: np.ndarray  # rho[i, j] = probability particle i occupies slot j
    u_value: float

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def weight_of(self, perm) -> float:
        idx = {tuple(p): s for s, p in enumerate(self.perms.tolist())}[tuple(perm)]
        return float(np.exp(self.log_weights[idx]))


@lru_cache(maxsize=None)
def permutation_table(K: int) -> np.ndarray:
    if K > MAX_K:
        raise CapacityError(f"K={K} exceeds the enumeration cap of {MAX_K}")
    return np.array(list(itertools.permutations(range(K))), dtype=np.int64).reshape(-1, K)


def symmetrized_potential(values, ladder: TemperatureLadder):
    """``min over permutations of sum_l a_l V_sigma(l)`` by the rearrangement rule.

    The largest multiplier is paired with the smallest energy. Works with
    Fractions as well as floats.
    """
    vals = sorted(values)
    alphas = sorted(ladder.alphas, reverse=True)
    if len(vals) != len(alphas):
        raise ValueError("ladder and values differ in length")
    return sum((a * v for a, v in zip(alphas, vals)), start=0 * alphas[0])


def _slot_energies(v: np.ndarray, alphas: np.ndarray, perms: np.ndarray) -> np.ndarray:
    # energies[s] = sum_l alphas[l] * v[perms[s, l]]
    return v[perms] @ alphas


def compute_weights(state: EnsembleState, ladder: TemperatureLadder, eps: float) -> WeightTable:
    if eps <= 0:
        raise ValueError(f"temperature must be positive, got {eps}")
    K = ladder.K
    if len(state.v_values) != K:
        raise ValueError(f"state has {len(state.v_values)} particles but ladder has {K}")
    if K > MAX_K:
        raise CapacityError(f"K={K} exceeds the enumeration cap of {MAX_K}")
    perms = permutation_table(K)
    alphas = ladder.as_array()
    v = np.asarray(state.v_values, dtype=float)
    e = _slot_energies(v, alphas, perms)
    e_min = e.min()
    z = -(e - e_min) / eps
    log_norm = math.log(np.exp(z).sum())
    logw = z - log_norm
    w = np.exp(logw)
    rho = np.zeros((K, K))
    for j in range(K):
        np.add.at(rho[:, j], perms[:, j], w)
    return WeightTable(perms, logw, rho, float(symmetrized_potential(v.tolist(), ladder)))


def ins_coefficients(state: EnsembleState, ladder: TemperatureLadder, eps: float, potential):
    """Drift and noise amplitude of each replica in the symmetrized dynamics."""
    table = compute_weights(state, ladder, eps)
    drift = -np.asarray(potential.gradient(state.positions), dtype=float)
    inv = 1.0 / ladder.as_array()
    diffusion = np.sqrt(2.0 * eps * (table.rho @ inv))
    return drift, diffusion


def excess_energy(values, ladder: TemperatureLadder):
    """``sum_l a_l V_l - U >= 0``: how far the labelling is from the sorted one."""
    return sum(a * v for a, v in zip(ladder.alphas, values)) - symmetrized_potential(values, ladder)
