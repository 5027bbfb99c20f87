"""Diagonal system states and their thermodynamic functionals (nats, k_B = 1)."""
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True, eq=False)
class SystemSpec:
    energies: np.ndarray

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.energies, dtype=float))
        if e.ndim != 1 or len(e) < 1 or not np.all(np.isfinite(e)):
            raise ValueError("energies must be a finite 1-d sequence")
        object.__setattr__(self, "energies", e)

    @property
    def d(self) -> int:
        return len(self.energies)

    @classmethod
    def trivial(cls, d):
        return cls(np.zeros(d))


@dataclass(frozen=True, eq=False)
class DiagonalState:
    probs: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("probabilities must be >= 0 and sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def d(self) -> int:
        return len(self.probs)

    @classmethod
    def uniform(cls, d):
        return cls(np.full(d, 1.0 / d))

    @classmethod
    def pure(cls, d, k=0):
        p = np.zeros(d)
        p[k] = 1.0
        return cls(p)


@dataclass(frozen=True, eq=False)
class Transition:
    initial_spec: SystemSpec
    initial: DiagonalState
    final_spec: SystemSpec
    final: DiagonalState

    def __post_init__(self):
        if self.initial_spec.d != self.initial.d or self.final_spec.d != self.final.d:
            raise ValueError("state and Hamiltonian dimensions differ")

    @classmethod
    def trivial(cls, p, q):
        """Transition between two distributions with zero Hamiltonians."""
        p, q = DiagonalState(p), DiagonalState(q)
        return cls(SystemSpec.trivial(p.d), p, SystemSpec.trivial(q.d), q)

    def deltas(self, beta):
        a = state_stats(self.initial, self.initial_spec, beta)
        b = state_stats(self.final, self.final_spec, beta)
        return {k: b[k] - a[k] for k in ("U", "S", "F")}


def _xlogx(p):
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz])
    return out


def entropy(p) -> float:
    return float(-_xlogx(p).sum())


def varentropy(p) -> float:
    """Variance of the surprise -ln P(s)."""
    p = np.asarray(p, dtype=float)
    nz = p > 0
    lp = np.log(p[nz])
    m = float(np.dot(p[nz], lp))
    v = float(np.dot(p[nz], (lp - m) ** 2))
    return max(v, 0.0)


def state_stats(state: DiagonalState, spec: SystemSpec, beta: float) -> dict:
    p = state.probs
    U = float(np.dot(p, spec.energies))
    S = entropy(p)
    return {"U": U, "S": S, "Var": varentropy(p), "F": U - S / beta}


def log_partition_function(spec: SystemSpec, beta: float) -> float:
    return float(logsumexp(-beta * spec.energies))


def partition_function(spec: SystemSpec, beta: float) -> float:
    return math.exp(log_partition_function(spec, beta))


def thermal_state(spec: SystemSpec, beta: float) -> DiagonalState:
    lw = -beta * spec.energies
    p = np.exp(lw - logsumexp(lw))
    return DiagonalState(p / p.sum())


def fine_grained_entropy(state: DiagonalState, beta: float) -> np.ndarray:
    """f_s = -ln P(s)/beta; +inf marks levels with P(s) = 0."""
    p = state.probs
    out = np.full(len(p), np.inf)
    nz = p > 0
    out[nz] = -np.log(p[nz]) / beta
    return out


def relative_entropy(p, q) -> float:
    """D[p||q] in nats; +inf when p puts weight where q has none."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError("p and q must have the same shape")
    nz = p > 0
    if np.any(q[nz] <= 0):
        return math.inf
    return max(float(np.dot(p[nz], np.log(p[nz]) - np.log(q[nz]))), 0.0)
