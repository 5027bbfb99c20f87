"""Finite heat bath described by its temperature and heat capacity.

Near its mean energy the log density of states of a large bath is
quadratic, log Omega(E) = beta*E - gamma*E**2/2 with gamma = beta**2/C,
so the Gibbs distribution of bath energy is a Gaussian of variance 1/gamma.
"""
from dataclasses import dataclass, field
import math

import numpy as np


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class EntropyModel:
    """Power-law entropy density f(u) = a * u**nu for a bath of volume V."""
    a: float
    nu: float
    volume: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and 0 < self.nu < 1 and self.volume > 0):
            raise DomainError("need a > 0, 0 < nu < 1, V > 0")

    def f(self, u):
        return self.a * u ** self.nu

    def df(self, u):
        return self.a * self.nu * u ** (self.nu - 1)

    def d2f(self, u):
        return self.a * self.nu * (self.nu - 1) * u ** (self.nu - 2)


def solve_saddle_point(model: EntropyModel, beta: float, max_expand: int = 200) -> float:
    """Energy density u_beta maximizing f(u) - beta*u, i.e. f'(u_beta) = beta."""
    if beta <= 0:
        raise DomainError("beta must be positive")
    g = lambda u: model.df(u) - beta  # decreasing for concave f
    lo = hi = 1.0
    k = 0
    while g(lo) < 0:
        lo /= 2.0
        k += 1
        if k > max_expand:
            raise DomainError("no saddle point in search bracket")
    k = 0
    while g(hi) > 0:
        hi *= 2.0
        k += 1
        if k > max_expand:
            raise DomainError("no saddle point in search bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    u = 0.5 * (lo + hi)
    if not model.d2f(u) < 0:
        raise DomainError("saddle point is not a maximum")
    return u


def heat_capacity_from_model(model: EntropyModel, beta: float) -> float:
    u = solve_saddle_point(model, beta)
    d2 = model.d2f(u)
    if d2 >= 0:
        raise DomainError("f''(u_beta) >= 0, heat capacity undefined")
    return -model.volume * beta ** 2 / d2


def gamma_from(beta: float, C: float) -> float:
    if beta <= 0:
        raise DomainError("beta must be positive")
    if not C > 0:
        raise DomainError("heat capacity must be positive")
    if math.isinf(C):
        return 0.0
    return beta ** 2 / C


@dataclass(frozen=True)
class BathSpec:
    beta: float
    heat_capacity: float = math.inf

    def __post_init__(self):
        gamma_from(self.beta, self.heat_capacity)  # validates

    @property
    def gamma(self) -> float:
        return gamma_from(self.beta, self.heat_capacity)

    @property
    def sigma(self) -> float:
        """Standard deviation of bath energy, gamma**-1/2 (inf for an infinite bath)."""
        g = self.gamma
        return math.inf if g == 0 else g ** -0.5


def log_density_of_states(spec: BathSpec, E):
    E = np.asarray(E, dtype=float)
    return spec.beta * E - spec.gamma * E ** 2 / 2


@dataclass(frozen=True, eq=False)
class BathGrid:
    """Uniform grid of bath energies with log degeneracies and Gibbs weights.

    ring=True marks an infinite-bath grid whose labels are taken modulo the
    window length N*spacing, so energy differences are wrapped displacements.
    """
    energies: np.ndarray
    log_degeneracy: np.ndarray
    gibbs_prob: np.ndarray
    spacing: float
    beta: float
    gamma: float
    ring: bool = False
    log_z: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.energies)

    @property
    def length(self) -> float:
        return self.n * self.spacing

    @property
    def spec(self) -> BathSpec:
        C = math.inf if self.gamma == 0 else self.beta ** 2 / self.gamma
        return BathSpec(self.beta, C)

    def displacement(self, other=None):
        """Matrix D[i, j] = E_j - E'_i for final grid `other` (default self)."""
        other = self if other is None else other
        D = self.energies[None, :] - other.energies[:, None]
        if self.ring:
            if other is not self:
                raise DomainError("ring grids only pair with themselves")
            L = self.length
            D = D - L * np.ceil(D / L - 0.5)
            # float round-off can leave -L/2; fold it onto +L/2
            D = np.where(np.isclose(D, -L / 2, rtol=0, atol=1e-12 * L), L / 2, D)
        return D

    def log_ratio(self, other=None):
        """Matrix log Omega(E_j) - log Omega(E'_i), never exponentiating Omega itself."""
        other = self if other is None else other
        if self.ring:
            return self.beta * self.displacement(other)
        return self.log_degeneracy[None, :] - other.log_degeneracy[:, None]

    def padded(self, pad: int) -> "BathGrid":
        """Same spacing, `pad` extra levels on each side, p_G renormalized."""
        if pad == 0:
            return self
        if self.ring:
            raise DomainError("ring grids cannot be padded")
        k = np.arange(1, pad + 1)
        E = np.concatenate([self.energies[0] - self.spacing * k[::-1], self.energies,
                            self.energies[-1] + self.spacing * k])
        return _grid_from_energies(self.spec, E, self.spacing, meta=dict(self.meta, pad=pad))


def _grid_from_energies(spec, E, spacing, ring=False, meta=None):
    logw = log_density_of_states(spec, E)
    lp = logw - spec.beta * E  # = -gamma E^2/2
    m = lp.max()
    log_z = m + math.log(np.exp(lp - m).sum())
    p = np.exp(lp - log_z)
    p = p / p.sum()
    return BathGrid(E, logw, p, float(spacing), spec.beta, spec.gamma, ring, float(log_z), meta or {})


def discretize(spec: BathSpec, n_levels: int = 121, span_sigmas: float = 6.0,
               window: float | None = None) -> BathGrid:
    """Uniform symmetric grid over [-k sigma, k sigma].

    For an infinite bath sigma is undefined; pass `window` (half-width in
    energy) and a flat ring grid is returned instead.
    """
    if n_levels < 3 or n_levels % 2 == 0:
        raise ValueError("n_levels must be odd and >= 3")
    if span_sigmas <= 0:
        raise ValueError("span_sigmas must be positive")
    if spec.gamma == 0:
        if window is None or window <= 0:
            raise ValueError("an infinite bath needs a positive energy window")
        half = float(window)
        ring = True
    else:
        half = span_sigmas * spec.sigma
        ring = False
    k = np.arange(n_levels) - (n_levels - 1) // 2
    spacing = 2 * half / (n_levels - 1)
    E = k * spacing
    return _grid_from_energies(spec, E, spacing, ring=ring,
                               meta={"n_levels": n_levels, "span_sigmas": span_sigmas,
                                     "window": half})
