"""Deterministic (single-shot) work with a finite bath.

Total system+bath energy splits the problem into subspaces. In the subspace
at total energy E the bath acts like an infinite bath at the shifted inverse
temperature beta' = beta - gamma*E, and the usual thermomajorization diagram
decides what is reachable. Gaussian tails of the bath energy are cut at
+-E*, which costs a failure probability epsilon.
"""
from dataclasses import dataclass
from functools import cmp_to_key
import itertools
import math
import warnings

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .bath import DomainError
from .system import DiagonalState, SystemSpec, Transition, log_partition_function

KEY_TIE = 1e-12


def _log_keys(state, spec, beta):
    p = state.probs
    with np.errstate(divide="ignore"):
        return np.log(p) + beta * spec.energies


def _log_mean_exp(p, a):
    """log sum_s p_s e^{a_s} over populated levels (weighted logsumexp misbehaves on subnormal p)."""
    on = p > 0
    a = a[on]
    m = a.max()
    return float(m + math.log(np.dot(p[on], np.exp(a - m))))


def beta_order(state: DiagonalState, spec: SystemSpec, beta: float) -> np.ndarray:
    """Levels sorted by P(s) e^{beta eps_s}, largest first; near-equal keys keep index order."""
    k = _log_keys(state, spec, beta)

    def cmp(a, b):
        ka, kb = k[a], k[b]
        if ka == kb or (np.isfinite(ka) and np.isfinite(kb) and abs(ka - kb) <= KEY_TIE):
            return a - b
        return -1 if ka > kb else 1
    return np.array(sorted(range(len(k)), key=cmp_to_key(cmp)), dtype=int)


@dataclass(eq=False)
class ThermoCurve:
    x: np.ndarray  # widths, x[0] = 0
    y: np.ndarray  # normalized probability, y[0] = 0, y[-1] = 1
    order: np.ndarray
    beta: float
    gamma: float
    E_tot: float

    @property
    def params(self):
        return (self.beta, self.gamma, self.E_tot)

    def slopes(self):
        return np.diff(self.y) / np.diff(self.x)

    def __call__(self, x):
        """y(x), flat at 1 beyond the last vertex."""
        return np.interp(x, self.x, self.y, right=1.0)


def thermo_curve(state: DiagonalState, spec: SystemSpec, beta: float, gamma: float = 0.0,
                 E_tot: float = 0.0) -> ThermoCurve:
    order = beta_order(state, spec, beta)
    e = spec.energies[order]
    p = state.probs[order]
    bp = beta - gamma * E_tot
    w = np.exp(-bp * e)
    lm = _log_mean_exp(state.probs, gamma * E_tot * spec.energies)
    q = p * np.exp(gamma * E_tot * e - lm)
    x = np.concatenate([[0.0], np.cumsum(w)])
    y = np.concatenate([[0.0], np.cumsum(q)])
    y[-1] = 1.0
    return ThermoCurve(x, y, order, beta, gamma, E_tot)


def dominates(a: ThermoCurve, b: ThermoCurve, tol=1e-12) -> bool:
    """True when curve a lies on or above curve b on [0, min(x_a, x_b)]."""
    if not np.allclose(a.params, b.params, rtol=1e-12, atol=1e-12):
        raise DomainError("curves were built at different (beta, gamma, E_tot)")
    xm = min(a.x[-1], b.x[-1])
    xs = np.union1d(a.x, b.x)
    xs = np.append(xs[xs <= xm], xm)
    return bool(np.all(a(xs) >= b(xs) - tol))


@dataclass(frozen=True)
class EpsilonBudget:
    epsilon: float
    e_star: float
    beta_window: tuple


def make_budget(beta, gamma, epsilon) -> EpsilonBudget:
    E = estar_of_epsilon(gamma, epsilon)
    return EpsilonBudget(epsilon, E, (beta - gamma * E, beta + gamma * E))


def transition_possible(tr: Transition, beta: float, gamma: float, budget: EpsilonBudget,
                        n_checks: int = 33) -> dict:
    """Dominance of initial over final curve in every checked total-energy subspace."""
    if n_checks < 3:
        raise ValueError("n_checks must be >= 3")
    Es = np.linspace(-budget.e_star, budget.e_star, n_checks)
    Es = np.union1d(Es, [0.0])
    first = None
    for E in Es:
        a = thermo_curve(tr.initial, tr.initial_spec, beta, gamma, E)
        b = thermo_curve(tr.final, tr.final_spec, beta, gamma, E)
        if not dominates(a, b):
            first = float(E)
            break
    return {"possible": first is None, "first_failing_E": first, "energies_checked": len(Es)}


# epsilon budget ------------------------------------------------------------------

def log_epsilon_of_estar(gamma: float, e_star: float) -> float:
    """log of the two-sided tail mass beyond +-E* of the variance-1/gamma Gaussian.

    Adaptive quadrature of the tail in standard-deviation units, written as
    e^{-z^2/2} times an O(1) integral, so tails far below the float range stay exact in log form.
    """
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    if e_star < 0:
        raise DomainError("E* must be nonnegative")
    z = e_star * math.sqrt(gamma)  # tail in units of the standard deviation
    val, _ = integrate.quad(lambda t: math.exp(-(2 * z * t + t * t) / 2), 0, math.inf,
                            epsabs=0, epsrel=1e-13, limit=200)
    return math.log(2 / math.sqrt(2 * math.pi) * val) - z * z / 2


def epsilon_of_estar(gamma: float, e_star: float) -> float:
    """Failure probability 2 * int_{E*}^inf sqrt(gamma/2pi) e^{-gamma E^2/2} dE."""
    return math.exp(log_epsilon_of_estar(gamma, e_star))


def log_epsilon_asymptotic(gamma: float, e_star: float) -> float:
    return 1.5 * math.log(2) - gamma * e_star ** 2 / 2 - math.log(math.sqrt(math.pi * gamma) * e_star)


def epsilon_asymptotic(gamma: float, e_star: float) -> float:
    """Large-E* approximation 2^{3/2} e^{-gamma E*^2/2} / (sqrt(pi gamma) E*)."""
    return math.exp(log_epsilon_asymptotic(gamma, e_star))


def estar_of_epsilon(gamma: float, epsilon: float) -> float:
    """Inverse of epsilon_of_estar by bisection on log epsilon."""
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    target = math.log(epsilon)
    f = lambda E: log_epsilon_of_estar(gamma, E) - target  # decreasing
    lo, hi = 0.0, 1.0 / math.sqrt(gamma)
    while f(hi) > 0:
        lo, hi = hi, 2 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# free energies and per-subspace works ------------------------------------------------

def f_min(state: DiagonalState, spec: SystemSpec, beta_eff: float) -> float:
    if beta_eff == 0:
        raise DomainError("beta_eff must be nonzero")
    sup = state.probs > 0
    if not sup.any():
        raise DomainError("empty support")
    lz = log_partition_function(spec, beta_eff)
    ls = logsumexp(-beta_eff * spec.energies[sup])
    return (lz - ls) / beta_eff


def f_max(state: DiagonalState, spec: SystemSpec, beta: float) -> float:
    return float(np.max(_log_keys(state, spec, beta))) / beta


def _shifted(beta, gamma, E_tot):
    bp = beta - gamma * E_tot
    if bp <= 0:
        raise DomainError(f"beta - gamma*E = {bp:.6g} <= 0; the energy window is too wide")
    return bp


def w_ext_subspace(state, spec, beta, gamma, E_tot) -> float:
    """Deterministic work extracted in the subspace at E_tot (rank equality)."""
    return f_min(state, spec, _shifted(beta, gamma, E_tot))


def w_form_subspace(state, spec, beta, gamma, E_tot) -> float:
    """Deterministic work of formation in the subspace at E_tot (first-slope equality)."""
    bp = _shifted(beta, gamma, E_tot)
    lz = log_partition_function(spec, bp)
    lk = float(np.max(_log_keys(state, spec, beta)))
    lm = _log_mean_exp(state.probs, gamma * E_tot * spec.energies)
    return (lz + lk - lm) / bp


def theorem5_printed(state, spec, beta, gamma, e_star) -> float:
    """Formation work with F_max taken literally as printed (no ln Z term)."""
    bp = beta + gamma * e_star
    lz, lzp = log_partition_function(spec, beta), log_partition_function(spec, bp)
    lm = _log_mean_exp(state.probs, (beta - bp) * spec.energies)
    return beta / bp * f_max(state, spec, beta) - (lz - lzp + lm) / bp


def _monotone(v, tol=1e-12):
    dv = np.diff(v)
    if np.all(dv >= -tol):
        return "increasing"
    if np.all(dv <= tol):
        return "decreasing"
    return None


def _check_gap(spec, gamma):
    if gamma > 0 and spec.d > 1:
        span = spec.energies.max() - spec.energies.min()
        if span > 0 and gamma ** -0.5 / span < 10:
            warnings.warn("bath width gamma^-1/2 is less than 10x the system energy span; "
                          "the bath-only total-energy approximation is poor", stacklevel=3)


def w_deterministic(state, spec, beta, gamma, epsilon, direction="extract", n_grid=33) -> dict:
    """Extremize the per-subspace work over total energies in [-E*, E*]."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    _check_gap(spec, gamma)
    budget = make_budget(beta, gamma, epsilon)
    if budget.beta_window[0] <= 0:
        raise DomainError("beta - gamma*E* <= 0; epsilon too small for this heat capacity")
    Es = np.linspace(-budget.e_star, budget.e_star, n_grid)
    if direction == "extract":
        v = np.array([w_ext_subspace(state, spec, beta, gamma, E) for E in Es])
        k = int(np.argmin(v))
    elif direction == "form":
        v = np.array([w_form_subspace(state, spec, beta, gamma, E) for E in Es])
        k = int(np.argmax(v))
    else:
        raise ValueError("direction is 'extract' or 'form'")
    mono = _monotone(v)
    if mono is not None:
        end = 0 if (v[0] <= v[-1]) == (direction == "extract") else len(v) - 1
        k = end
    return {"work": float(v[k]), "E_extremizer": float(Es[k]), "budget": budget,
            "monotone": mono, "energies": Es, "values": v}


# smoothing --------------------------------------------------------------------------

def _subset_masks(d):
    return np.array(list(itertools.product((False, True), repeat=d)), dtype=bool)[:, ::-1]


def _water_pour(state, spec, beta, budget_mass):
    """Lower the largest beta-keys P e^{beta eps} moving at most budget_mass of probability."""
    p = state.probs.copy()
    g = np.exp(-beta * (spec.energies - spec.energies.min()))  # key = P/g up to a constant
    key = p / g
    if budget_mass <= 0:
        return p

    def removed(lam):
        return np.maximum(p - lam * g, 0).sum()

    def room(lam):
        return np.maximum(lam * g - p, 0).sum()
    lo, hi = 0.0, key.max()
    for _ in range(200):
        lam = 0.5 * (lo + hi)
        if removed(lam) <= budget_mass and room(lam) >= removed(lam):
            hi = lam
        else:
            lo = lam
    lam = hi
    q = np.minimum(p, lam * g)
    spare = p.sum() - q.sum()
    for s in np.argsort(key, kind="stable"):  # fill lowest keys first
        add = min(spare, max(lam * g[s] - q[s], 0.0))
        q[s] += add
        spare -= add
    q[np.argmin(key)] += max(spare, 0.0)
    return q / q.sum()


def smoothed_w(state, spec, beta, gamma, epsilon, epsilon_prime, direction="extract",
               n_grid=33) -> float:
    """Deterministic work optimized over diagonal states within distance epsilon_prime."""
    if not 0 <= epsilon_prime < 1:
        raise DomainError("epsilon_prime must lie in [0, 1)")
    d = state.d
    if d > 20:
        raise ValueError("exact subset search is limited to d <= 20")
    if direction == "form":
        q = _water_pour(state, spec, beta, epsilon_prime)
        return w_deterministic(DiagonalState(q), spec, beta, gamma, epsilon, "form",
                               n_grid)["work"]
    if direction != "extract":
        raise ValueError("direction is 'extract' or 'form'")
    base = w_deterministic(state, spec, beta, gamma, epsilon, "extract", n_grid)
    if epsilon_prime == 0:
        return base["work"]
    p = state.probs
    sup = p > 0
    masks = _subset_masks(d)
    masks = masks[np.all(~masks | sup[None, :], axis=1)]  # only zero populated levels
    masks = masks[(masks @ p) <= epsilon_prime + 1e-15]
    masks = masks[np.any(sup[None, :] & ~masks, axis=1)]  # keep a nonempty support
    Es = base["energies"]
    best = -math.inf
    for E in Es:
        _shifted(beta, gamma, E)
    bps = beta - gamma * Es
    lz = np.array([log_partition_function(spec, b) for b in bps])
    for chunk in np.array_split(masks, max(1, len(masks) // 4096)):
        keep = sup[None, :] & ~chunk  # (m, d)
        lw = -bps[:, None] * spec.energies[None, :]  # (n, d)
        ls = logsumexp(np.where(keep[:, None, :], lw[None], -np.inf), axis=2)  # (m, n)
        w = ((lz[None, :] - ls) / bps[None, :]).min(axis=1)
        best = max(best, float(w.max()))
    return best
