"""Closed-form bounds on mean work with a finite bath, and the maps that reach them.

With an infinite bath the mean extractable work is -dF. A bath of heat
capacity C costs an extra dS**2/(2 beta C) to first order in 1/C, and
forming a state out of a uniform one costs its varentropy on top.
"""
from dataclasses import dataclass
import math

import numpy as np

from .bath import BathGrid, DomainError
from .lpopt import TransitionMatrix
from .system import Transition, fine_grained_entropy, relative_entropy, varentropy


class ConsistencyError(ValueError):
    pass


class SpanError(DomainError):
    pass


def _is_uniform(p, tol=1e-12):
    p = np.asarray(p)
    return bool(np.all(np.abs(p - 1.0 / len(p)) <= tol))


def _is_trivial(spec, tol=1e-12):
    e = spec.energies
    return bool(np.all(np.abs(e - e[0]) <= tol))


def second_law_bound(tr: Transition, beta: float) -> float:
    return -tr.deltas(beta)["F"]


def theorem1_bound(tr: Transition, joint, grid: BathGrid, beta: float, tol=1e-8,
                   initial_grid: BathGrid | None = None) -> float:
    """-dF - D[P(E's') || p_G(E') P(s')]/beta for a final joint over grid x final levels.

    When the final grid is a padded copy of initial_grid the initial bath is not Gibbs on
    it, and the bound picks up D(p_G || p_G') = log Z' - log Z.
    """
    J = np.asarray(joint, dtype=float)
    Pf = tr.final.probs
    if J.shape != (grid.n, len(Pf)):
        raise ConsistencyError("joint shape does not match grid and final dimension")
    if np.abs(J.sum(axis=0) - Pf).max() > tol:
        raise ConsistencyError("joint marginal differs from the final state")
    ref = np.outer(grid.gibbs_prob, Pf)
    pad = 0.0 if initial_grid is None else grid.log_z - initial_grid.log_z
    return second_law_bound(tr, beta) + (pad - relative_entropy(J, ref)) / beta


def theorem2_bound(tr: Transition, beta: float, C: float) -> float:
    dS = tr.deltas(beta)["S"]
    corr = 0.0 if math.isinf(C) else dS ** 2 / (2 * beta * C)
    return second_law_bound(tr, beta) - corr


def theorem3_bound(tr: Transition, beta: float, C: float, direction: str) -> float:
    """Optimal work to first order in 1/C when one endpoint is uniform with trivial H."""
    if direction == "extraction":
        if not (_is_uniform(tr.final.probs) and _is_trivial(tr.final_spec)):
            raise DomainError("extraction needs a uniform final state with trivial H; "
                              "use theorem2_bound")
        extra = 0.0
    elif direction == "formation":
        if not (_is_uniform(tr.initial.probs) and _is_trivial(tr.initial_spec)):
            raise DomainError("formation needs a uniform initial state with trivial H; "
                              "use theorem2_bound")
        extra = varentropy(tr.final.probs)
    else:
        raise ValueError("direction is 'extraction' or 'formation'")
    if math.isinf(C):
        return second_law_bound(tr, beta)
    dS = tr.deltas(beta)["S"]
    return second_law_bound(tr, beta) - (dS ** 2 + extra) / (2 * beta * C)


def reversibility_gap(final_probs, beta: float, C: float) -> dict:
    """Form P' from uniform, then extract back to uniform; the net work is <= 0."""
    q = np.asarray(final_probs, dtype=float)
    d = len(q)
    u = np.full(d, 1.0 / d)
    form = theorem3_bound(Transition.trivial(u, q), beta, C, "formation")
    back = theorem3_bound(Transition.trivial(q, u), beta, C, "extraction")
    dS = Transition.trivial(u, q).deltas(beta)["S"]
    closed = 0.0 if math.isinf(C) else -(2 * dS ** 2 + varentropy(q)) / (2 * beta * C)
    return {"formation": form, "extraction": back, "sum": form + back, "closed_form": closed}


@dataclass(eq=False)
class FMap:
    """f(E', s', s): share of level s sent to s' with the bath shifted by f_s' - f_s."""
    values: np.ndarray  # (N, d', d)


def product_fmap(tr: Transition, grid: BathGrid) -> FMap:
    Pf = tr.final.probs
    v = np.broadcast_to(Pf[None, :, None], (grid.n, len(Pf), tr.initial.d)).copy()
    return FMap(v)


def _is_identity(tr: Transition):
    return (tr.initial.d == tr.final.d and np.array_equal(tr.initial.probs, tr.final.probs)
            and np.array_equal(tr.initial_spec.energies, tr.final_spec.energies))


def identity_fmap(tr: Transition, grid: BathGrid) -> FMap:
    d = tr.initial.d
    return FMap(np.broadcast_to(np.eye(d)[None], (grid.n, d, d)).copy())


def validate_fmap(fm: FMap, tr: Transition, grid: BathGrid, beta: float, tol=1e-9) -> dict:
    P, Pf = tr.initial.probs, tr.final.probs
    f = fm.values
    r = {"range": float(max(-f.min(), f.max() - 1, 0.0))}
    r["marginal"] = float(np.abs(np.einsum("s,eas->ea", P, f) - Pf[None, :]).max())
    # sum over s' of f(E - f_s' + f_s, s', s) = 1 where the shift lands on the grid
    fs, fsf = fine_grained_entropy(tr.initial, beta), fine_grained_entropy(tr.final, beta)
    worst = 0.0
    for s in np.flatnonzero(P > 0):
        tot = np.zeros(grid.n)
        hit = np.ones(grid.n, bool)
        for a in np.flatnonzero(Pf > 0):
            k = (fsf[a] - fs[s]) / grid.spacing
            kr = round(k)
            if abs(k - kr) > 1e-9:
                hit[:] = False
                break
            idx = np.arange(grid.n) - kr
            if grid.ring:
                idx %= grid.n
            ok = (idx >= 0) & (idx < grid.n)
            hit &= ok
            tot[ok] += f[idx[ok], a, s]
        if hit.any():
            worst = max(worst, float(np.abs(tot[hit] - 1).max()))
    r["stochastic"] = worst
    r["ok"] = max(r.values()) <= tol
    return r


def first_order_work(fm: FMap, tr: Transition, grid: BathGrid, beta: float, gamma: float) -> float:
    """Work of the map built from f(E's's), correct to first order in gamma."""
    v = validate_fmap(fm, tr, grid, beta)
    if not v["ok"]:
        raise ConsistencyError(f"f-map violates its constraints: {v}")
    P, Pf = tr.initial.probs, tr.final.probs
    s_on, a_on = P > 0, Pf > 0
    fs = fine_grained_entropy(tr.initial, beta)[s_on]
    fsf = fine_grained_entropy(tr.final, beta)[a_on]
    f = fm.values[:, a_on][:, :, s_on]
    inner = np.einsum("s,eas,as->ea", P[s_on], f, fsf[:, None] - fs[None, :]) / Pf[a_on][None, :]
    E2 = grid.gibbs_prob * grid.energies ** 2
    corr = gamma ** 2 / (2 * beta) * float(np.einsum("a,e,ea->", Pf[a_on], E2, inner ** 2))
    return second_law_bound(tr, beta) - corr


@dataclass(eq=False)
class RQDecomposition:
    R: np.ndarray  # (N', d', d)
    Q: np.ndarray  # energy, nan where R = 0
    lhs: np.ndarray  # sum_s R e^{beta Q}/p_G(E') per (E', s')
    ok: bool


def derive_RQ(m: TransitionMatrix, beta: float, tol=1e-9) -> RQDecomposition:
    g, gf = m.grid, m.final_grid
    pg = g.gibbs_prob
    D = g.displacement(gf)  # E - E'
    R = np.einsum("j,iajs->ias", pg, m.t)
    num = np.einsum("j,iajs,ij->ias", pg, m.t, D)
    with np.errstate(invalid="ignore", divide="ignore"):
        Q = np.where(R > 0, num / np.where(R > 0, R, 1.0), np.nan)
    expo = np.where(R > 0, beta * np.nan_to_num(Q), -np.inf)
    # Omega(E)/Omega(E') = p_G(E)/p_G'(E') e^{beta(E-E')} Z/Z'
    logw = np.log(np.where(R > 0, R, 1.0)) + expo - np.log(gf.gibbs_prob)[:, None, None] \
        + (g.log_z - gf.log_z)
    lhs = np.where(R > 0, np.exp(logw), 0.0).sum(axis=2)
    return RQDecomposition(R, Q, lhs, bool(lhs.max() <= 1 + tol))


def construct_optimal_map(tr: Transition, grid: BathGrid, beta: float,
                          purpose: str = "product") -> tuple[TransitionMatrix, dict]:
    """t(E's'|Es) = f(E's's) delta(E - E' - f_s' + f_s) with shifts rounded to the grid.

    Returns the map and a note on rounding and clipping at the grid edge.
    """
    P, Pf = tr.initial.probs, tr.final.probs
    if purpose == "erasure" and not _is_uniform(Pf):
        raise DomainError("erasure map needs a uniform final state")
    if purpose == "formation" and not _is_uniform(P):
        raise DomainError("formation map needs a uniform initial state")
    if purpose not in ("erasure", "formation", "product"):
        raise ValueError("purpose is erasure, formation or product")
    N, d, df = grid.n, len(P), len(Pf)
    t = np.zeros((N, df, N, d))
    active = np.zeros((N, d), bool)
    active[:, P > 0] = True
    if _is_identity(tr):
        for s in range(d):
            t[np.arange(N), s, np.arange(N), s] = 1.0
        return TransitionMatrix(t, grid, grid, active), {"clipped": 0, "max_rounding": 0.0}
    fs, fsf = fine_grained_entropy(tr.initial, beta), fine_grained_entropy(tr.final, beta)
    span = grid.energies[-1] - grid.energies[0]
    clipped = 0
    rounding = 0.0
    j = np.arange(N)
    for s in np.flatnonzero(P > 0):
        for a in np.flatnonzero(Pf > 0):
            shift = fsf[a] - fs[s]  # E - E'
            if abs(shift) > span:
                need = abs(shift) / grid.spacing
                raise SpanError(f"shift {shift:.6g} exceeds grid span {span:.6g}; "
                                f"need more than {need:.0f} levels at this spacing")
            k = int(round(shift / grid.spacing))
            rounding = max(rounding, abs(shift - k * grid.spacing))
            i = j - k
            if grid.ring:
                i = i % N
            else:
                clipped += int(np.sum((i < 0) | (i >= N)))
                i = np.clip(i, 0, N - 1)
            np.add.at(t, (i, a, j, s), Pf[a])
    return TransitionMatrix(t, grid, grid, active), {"clipped": clipped, "max_rounding": float(rounding)}
