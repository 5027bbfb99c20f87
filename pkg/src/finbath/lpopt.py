"""Optimal average work over thermal operations on a discretized bath.

The variable is the stochastic map t(E's'|Es). It must reproduce the target
system marginal (1), be stochastic on every populated row (2), be
nonnegative (3) and respect microscopic reversibility (4):

    sum_{E,s} t(E's'|Es) Omega(E)/Omega(E') <= 1.

The objective is the mean work
sum P(s) p_G(E) t(E's'|Es) [(E - E') + (eps_s - eps'_s')].
"""
from dataclasses import dataclass, field
import io
import math

import numpy as np
import scipy.sparse as sp

from .bath import BathGrid, discretize, BathSpec
from .simplex import simplex
from .system import Transition, state_stats

DEFAULT_BAND = 8.0


@dataclass(eq=False)
class TransitionMatrix:
    """Dense t[E', s', E, s] with final grid rows and initial grid columns."""
    t: np.ndarray
    grid: BathGrid
    final_grid: BathGrid
    active: np.ndarray  # (N, d) rows that must be stochastic

    @property
    def shape(self):
        return self.t.shape


@dataclass(eq=False)
class LPProblem:
    transition: Transition
    grid: BathGrid
    final_grid: BathGrid
    beta: float
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    index: tuple  # (i_final_E, s_final, j_initial_E, s_initial) per variable
    counts: dict


@dataclass(eq=False)
class LPSolution:
    optimal_work: float
    matrix: TransitionMatrix | None
    status: str  # optimal | infeasible | span_limited
    iterations: int
    diagnostics: dict = field(default_factory=dict)


def identity_map(grid: BathGrid, d: int) -> TransitionMatrix:
    N = grid.n
    t = np.zeros((N, d, N, d))
    for j in range(N):
        for s in range(d):
            t[j, s, j, s] = 1.0
    return TransitionMatrix(t, grid, grid, np.ones((N, d), bool))


def work_of(m: TransitionMatrix, tr: Transition) -> float:
    """Mean extracted work of a map (objective of the LP)."""
    P = tr.initial.probs
    D = m.grid.displacement(m.final_grid)  # (Nf, N): E - E'
    eps, epsf = tr.initial_spec.energies, tr.final_spec.energies
    gain = D[:, None, :, None] + eps[None, None, None, :] - epsf[None, :, None, None]
    w = P[None, None, None, :] * m.grid.gibbs_prob[None, None, :, None] * m.t
    return float((w * gain).sum())


def build_lp(tr: Transition, grid: BathGrid, beta: float, pad: int = 0,
             band: float | None = DEFAULT_BAND) -> LPProblem:
    """Assemble the LP on the populated support.

    Variables are kept for populated initial levels, populated final levels
    and bath pairs with |log Omega(E)/Omega(E')| <= band. The reversibility
    rows are inequalities; one marginal row is dropped as redundant.
    """
    if abs(grid.beta - beta) > 1e-12 * max(1.0, beta):
        raise ValueError("grid was built for a different beta")
    fgrid = grid.padded(pad)
    P, Pf = tr.initial.probs, tr.final.probs
    eps, epsf = tr.initial_spec.energies, tr.final_spec.energies
    N, Nf, d, df = grid.n, fgrid.n, len(P), len(Pf)
    D = grid.displacement(fgrid)
    LR = grid.log_ratio(fgrid)
    pair = np.ones_like(LR, bool) if band is None else np.abs(LR) <= band
    keep = (pair[:, None, :, None] & (Pf > 0)[None, :, None, None]
            & (P > 0)[None, None, None, :])
    ii, sf, jj, s = np.nonzero(keep)
    nv = len(ii)
    pg = grid.gibbs_prob
    col = np.arange(nv)
    c = P[s] * pg[jj] * (D[ii, jj] + eps[s] - epsf[sf])

    rows1 = np.flatnonzero(Pf > 0)[:-1]
    r1 = np.full(df, -1)
    r1[rows1] = np.arange(len(rows1))
    m1 = r1[sf] >= 0
    A1 = sp.csr_matrix(((P[s] * pg[jj])[m1], (r1[sf][m1], col[m1])), shape=(len(rows1), nv))
    row2 = jj * d + s
    u2, inv2 = np.unique(row2, return_inverse=True)
    A2 = sp.csr_matrix((np.ones(nv), (inv2, col)), shape=(len(u2), nv))
    row4 = ii * df + sf
    u4, inv4 = np.unique(row4, return_inverse=True)
    A4 = sp.csr_matrix((np.exp(LR[ii, jj]), (inv4, col)), shape=(len(u4), nv))

    A_eq = sp.vstack([A1, A2]).tocsr()
    b_eq = np.concatenate([Pf[rows1], np.ones(len(u2))])
    counts = {
        "variables": N * Nf * d * df,
        "equality_constraints": df + N * d,
        "reversibility_constraints": Nf * df,
        "total_constraints": df + N * d + Nf * df,
        "active_variables": nv,
        "active_equality_rows": A_eq.shape[0],
        "active_reversibility_rows": A4.shape[0],
    }
    return LPProblem(tr, grid, fgrid, beta, c, A_eq, b_eq, A4.tocsr(), np.ones(len(u4)),
                     (ii, sf, jj, s), counts)


def _populated_rows_covered(prob: LPProblem):
    P = prob.transition.initial.probs
    _, _, jj, s = prob.index
    need = np.zeros((prob.grid.n, len(P)), bool)
    need[:, P > 0] = True
    have = np.zeros_like(need)
    have[jj, s] = True
    return bool(np.all(have[need]))


def solve_lp(prob: LPProblem, method: str = "simplex", **opts) -> LPSolution:
    """Maximize mean work. method='highs' uses scipy as an independent cross-check."""
    if not _populated_rows_covered(prob):
        return LPSolution(math.nan, None, "span_limited", 0,
                          {"hint": "band too narrow for a populated row; increase band"})
    if method == "simplex":
        r = simplex(-prob.c, prob.A_eq, prob.b_eq, prob.A_ub, prob.b_ub, **opts)
        st, x, it, diag = r.status, r.x, r.iterations, dict(r.residuals)
        ok = st == "optimal"
    elif method == "highs":
        from scipy.optimize import linprog
        args = dict(A_eq=prob.A_eq, b_eq=prob.b_eq, A_ub=prob.A_ub, b_ub=prob.b_ub)
        r = linprog(-prob.c, method="highs", **args)
        if r.status == 4:  # dual simplex gave up on a degenerate model; ask the interior point
            r = linprog(-prob.c, method="highs-ipm", **args)
        ok = r.status == 0
        st = "optimal" if ok else ("infeasible" if r.status == 2 else f"highs_status_{r.status}")
        x, it, diag = (r.x if ok else None), int(getattr(r, "nit", 0)), {}
    else:
        raise ValueError(f"unknown method {method!r}")
    if not ok:
        status = "span_limited" if st == "infeasible" else st
        if st == "infeasible":
            hint = ("the bath window cannot absorb the required energy shifts; "
                    "increase pad, span_sigmas or band")
        else:
            hint = ("the LP is badly scaled (Omega ratios span too many decades); "
                    "keep band <= 8 or narrow the grid")
        return LPSolution(math.nan, None, status, it, dict(diag, hint=hint))
    m = matrix_from_solution(prob, x)
    W = float(prob.c @ x)
    diag["objective_on_matrix"] = work_of(m, prob.transition)
    return LPSolution(W, m, "optimal", it, diag)


def matrix_from_solution(prob: LPProblem, x) -> TransitionMatrix:
    P, Pf = prob.transition.initial.probs, prob.transition.final.probs
    t = np.zeros((prob.final_grid.n, len(Pf), prob.grid.n, len(P)))
    ii, sf, jj, s = prob.index
    t[ii, sf, jj, s] = np.maximum(x, 0.0)
    active = np.zeros((prob.grid.n, len(P)), bool)
    active[:, P > 0] = True
    return TransitionMatrix(t, prob.grid, prob.final_grid, active)


def optimize(tr: Transition, grid: BathGrid, pad: int = 0, band: float | None = DEFAULT_BAND,
             method: str = "simplex") -> LPSolution:
    prob = build_lp(tr, grid, grid.beta, pad=pad, band=band)
    sol = solve_lp(prob, method=method)
    sol.diagnostics["counts"] = prob.counts
    return sol


def reversibility_lhs(m: TransitionMatrix) -> np.ndarray:
    """sum_{E,s} t(E's'|Es) Omega(E)/Omega(E') per final cell (E', s')."""
    LR = m.grid.log_ratio(m.final_grid)
    t = m.t
    out = np.zeros(t.shape[:2])
    i, a, j, s = np.nonzero(t)
    np.add.at(out, (i, a), t[i, a, j, s] * np.exp(LR[i, j]))
    return out


def validate_map(m: TransitionMatrix, tr: Transition, tol1=1e-9, tol2=1e-9, tol3=1e-12,
                 tol4=1e-8) -> dict:
    """Per-constraint residuals with pass/fail; (4) is checked as an upper bound."""
    P, Pf = tr.initial.probs, tr.final.probs
    t = m.t
    marg = np.einsum("s,j,iajs->a", P, m.grid.gibbs_prob, t)
    rows = t.sum(axis=(0, 1))
    lhs = reversibility_lhs(m)
    r = {
        "c1_marginal": float(np.abs(marg - Pf).max()),
        "c2_stochastic": float(np.abs(rows - 1)[m.active].max(initial=0.0)),
        "c2_inactive_rows_zero": bool(np.all(rows[~m.active] <= tol2)),
        "c3_min_entry": float(t.min()),
        "c4_excess": float(max(0.0, (lhs - 1).max())),
        "c4_equality_deviation": float(np.abs(lhs - 1).max()),
    }
    fails = []
    if r["c1_marginal"] > tol1:
        fails.append("(1)")
    if r["c2_stochastic"] > tol2 or not r["c2_inactive_rows_zero"]:
        fails.append("(2)")
    if r["c3_min_entry"] < -tol3:
        fails.append("(3)")
    if r["c4_excess"] > tol4:
        fails.append("(4)")
    r["failed"] = fails
    r["ok"] = not fails
    return r


def induced_joint(m: TransitionMatrix, initial, grid: BathGrid | None = None):
    """Final joint P(E', s') and its system marginal."""
    grid = m.grid if grid is None else grid
    P = initial.probs
    J = np.einsum("s,j,iajs->ia", P, grid.gibbs_prob, m.t)
    return J, J.sum(axis=0)


def grid_error_estimate(tr: Transition, spec: BathSpec, n_levels: int = 121,
                        span_sigmas: float = 6.0, window: float | None = None, pad: int = 0,
                        method: str = "simplex") -> dict:
    """Richardson estimate of the grid-induced suboptimality at n_levels.

    Solves at n_levels and at 2*n_levels - 1 (same window, half spacing),
    assuming an error linear in the spacing.
    """
    g1 = discretize(spec, n_levels, span_sigmas, window=window)
    g2 = discretize(spec, 2 * n_levels - 1, span_sigmas, window=window)
    w1 = optimize(tr, g1, pad=pad, method=method).optimal_work
    w2 = optimize(tr, g2, pad=2 * pad, method=method).optimal_work
    w_inf = 2 * w2 - w1
    return {"work": w1, "work_refined": w2, "work_extrapolated": w_inf, "grid_error": w_inf - w1}


# plain-text dump ------------------------------------------------------------

def _f17(x):
    return format(float(x), ".17g")


def dump_lp(prob: LPProblem) -> str:
    """Objective row, then constraint rows; every number with 17 significant digits.

    Format::

        finbath-lp 1
        maximize <nvars>
        obj <c_0> ... <c_{n-1}>
        eq <nnz> <j>:<a> ... rhs <b>
        le <nnz> <j>:<a> ... rhs <b>
    """
    out = io.StringIO()
    n = len(prob.c)
    out.write("finbath-lp 1\n")
    out.write(f"maximize {n}\n")
    out.write("obj " + " ".join(_f17(v) for v in prob.c) + "\n")
    for tag, A, b in (("eq", prob.A_eq, prob.b_eq), ("le", prob.A_ub, prob.b_ub)):
        A = sp.csr_matrix(A)
        for k in range(A.shape[0]):
            lo, hi = A.indptr[k], A.indptr[k + 1]
            terms = " ".join(f"{j}:{_f17(a)}" for j, a in zip(A.indices[lo:hi], A.data[lo:hi]))
            out.write(f"{tag} {hi - lo} {terms} rhs {_f17(b[k])}\n")
    return out.getvalue()


def load_lp(text: str):
    """Parse a dump back into (c, A_eq, b_eq, A_ub, b_ub) for maximization."""
    lines = [ln.split() for ln in text.strip().splitlines()]
    if not lines or lines[0][:1] != ["finbath-lp"]:
        raise ValueError("not a finbath LP dump")
    n = int(lines[1][1])
    c = np.array([float(v) for v in lines[2][1:]])
    if len(c) != n:
        raise ValueError("objective length mismatch")
    rows = {"eq": ([], [], [], []), "le": ([], [], [], [])}
    for ln in lines[3:]:
        tag = ln[0]
        if tag not in rows:
            raise ValueError(f"unknown row tag {tag!r}")
        r, cidx, vals, rhs = rows[tag]
        k = len(rhs)
        nnz = int(ln[1])
        for term in ln[2:2 + nnz]:
            j, a = term.split(":")
            r.append(k)
            cidx.append(int(j))
            vals.append(float(a))
        if ln[2 + nnz] != "rhs":
            raise ValueError("malformed row")
        rhs.append(float(ln[3 + nnz]))

    def mat(tag):
        r, cidx, vals, rhs = rows[tag]
        return sp.csr_matrix((vals, (r, cidx)), shape=(len(rhs), n)), np.array(rhs)
    A_eq, b_eq = mat("eq")
    A_ub, b_ub = mat("le")
    return c, A_eq, b_eq, A_ub, b_ub


def solve_dump(text: str, method: str = "simplex") -> dict:
    """Solve a (possibly hand-edited) dump; returns status and optimum."""
    c, A_eq, b_eq, A_ub, b_ub = load_lp(text)
    r = simplex(-c, A_eq, b_eq, A_ub, b_ub)
    return {"status": r.status, "optimal_work": -r.fun if r.status == "optimal" else math.nan,
            "iterations": r.iterations}
