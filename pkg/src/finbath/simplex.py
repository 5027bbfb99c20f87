"""Two-phase revised simplex for  min c.x  s.t.  A_eq x = b_eq, A_ub x <= b_ub, x >= 0.

Dense explicit basis inverse with rank-one updates and periodic
refactorization. Pricing is Dantzig (most negative reduced cost); after a
run of degenerate pivots it switches to Bland's rule until progress resumes,
which rules out cycling. Every choice is index-ordered, so a solve is a
deterministic function of its inputs.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CERT_TOL = 1e-7


@dataclass
class SimplexResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit | numerical
    x: np.ndarray
    fun: float
    y_eq: np.ndarray
    y_ub: np.ndarray
    iterations: int
    residuals: dict = field(default_factory=dict)


def _col_dot(Binv, A, j):
    lo, hi = A.indptr[j], A.indptr[j + 1]
    return Binv[:, A.indices[lo:hi]] @ A.data[lo:hi]


def simplex(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, *, feas_tol=1e-9, opt_tol=1e-11,
            piv_tol=1e-9, refactor_every=64, bland_after=40, max_iter=200000):
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_eq = sp.csr_matrix((0, n)) if A_eq is None else sp.csr_matrix(A_eq)
    A_ub = sp.csr_matrix((0, n)) if A_ub is None else sp.csr_matrix(A_ub)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    me, mu = A_eq.shape[0], A_ub.shape[0]
    m = me + mu

    # flip rows so every right-hand side is >= 0; an ub row with b < 0 needs an artificial
    flip = np.where(b_eq < 0, -1.0, 1.0)
    A_eq = sp.diags(flip) @ A_eq
    b_eq = np.abs(b_eq)
    if np.any(b_ub < 0):
        raise ValueError("A_ub rows need b_ub >= 0")

    # row equilibration
    A0 = sp.vstack([A_eq, A_ub]).tocsr()
    b0 = np.concatenate([b_eq, b_ub])
    rmax = np.asarray(abs(A0).max(axis=1).todense()).ravel() if m else np.zeros(0)
    rs = 1.0 / np.where(rmax > 0, rmax, 1.0)
    A0 = sp.diags(rs) @ A0
    b0 = b0 * rs
    cscale = max(np.abs(c).max(initial=0.0), 1e-300)
    cs = c / cscale

    # columns: structural | slacks (ub rows) | artificials (eq rows)
    slack = sp.csr_matrix((rs[me:], (np.arange(me, m), np.arange(mu))), shape=(m, mu))
    art = sp.csr_matrix((np.ones(me), (np.arange(me), np.arange(me))), shape=(m, me))
    A = sp.hstack([A0, slack, art]).tocsc()
    AT = A.T.tocsr()
    ntot = n + mu + me
    is_art = np.zeros(ntot, bool)
    is_art[n + mu:] = True

    basis = np.concatenate([n + mu + np.arange(me), n + np.arange(mu)]).astype(np.int64)
    Binv = np.diag(1.0 / np.concatenate([np.ones(me), rs[me:]]))
    xB = Binv @ b0
    in_basis = np.zeros(ntot, bool)
    in_basis[basis] = True
    it = 0

    def refactor():
        nonlocal Binv, xB
        B = A[:, basis].toarray()
        Binv = np.linalg.inv(B)
        xB = Binv @ b0
        xB[np.abs(xB) < 1e-14] = 0.0

    def run(cost, allow):
        nonlocal Binv, xB, it
        degenerate = 0
        since = 0
        while it < max_iter:
            if since >= refactor_every:
                refactor()
                since = 0
            y = cost[basis] @ Binv
            d = cost - AT @ y
            d[~allow | in_basis] = 0.0
            bland = degenerate >= bland_after
            if bland:
                cand = np.flatnonzero(d < -opt_tol)
                if len(cand) == 0:
                    return "optimal"
                q = int(cand[0])
            else:
                q = int(np.argmin(d))
                if d[q] >= -opt_tol:
                    return "optimal"
            alpha = _col_dot(Binv, A, q)
            pos = alpha > piv_tol
            if not np.any(pos):
                return "unbounded"
            idx = np.flatnonzero(pos)
            ratios = np.maximum(xB[idx], 0.0) / alpha[idx]
            if bland:
                tmin = ratios.min()
                tie = idx[ratios <= tmin + 1e-14]
                r = int(tie[np.argmin(basis[tie])])
            else:
                # Harris: loosen by the feasibility tolerance, then take the largest pivot
                tmax = ((np.maximum(xB[idx], 0.0) + feas_tol) / alpha[idx]).min()
                ok = idx[ratios <= tmax]
                r = int(ok[np.argmax(alpha[ok])])
            theta = max(xB[r], 0.0) / alpha[r]
            xB -= theta * alpha
            xB[r] = theta
            xB[np.abs(xB) < 1e-15] = 0.0
            piv = Binv[r] / alpha[r]
            Binv -= np.outer(alpha, piv)
            Binv[r] = piv
            in_basis[basis[r]] = False
            basis[r] = q
            in_basis[q] = True
            degenerate = degenerate + 1 if theta <= 1e-13 else 0
            it += 1
            since += 1
        return "iteration_limit"

    # phase 1
    if me:
        c1 = is_art.astype(float)
        st = run(c1, np.ones(ntot, bool))
        refactor()
        infeas = float(c1[basis] @ xB)
        if st == "iteration_limit":
            return _result("iteration_limit", n, c, basis, xB, me, mu, rs, Binv, cscale, it)
        if infeas > feas_tol * max(1.0, np.abs(b0).sum()):
            return _result("infeasible", n, c, basis, xB, me, mu, rs, Binv, cscale, it)
        # pivot remaining zero-level artificials out where possible
        for r in range(m):
            if not is_art[basis[r]]:
                continue
            row = AT @ Binv[r]
            row[is_art | in_basis] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) <= 1e-7:
                continue  # redundant row, artificial stays basic at zero
            alpha = _col_dot(Binv, A, j)
            piv = Binv[r] / alpha[r]
            Binv -= np.outer(alpha, piv)
            Binv[r] = piv
            in_basis[basis[r]] = False
            basis[r] = j
            in_basis[j] = True
            it += 1
        refactor()

    c2 = np.concatenate([cs, np.zeros(mu + me)])
    st = run(c2, ~is_art)
    refactor()
    return _result(st, n, c, basis, xB, me, mu, rs, Binv, cscale, it, A=A, b0=b0, c2=c2, is_art=is_art,
                   flip=flip)


def _result(status, n, c, basis, xB, me, mu, rs, Binv, cscale, it, A=None, b0=None, c2=None,
            is_art=None, flip=None):
    ntot = len(c) + me + mu
    x_full = np.zeros(ntot)
    x_full[basis] = np.maximum(xB, 0.0)
    x = x_full[:n]
    res = {}
    y_eq = np.zeros(me)
    y_ub = np.zeros(mu)
    if A is not None:
        y = c2[basis] @ Binv
        d = c2 - A.T @ y
        d[is_art] = 0.0
        res["primal"] = float(np.abs(A @ x_full - b0).max(initial=0.0))
        res["dual_infeasibility"] = float(max(0.0, -d.min(initial=0.0)) * cscale)
        primal = float(c2 @ x_full)
        dual = float(b0 @ y)
        res["duality_gap"] = abs(primal - dual) / max(1.0, abs(primal))
        y = y * rs * cscale  # back to unscaled rows and costs
        y_eq, y_ub = y[:me] * flip, y[me:]
        # refuse to certify a basis whose final residuals are off (badly scaled models)
        if status == "optimal" and max(res["primal"], res["duality_gap"]) > CERT_TOL:
            status = "numerical"
    return SimplexResult(status, x, float(c @ x), y_eq, y_ub, it, res)
