"""Acceptance criteria 1-9, each at its stated tolerance.

Run under pytest (one PASS/FAIL line per criterion in the terminal summary)
or directly with ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time

import numpy as np
import pytest

from finbath import detwork as dw
from finbath import flucwork as fw
from finbath import lpopt
from finbath.bath import BathSpec, discretize
from finbath.report import dumps
from finbath.system import DiagonalState, SystemSpec, Transition, thermal_state, varentropy

LN2 = math.log(2)
EXTRACT = Transition.trivial([1.0, 0.0], [0.5, 0.5])
ERASE = Transition.trivial([0.5, 0.5], [1.0, 0.0])
HEAT_CAPACITIES = (20.0, 40.0, 80.0)

RESULTS = {}  # criterion number -> (passed, summary line, report text)
_SOLUTIONS = {}  # LP solutions from criteria 1-2, reused by criterion 3


def _record(n, passed, line, report, seconds=None):
    # wall-clock stays out of the report so that reruns compare byte for byte
    RESULTS[n] = (bool(passed), line, dumps(report), seconds)
    return RESULTS[n]


def _lp(key, tr, grid):
    sol = lpopt.optimize(tr, grid)
    _SOLUTIONS[key] = (tr, grid, sol)
    return sol


# criteria --------------------------------------------------------------------------

def criterion1():
    t0 = time.perf_counter()
    g = discretize(BathSpec(1.0), 41, window=6 * LN2)
    w_ext = _lp("c1_extract", EXTRACT, g).optimal_work
    w_form = _lp("c1_erase", ERASE, g).optimal_work
    dt = time.perf_counter() - t0
    e1, e2 = abs(w_ext / LN2 - 1), abs(w_form / -LN2 - 1)
    ok = e1 <= 0.01 and e2 <= 0.01 and dt < 10
    rep = {"extract": w_ext, "erase": w_form, "rel_err_extract": e1, "rel_err_erase": e2}
    return _record(1, ok, f"pure->uniform {w_ext:.6f} ({e1:.2%}), uniform->pure {w_form:.6f} "
                          f"({e2:.2%}), {dt:.2f} s (<10 s)", rep, dt)


def criterion2():
    """Gap to -dF minus the measured infinite-bath grid error, against dS^2/(2 beta C)."""
    t0 = time.perf_counter()
    dS = EXTRACT.deltas(1.0)["S"]
    rows = []
    for C in HEAT_CAPACITIES:
        g = discretize(BathSpec(1.0, C), 121, 6.0)
        w = _lp(f"c2_C{C:g}", EXTRACT, g).optimal_work
        # gamma=0 ring with the same window and N measures the pure grid error
        ring = discretize(BathSpec(1.0), 121, window=6 * math.sqrt(C))
        w_ring = _lp(f"c2_ring{C:g}", EXTRACT, ring).optimal_work
        grid_err = LN2 - w_ring
        gap = LN2 - w - grid_err
        theory = dS ** 2 / (2 * C)
        rows.append({"C": C, "work": w, "grid_error": grid_err, "gap": gap, "theory": theory,
                     "residual": gap - theory})
    dt = time.perf_counter() - t0
    res = np.array([r["residual"] for r in rows])
    same_sign = bool(np.all(res > 0) or np.all(res < 0))
    x = np.log(1 / np.array(HEAT_CAPACITIES))
    slope = float(np.polyfit(x, np.log(np.abs(res)), 1)[0]) if np.all(res != 0) else math.nan
    ok = same_sign and abs(slope - 2) <= 0.5 and dt < 300
    rep = {"rows": rows, "residual_slope": slope, "residuals_same_sign": same_sign}
    line = ("residuals " + ", ".join(f"{r:+.4f}" for r in res)
            + f"; log-log slope {slope:.2f} (want 2+-0.5)"
            + ("" if same_sign else ", signs alternate so no power law") + f", {dt:.1f} s")
    return _record(2, ok, line, rep, dt)


def criterion3():
    if not {"c1_extract", "c2_C20"} <= set(_SOLUTIONS):
        criterion1()
        criterion2()
    worst_w, worst_t1, min_d = -math.inf, -math.inf, math.inf
    rows = {}
    for key in sorted(_SOLUTIONS):
        tr, grid, sol = _SOLUTIONS[key]
        J, _ = lpopt.induced_joint(sol.matrix, tr.initial)
        t1 = fw.theorem1_bound(tr, J, sol.matrix.final_grid, 1.0, initial_grid=grid)
        dF = fw.second_law_bound(tr, 1.0)
        D = fw.relative_entropy(J, np.outer(sol.matrix.final_grid.gibbs_prob, tr.final.probs))
        rows[key] = {"work": sol.optimal_work, "theorem1": t1, "second_law": dF, "D": D}
        worst_w = max(worst_w, sol.optimal_work - t1)
        worst_t1 = max(worst_t1, t1 - dF)
        if not grid.ring:
            min_d = min(min_d, D)
    ok = worst_w <= 1e-7 and worst_t1 <= 1e-7 and min_d > 0
    rep = {"rows": rows, "max_work_minus_theorem1": worst_w,
           "max_theorem1_minus_second_law": worst_t1, "min_finite_C_relative_entropy": min_d}
    return _record(3, ok, f"{len(rows)} LP solutions: max(W - T1) {worst_w:.2e}, max(T1 + dF) "
                          f"{worst_t1:.2e}, min finite-C D {min_d:.3e}", rep)


def criterion4():
    rng = np.random.default_rng(4)
    worst, max_sum = 0.0, -math.inf
    for _ in range(50):
        d = int(rng.integers(2, 6))
        q = rng.dirichlet(np.ones(d))
        C = float(10 ** rng.uniform(0, 4))
        beta = float(rng.uniform(0.2, 5))
        r = fw.reversibility_gap(q, beta, C)
        worst = max(worst, abs(r["sum"] - r["closed_form"]))
        max_sum = max(max_sum, r["sum"])
    ok = worst <= 1e-12 and max_sum < 0
    return _record(4, ok, f"50 random P': max |identity error| {worst:.1e}, max gap {max_sum:.2e} < 0",
                   {"max_identity_error": worst, "max_gap": max_sum})


def criterion5():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 8))
        e = rng.normal(size=d) * rng.uniform(0.1, 3)
        beta = float(rng.uniform(0.05, 5))
        p = thermal_state(SystemSpec(e), beta).probs
        var_e = p @ (e - p @ e) ** 2
        worst = max(worst, abs(varentropy(p) - beta ** 2 * var_e))
    return _record(5, worst <= 1e-10, f"50 random spectra: max |Var - beta^2 Var[e]| {worst:.1e}",
                   {"max_error": worst})


def criterion6():
    t0 = time.perf_counter()
    gamma = 1.0 / 1e6
    pure = dw.w_deterministic(DiagonalState.pure(2, 0), SystemSpec.trivial(2), 1.0, gamma, 1e-3,
                              "extract")
    spec = SystemSpec([0.0, 1.0])
    th = dw.w_deterministic(thermal_state(spec, 1.0), spec, 1.0, gamma, 1e-3, "extract")
    rng = np.random.default_rng(6)
    n_mono, directions = 0, {"increasing": 0, "decreasing": 0}
    for _ in range(100):
        d = int(rng.integers(2, 5))
        s = DiagonalState(rng.dirichlet(np.ones(d) * 0.7))
        sp = SystemSpec(rng.uniform(0, 1, d))
        g = float(10 ** rng.uniform(-4, -2))
        r = dw.w_deterministic(s, sp, 1.0, g, float(10 ** rng.uniform(-6, -1)), "extract")
        if r["monotone"] is not None:
            n_mono += 1
            directions[r["monotone"]] += 1
    dt = time.perf_counter() - t0
    err = abs(pure["work"] - LN2)
    ok = err <= 1e-4 and th["work"] == 0.0 and n_mono == 100 and dt < 30
    rep = {"pure_work": pure["work"], "pure_error": err, "thermal_work": th["work"],
           "monotone_instances": n_mono, "directions": directions,
           "E_extremizer": pure["E_extremizer"]}
    return _record(6, ok, f"pure W {pure['work']:.6f} (|err| {err:.2e}, want 1e-4), thermal "
                          f"{th['work']:g}, monotone {n_mono}/100, {dt:.1f} s", rep, dt)


def criterion7():
    worst, n_checked, worst_at = 0.0, 0, None
    worst_rt = 0.0
    for g in np.logspace(-3, 0, 10):
        for E in np.logspace(0, 2.5, 10):
            g, E = float(g), float(E)
            le = dw.log_epsilon_of_estar(g, E)
            if g * E * E / 2 >= 4:
                rel = abs(math.expm1(dw.log_epsilon_asymptotic(g, E) - le))
                n_checked += 1
                if rel > worst:
                    worst, worst_at = rel, (g, E)
            if le > math.log(1e-300):
                worst_rt = max(worst_rt, abs(dw.estar_of_epsilon(g, math.exp(le)) - E))
    ok = worst <= 0.10 and worst_rt <= 1e-8
    rep = {"points_checked": n_checked, "max_relative_gap": worst, "worst_at": worst_at,
           "max_round_trip_error": worst_rt}
    return _record(7, ok, f"{n_checked} points with gamma E*^2/2 >= 4: max |asym/exact - 1| "
                          f"{worst:.3f} (want 0.10) at gamma={worst_at[0]:.3g}, E*={worst_at[1]:.3g}; "
                          f"round trip {worst_rt:.1e}", rep)


def _standard_oracle(p, q, e, beta):
    """Elbow test on cumulative (e^{-beta e}, P) curves, written independently of detwork."""
    def pts(r):
        k = sorted(range(3), key=lambda i: (-r[i] * math.exp(beta * e[i]), i))
        xs, ys = [0.0], [0.0]
        for i in k:
            xs.append(xs[-1] + math.exp(-beta * e[i]))
            ys.append(ys[-1] + r[i])
        return xs, ys

    def height(xs, ys, x):
        for a in range(len(xs) - 1):
            if x <= xs[a + 1]:
                return ys[a] + (ys[a + 1] - ys[a]) * (x - xs[a]) / (xs[a + 1] - xs[a])
        return ys[-1]
    xa, ya = pts(p)
    xb, yb = pts(q)
    return all(height(xa, ya, x) >= y - 1e-12 for x, y in zip(xb[1:], yb[1:]))


def criterion8():
    rng = np.random.default_rng(8)
    agree, positives = 0, 0
    for k in range(100):
        e = np.sort(rng.uniform(0, 2, 3))
        beta = float(rng.uniform(0.3, 3))
        p = rng.dirichlet(np.ones(3) * 0.5)
        if k % 2:  # half the finals are thermal mixtures of the initial, so often reachable
            lam = rng.uniform(0, 1)
            q = lam * p + (1 - lam) * thermal_state(SystemSpec(e), beta).probs
        else:
            q = rng.dirichlet(np.ones(3) * 0.5)
        spec = SystemSpec(e)
        got = dw.dominates(dw.thermo_curve(DiagonalState(p), spec, beta, 0.01, 0.0),
                           dw.thermo_curve(DiagonalState(q / q.sum()), spec, beta, 0.01, 0.0))
        want = _standard_oracle(p, q / q.sum(), e, beta)
        agree += got == want
        positives += want
    return _record(8, agree == 100, f"{agree}/100 verdicts agree ({positives} reachable)",
                   {"agree": agree, "reachable": positives})


CRITERIA = {1: criterion1, 2: criterion2, 3: criterion3, 4: criterion4, 5: criterion5,
            6: criterion6, 7: criterion7, 8: criterion8}


def criterion9():
    first = {n: RESULTS[n][2] if n in RESULTS else CRITERIA[n]()[2] for n in CRITERIA}
    saved = dict(RESULTS)
    _SOLUTIONS.clear()
    second = {n: CRITERIA[n]()[2] for n in CRITERIA}
    RESULTS.update(saved)
    diff = [n for n in CRITERIA if first[n] != second[n]]
    return _record(9, not diff, "reports of criteria 1-8 byte-identical on rerun" if not diff
                   else f"reports differ for criteria {diff}", {"differing": diff})


# pytest entry points ---------------------------------------------------------------

def _check(n):
    passed, line, _, _ = RESULTS[n] if n in RESULTS else (CRITERIA | {9: criterion9})[n]()
    assert passed, f"criterion {n}: {line}"


def test_criterion1_infinite_bath_recovery():
    _check(1)


@pytest.mark.slow
def test_criterion2_finite_bath_scaling():
    _check(2)


@pytest.mark.slow
def test_criterion3_theorem1_chain():
    _check(3)


def test_criterion4_reversibility_gap():
    _check(4)


def test_criterion5_varentropy_heat_capacity():
    _check(5)


def test_criterion6_deterministic_limits():
    _check(6)


def test_criterion7_epsilon_budget():
    _check(7)


def test_criterion8_thermomajorization_equivalence():
    _check(8)


@pytest.mark.slow
def test_criterion9_determinism():
    _check(9)


def summary_lines():
    return [f"criterion {n}: {'PASS' if RESULTS[n][0] else 'FAIL'}  {RESULTS[n][1]}"
            for n in sorted(RESULTS)]


if __name__ == "__main__":
    for n in list(CRITERIA) + [9]:
        if n not in RESULTS:
            (CRITERIA | {9: criterion9})[n]()
    print("\n".join(summary_lines()))
    sys.exit(0 if all(v[0] for v in RESULTS.values()) else 1)
