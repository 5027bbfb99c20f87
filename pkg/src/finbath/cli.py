"""finbath command line: bound | optimize | detwork | epsilon | curve | sweep.

Each command reads a JSON config, prints a JSON report to stdout and writes
CSV (and optional SVG) files to --out-dir. Exit codes: 0 all validations
passed, 1 a validation failed, 2 usage or config error, 3 internal error.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
import copy
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import detwork as dw
from . import flucwork as fw
from . import lpopt
from .bath import BathSpec, DomainError, discretize
from .report import curve_csv, dumps, svg_lines, table_csv, write_atomic
from .system import DiagonalState, SystemSpec, Transition

COMMANDS = ("bound", "optimize", "detwork", "epsilon", "curve", "sweep")
SWEEP_PARAMS = ("C", "epsilon", "E_tot", "N")


class ConfigError(ValueError):
    pass


class InternalError(RuntimeError):
    pass


# config ----------------------------------------------------------------------------

def _num(cfg, key, where, positive=False, allow_inf=False, required=True, default=None):
    if key not in cfg:
        if required:
            raise ConfigError(f"{where}{key}: required field missing")
        return default
    v = cfg[key]
    if allow_inf and isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}{key}: expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v) and not allow_inf:
        raise ConfigError(f"{where}{key}: must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{where}{key}: must be > 0")
    return v


def _state_block(cfg, key):
    blk = cfg.get(key)
    if not isinstance(blk, dict):
        raise ConfigError(f"{key}: expected an object with energies and probs")
    for f in ("energies", "probs"):
        v = blk.get(f)
        if not isinstance(v, list) or not v or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            raise ConfigError(f"{key}.{f}: expected a non-empty list of numbers")
    e = np.array(blk["energies"], float)
    p = np.array(blk["probs"], float)
    if len(e) != len(p):
        raise ConfigError(f"{key}: energies and probs differ in length")
    if np.any(p < 0):
        raise ConfigError(f"{key}.probs: negative probability")
    dev = abs(p.sum() - 1)
    if dev > 1e-9:
        raise ConfigError(f"{key}.probs: sum is {p.sum():.12g}, not 1 within 1e-9")
    if dev > 1e-12:
        warnings.warn(f"{key}.probs renormalized (deviation {dev:.3g})", stacklevel=2)
    return SystemSpec(e), DiagonalState(p / p.sum())


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def resolve(cfg) -> dict:
    """Validate and resolve a config into typed parameters."""
    out = {"beta": _num(cfg, "beta", "", positive=True)}
    out["C"] = _num(cfg, "heat_capacity", "", positive=True, allow_inf=True, default=math.inf,
                    required=False)
    out["spec"] = BathSpec(out["beta"], out["C"])
    out["gamma"] = out["spec"].gamma
    if "system" in cfg:
        out["system"] = _state_block(cfg, "system")
    if "final" in cfg:
        out["final"] = _state_block(cfg, "final")
    g = cfg.get("grid", {})
    if not isinstance(g, dict):
        raise ConfigError("grid: expected an object")
    out["levels"] = int(_num(g, "levels", "grid.", default=121, required=False))
    out["span_sigmas"] = _num(g, "span_sigmas", "grid.", positive=True, default=6.0,
                              required=False)
    out["window"] = _num(g, "window", "grid.", positive=True, required=False)
    out["pad"] = int(_num(g, "pad", "grid.", default=0, required=False))
    if "band" in g and g["band"] is None:
        out["band"] = None  # keep every pair
    else:
        out["band"] = _num(g, "band", "grid.", positive=True, default=lpopt.DEFAULT_BAND,
                           required=False)
    for k in ("epsilon", "epsilon_prime", "e_star", "E_tot"):
        out[k] = _num(cfg, k, "", required=False)
    out["direction"] = cfg.get("direction", "extract")
    if out["direction"] not in ("extract", "form"):
        raise ConfigError("direction: expected 'extract' or 'form'")
    out["lp_file"] = cfg.get("lp_file")
    out["richardson"] = bool(cfg.get("richardson", False))
    sw = cfg.get("sweep")
    if sw is not None:
        if not isinstance(sw, dict):
            raise ConfigError("sweep: expected an object")
        if sw.get("parameter") not in SWEEP_PARAMS:
            raise ConfigError(f"sweep.parameter: expected one of {SWEEP_PARAMS}")
        vals = sw.get("values")
        if not isinstance(vals, list) or not vals:
            raise ConfigError("sweep.values: expected a non-empty list")
        if sw.get("command", "bound") not in COMMANDS[:-1]:
            raise ConfigError("sweep.command: expected a non-sweep command")
    return out


def _transition(r):
    if "system" not in r:
        raise ConfigError("system: required field missing")
    if "final" not in r:
        raise ConfigError("final: required for this command (initial and final states)")
    (a, p), (b, q) = r["system"], r["final"]
    return Transition(a, p, b, q)


# commands --------------------------------------------------------------------------

def cmd_bound(cfg, out_dir=None, svg=False):
    r = resolve(cfg)
    tr = _transition(r)
    beta, C = r["beta"], r["C"]
    vals = {"second_law": fw.second_law_bound(tr, beta),
            "theorem2": fw.theorem2_bound(tr, beta, C)}
    prov = {"second_law": "flucwork.second_law_bound", "theorem2": "flucwork.theorem2_bound"}
    for direction in ("extraction", "formation"):
        try:
            vals[f"theorem3_{direction}"] = fw.theorem3_bound(tr, beta, C, direction)
            prov[f"theorem3_{direction}"] = "flucwork.theorem3_bound"
        except DomainError:
            pass
    if fw._is_uniform(tr.initial.probs) and fw._is_trivial(tr.initial_spec) and \
            fw._is_trivial(tr.final_spec):
        target = tr.final.probs
    elif fw._is_uniform(tr.final.probs) and fw._is_trivial(tr.final_spec) and \
            fw._is_trivial(tr.initial_spec):
        target = tr.initial.probs
    else:
        target = None
    if target is not None and len(target) == tr.initial.d == tr.final.d:
        gap = fw.reversibility_gap(target, beta, C)
        vals["reversibility_gap"] = gap["sum"]
        vals["reversibility_gap_closed_form"] = gap["closed_form"]
        prov["reversibility_gap"] = "flucwork.reversibility_gap"
        prov["reversibility_gap_closed_form"] = "flucwork.reversibility_gap"
    ok = vals["theorem2"] <= vals["second_law"] + 1e-15
    return _report("bound", r, vals, prov, ok=ok)


def _grid(r, n=None):
    n = r["levels"] if n is None else n
    if r["gamma"] == 0 and r["window"] is None:
        raise ConfigError("grid.window: required for an infinite bath (heat_capacity inf)")
    return discretize(r["spec"], n, r["span_sigmas"], window=r["window"])


def cmd_optimize(cfg, out_dir=None, svg=False):
    r = resolve(cfg)
    if r["lp_file"]:
        with open(r["lp_file"]) as fh:
            res = lpopt.solve_dump(fh.read())
        if res["status"] != "optimal":
            raise InternalError(f"LP from {r['lp_file']} is {res['status']}; the identity map "
                                "should always be feasible, so the constraint file is corrupt")
        return _report("optimize", r, {"optimal_work": res["optimal_work"]},
                       {"optimal_work": "lpopt.solve_lp"},
                       extra={"status": res["status"], "iterations": res["iterations"]})
    tr = _transition(r)
    beta, C = r["beta"], r["C"]
    grid = _grid(r)
    prob = lpopt.build_lp(tr, grid, beta, pad=r["pad"], band=r["band"])
    sol = lpopt.solve_lp(prob)
    vals = {"second_law": fw.second_law_bound(tr, beta),
            "theorem2": fw.theorem2_bound(tr, beta, C)}
    prov = {"second_law": "flucwork.second_law_bound", "theorem2": "flucwork.theorem2_bound"}
    extra = {"status": sol.status, "iterations": sol.iterations, "counts": prob.counts,
             "grid": {"levels": grid.n, "spacing": grid.spacing, "ring": grid.ring,
                      "final_levels": prob.final_grid.n}}
    if sol.status != "optimal":
        extra["hint"] = sol.diagnostics.get("hint", "")
        top = prob.final_grid.energies[-1]
        if r["gamma"] > 0 and top > beta / r["gamma"]:
            extra["hint"] += (f"; the density of states peaks at E = beta/gamma = "
                              f"{beta / r['gamma']:.6g} inside the grid, so padding adds little "
                              "capacity (narrow span_sigmas or use a larger heat capacity)")
        return _report("optimize", r, vals, prov, ok=False, extra=extra)
    m = sol.matrix
    J, marg = lpopt.induced_joint(m, tr.initial)
    v = lpopt.validate_map(m, tr)
    vals.update({
        "optimal_work": sol.optimal_work,
        "theorem1_induced_joint": fw.theorem1_bound(tr, J, m.final_grid, beta,
                                                   initial_grid=grid),
        "bath_relative_entropy": fw.relative_entropy(J, np.outer(m.final_grid.gibbs_prob,
                                                                 tr.final.probs)),
        "gap_to_second_law": fw.second_law_bound(tr, beta) - sol.optimal_work,
        "gap_to_theorem2": fw.theorem2_bound(tr, beta, C) - sol.optimal_work,
    })
    prov.update({"optimal_work": "lpopt.solve_lp",
                 "theorem1_induced_joint": "flucwork.theorem1_bound",
                 "bath_relative_entropy": "system.relative_entropy",
                 "gap_to_second_law": "flucwork.second_law_bound - lpopt.solve_lp",
                 "gap_to_theorem2": "flucwork.theorem2_bound - lpopt.solve_lp"})
    if r["richardson"]:
        est = lpopt.grid_error_estimate(tr, r["spec"], r["levels"], r["span_sigmas"],
                                        window=r["window"], pad=r["pad"])
        vals["richardson_grid_error"] = est["grid_error"]
        prov["richardson_grid_error"] = "lpopt.grid_error_estimate"
    extra["residuals"] = {k: v[k] for k in ("c1_marginal", "c2_stochastic", "c3_min_entry",
                                            "c4_excess", "c4_equality_deviation")}
    extra["failed_constraints"] = v["failed"]
    extra["solver"] = {k: sol.diagnostics[k] for k in ("primal", "dual_infeasibility",
                                                       "duality_gap")
                       if k in sol.diagnostics}
    ok = v["ok"] and vals["optimal_work"] <= vals["theorem1_induced_joint"] + 1e-7
    if out_dir:
        i, a, j, s = np.nonzero(m.t)
        rows = [[int(i[k]), int(a[k]), int(j[k]), int(s[k]), float(m.final_grid.energies[i[k]]),
                 float(grid.energies[j[k]]), float(m.t[i[k], a[k], j[k], s[k]])]
                for k in range(len(i))]
        write_atomic(os.path.join(out_dir, "transition_matrix.csv"),
                     table_csv(["i_final", "s_final", "j_initial", "s_initial", "E_final",
                                "E_initial", "t"], rows))
        write_atomic(os.path.join(out_dir, "lp.txt"), lpopt.dump_lp(prob))
    return _report("optimize", r, vals, prov, ok=ok, extra=extra)


def cmd_detwork(cfg, out_dir=None, svg=False, direction=None):
    r = resolve(cfg)
    direction = direction or r["direction"]
    if "system" not in r:
        raise ConfigError("system: required field missing")
    if r["epsilon"] is None:
        raise ConfigError("epsilon: required for detwork")
    spec, state = r["system"]
    beta, gamma = r["beta"], r["gamma"]
    res = dw.w_deterministic(state, spec, beta, gamma, r["epsilon"], direction)
    b = res["budget"]
    key = "W_ext" if direction == "extract" else "W_form"
    vals = {key: res["work"], "E_extremizer": res["E_extremizer"], "e_star": b.e_star,
            "beta_minus": b.beta_window[0], "beta_plus": b.beta_window[1]}
    op = "detwork.w_deterministic"
    prov = {key: op, "E_extremizer": op, "e_star": "detwork.estar_of_epsilon",
            "beta_minus": "detwork.make_budget", "beta_plus": "detwork.make_budget"}
    if r["epsilon_prime"]:
        vals[key + "_smoothed"] = dw.smoothed_w(state, spec, beta, gamma, r["epsilon"],
                                                r["epsilon_prime"], direction)
        prov[key + "_smoothed"] = "detwork.smoothed_w"
    if direction == "form":
        vals["theorem5_printed"] = dw.theorem5_printed(state, spec, beta, gamma, b.e_star)
        prov["theorem5_printed"] = "detwork.theorem5_printed"
    extra = {"monotone": res["monotone"], "direction": direction}
    if out_dir:
        Es = res["energies"]
        rows = []
        for E in Es:
            bp = beta - gamma * E
            rows.append([float(E), float(bp),
                         dw.w_ext_subspace(state, spec, beta, gamma, E),
                         dw.w_form_subspace(state, spec, beta, gamma, E),
                         math.sqrt(gamma / (2 * math.pi)) * math.exp(-gamma * E * E / 2)])
        write_atomic(os.path.join(out_dir, "detwork_curve.csv"),
                     table_csv(["E_tot", "beta_prime", "w_ext", "w_form", "density"], rows))
        if svg:
            write_atomic(os.path.join(out_dir, "detwork_curve.svg"), svg_lines(
                [("w_ext", [x[1] for x in rows], [x[2] for x in rows]),
                 ("w_form", [x[1] for x in rows], [x[3] for x in rows])],
                title="deterministic work per subspace", xlabel="beta'", ylabel="work"))
    return _report("detwork", r, vals, prov, extra=extra)


def cmd_epsilon(cfg, out_dir=None, svg=False):
    r = resolve(cfg)
    gamma = r["gamma"]
    if gamma == 0:
        raise ConfigError("heat_capacity: must be finite for an epsilon budget")
    if r["e_star"] is None and r["epsilon"] is None:
        raise ConfigError("e_star or epsilon: one is required")
    vals, prov = {}, {}
    E = r["e_star"]
    if E is None:
        E = dw.estar_of_epsilon(gamma, r["epsilon"])
        vals["e_star"] = E
        prov["e_star"] = "detwork.estar_of_epsilon"
    exact = dw.epsilon_of_estar(gamma, E)
    asym = dw.epsilon_asymptotic(gamma, E)
    vals.update({"epsilon_exact": exact, "epsilon_asymptotic": asym,
                 "relative_gap": (asym - exact) / exact if exact > 0 else math.nan,
                 "gamma_estar2_half": gamma * E * E / 2})
    prov.update({"epsilon_exact": "detwork.epsilon_of_estar",
                 "epsilon_asymptotic": "detwork.epsilon_asymptotic",
                 "relative_gap": "detwork.epsilon_asymptotic / detwork.epsilon_of_estar",
                 "gamma_estar2_half": "bath.gamma_from"})
    return _report("epsilon", r, vals, prov)


def cmd_curve(cfg, out_dir=None, svg=False):
    r = resolve(cfg)
    if "system" not in r:
        raise ConfigError("system: required field missing")
    E = r["E_tot"] or 0.0
    curves = {"initial": dw.thermo_curve(r["system"][1], r["system"][0], r["beta"], r["gamma"], E)}
    if "final" in r:
        curves["final"] = dw.thermo_curve(r["final"][1], r["final"][0], r["beta"], r["gamma"], E)
    vals, prov = {}, {}
    extra = {name: {"x": c.x, "y": c.y, "order": c.order} for name, c in curves.items()}
    if "final" in curves:
        vals["initial_dominates_final"] = dw.dominates(curves["initial"], curves["final"])
        prov["initial_dominates_final"] = "detwork.dominates"
    if out_dir:
        for name, c in curves.items():
            write_atomic(os.path.join(out_dir, f"curve_{name}.csv"), curve_csv(c))
        if svg:
            write_atomic(os.path.join(out_dir, "curve.svg"), svg_lines(
                [(n, c.x, c.y) for n, c in curves.items()],
                title=f"thermomajorization curve, E_tot={E:g}", xlabel="width", ylabel="probability"))
    return _report("curve", r, vals, prov, extra={"curves": extra})


def _sweep_point(args):
    cmd, cfg = args
    rep = HANDLERS[cmd](cfg)
    return rep


def _with_param(cfg, name, v):
    c = copy.deepcopy(cfg)
    c.pop("sweep", None)
    if name == "C":
        c["heat_capacity"] = v
    elif name == "N":
        c.setdefault("grid", {})["levels"] = v
    else:
        c[name] = v
    return c


def cmd_sweep(cfg, out_dir=None, svg=False, jobs=1):
    resolve(cfg)
    sw = cfg.get("sweep")
    if sw is None:
        raise ConfigError("sweep: required for the sweep command")
    cmd, name, values = sw.get("command", "bound"), sw["parameter"], sw["values"]
    tasks = [(cmd, _with_param(cfg, name, v)) for v in values]
    for _, c in tasks:
        resolve(c)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            reps = list(ex.map(_sweep_point, tasks))
    else:
        reps = [_sweep_point(t) for t in tasks]
    keys = sorted({k for rep in reps for k in rep["values"]})
    if out_dir:
        rows = [[v] + [rep["values"].get(k, math.nan) for k in keys] for v, rep in zip(values, reps)]
        rows = [[float(x) if isinstance(x, (int, float)) and not isinstance(x, bool) else x
                 for x in row] for row in rows]
        write_atomic(os.path.join(out_dir, "sweep.csv"), table_csv([name] + keys, rows))
    ok = all(rep["ok"] for rep in reps)
    return {"command": "sweep", "sweep": {"command": cmd, "parameter": name, "values": values},
            "points": reps, "ok": ok}


HANDLERS = {"bound": cmd_bound, "optimize": cmd_optimize, "detwork": cmd_detwork,
            "epsilon": cmd_epsilon, "curve": cmd_curve}


def _report(command, r, vals, prov, ok=True, extra=None):
    params = {"beta": r["beta"], "heat_capacity": r["C"], "gamma": r["gamma"]}
    for k in ("epsilon", "epsilon_prime", "e_star", "E_tot"):
        if r.get(k) is not None:
            params[k] = r[k]
    if r["gamma"] > 0 and r.get("epsilon") is not None:
        b = dw.make_budget(r["beta"], r["gamma"], r["epsilon"])
        params["e_star_resolved"] = b.e_star
        params["beta_window"] = list(b.beta_window)
    rep = {"command": command, "parameters": params, "values": vals, "provenance": prov,
           "ok": bool(ok)}
    if extra:
        rep.update(extra)
    return rep


def run(command, cfg, out_dir=None, svg=False, jobs=1, direction=None):
    if command == "sweep":
        return cmd_sweep(cfg, out_dir, svg, jobs)
    if command == "detwork":
        return cmd_detwork(cfg, out_dir, svg, direction)
    return HANDLERS[command](cfg, out_dir, svg)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="finbath", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out-dir", default=None, help="directory for CSV/SVG/report files")
    ap.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    ap.add_argument("--svg", action="store_true", help="also render curves as SVG")
    ap.add_argument("--direction", choices=("extract", "form"), default=None,
                    help="detwork direction (overrides the config)")
    a = ap.parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(a.config)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rep = run(a.command, cfg, a.out_dir, a.svg, max(1, a.jobs), a.direction)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 2
    except InternalError as exc:
        text = dumps({"command": a.command, "internal_error": str(exc), "ok": False})
        sys.stdout.write(text)
        return 3
    text = dumps(rep)
    sys.stdout.write(text)
    if a.out_dir:
        write_atomic(os.path.join(a.out_dir, "report.json"), text)
    print(f"wall-clock {time.perf_counter() - t0:.3f} s", file=sys.stderr)
    return 0 if rep["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
