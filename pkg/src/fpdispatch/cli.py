"""Command-line interface.

Subcommands: `solve` (dispatch a case, write schedule/trace/summary),
`compare` (proposed model vs restricted dispatch variants), `validate`
(case documents or solved schedules), `oracle` (brute-force grid search
on tiny cases), and `export` (re-emit a stored solution as CSV or JSON).

Exit codes: 0 success, 1 infeasible, 2 input error, 3 numerical failure.
Outputs are byte-deterministic for identical inputs: floats are written
with repr, rows in fixed order, and no timestamps. `--seed` is accepted
for interface stability but unused (the solver is deterministic).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import baseline, engine, netmodel

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fpdispatch",
        description="Multi-period fuel-efficiency dispatch via fractional programming",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--case", required=True, help="case document path")
        p.add_argument("--tol", type=float, default=1e-6, help="outer tolerance")
        p.add_argument("--max-iter", type=int, default=500, help="outer iteration cap")
        p.add_argument("--alpha", type=float, default=None,
                       help="override the case's fuel energy density (MWh/L)")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="reserved (unused)")

    ps = sub.add_parser("solve", help="solve a case and write the schedule")
    common(ps, out_default="out")

    pc = sub.add_parser("compare", help="compare dispatch model variants")
    common(pc, out_default="out")
    pc.add_argument("--variants", default="A,B,C",
                    help="comma-separated subset of A,B,C")

    pv = sub.add_parser("validate", help="validate a case or a solved schedule")
    pv.add_argument("--case", required=True, help="case document path")
    pv.add_argument("--solution", default=None,
                    help="schedule.csv to re-check against the case")

    po = sub.add_parser("oracle", help="brute-force dispatch on a tiny case")
    po.add_argument("--case", required=True)
    po.add_argument("--step", type=float, required=True, help="MW grid resolution")
    po.add_argument("--out", default=None, help="optional output directory")
    po.add_argument("--alpha", type=float, default=None)

    pe = sub.add_parser("export", help="re-emit a stored solution")
    pe.add_argument("--solution", required=True, help="solution.json path")
    pe.add_argument("--format", required=True, choices=("csv", "json"))
    pe.add_argument("--out", default=None, help="output file (default stdout)")
    return ap


def _load(path: str, alpha_override):
    case = netmodel.load_case(path)
    if alpha_override is not None:
        case = dataclasses.replace(case, alpha_mwh_per_liter=float(alpha_override))
    problems = netmodel.validate_case(case)
    if problems:
        raise netmodel.CaseParseError(
            "case failed validation:\n  " + "\n  ".join(problems)
        )
    return case


def _r(x) -> str:
    return repr(float(x))


def _schedule_rows(sol: engine.DispatchSolution):
    rows = ["t,unit_id,kind,p_mw,q_mvar,soc"]
    T = sol.p_mw.shape[0]
    for t in range(T):
        for i, gid in enumerate(sol.gen_ids):
            rows.append(
                f"{t},{gid},gen,{_r(sol.p_mw[t, i])},{_r(sol.q_mvar[t, i])},"
            )
        for j, sid in enumerate(sol.ess_ids):
            rows.append(
                f"{t},{sid},ess,{_r(sol.p_ess_mw[t, j])},,{_r(sol.soc[t, j])}"
            )
    return "\n".join(rows) + "\n"


def _trace_rows(sol: engine.DispatchSolution) -> str:
    rows = ["iter,objective,surrogate,equiv_gap,cone_gap,cut_max"]
    for k in range(len(sol.objective_trace)):
        rows.append(
            f"{k + 1},{_r(sol.objective_trace[k])},{_r(sol.surrogate_trace[k])},"
            f"{_r(sol.equiv_gap_trace[k])},{_r(sol.cone_gap_trace[k])},"
            f"{_r(sol.cut_max_trace[k])}"
        )
    return "\n".join(rows) + "\n"


def _summary_text(sol: engine.DispatchSolution) -> str:
    return (
        f"status = {sol.status}\n"
        f"fuel_liters = {_r(sol.fuel_liters)}\n"
        f"outer_iterations = {sol.outer_iterations}\n"
        f"max_cone_gap = {_r(sol.max_cone_gap)}\n"
        f"equivalence_gap = {_r(sol.equivalence_gap)}\n"
    )


def _solution_dict(sol: engine.DispatchSolution) -> dict:
    arr = lambda a: np.asarray(a).tolist()
    return {
        "variant": sol.variant,
        "status": sol.status,
        "fuel_liters": sol.fuel_liters,
        "outer_iterations": sol.outer_iterations,
        "inner_iterations": sol.inner_iterations,
        "equivalence_gap": sol.equivalence_gap,
        "max_cone_gap": sol.max_cone_gap,
        "max_cone_violation": sol.max_cone_violation,
        "angle_error": sol.angle_error,
        "gen_ids": list(sol.gen_ids),
        "ess_ids": list(sol.ess_ids),
        "p_mw": arr(sol.p_mw),
        "q_mvar": arr(sol.q_mvar),
        "p_ess_mw": arr(sol.p_ess_mw),
        "soc": arr(sol.soc),
        "v": arr(sol.v),
        "theta": arr(sol.theta),
        "trace": {
            "objective": sol.objective_trace,
            "surrogate": sol.surrogate_trace,
            "equiv_gap": sol.equiv_gap_trace,
            "cone_gap": sol.cone_gap_trace,
            "cut_max": sol.cut_max_trace,
        },
    }


def _write(out_dir: str, name: str, text: str, artifacts: list):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    artifacts.append(name)


def _manifest(out_dir, command, case_path, overrides, exit_status, artifacts):
    doc = {
        "command": command,
        "case": case_path,
        "overrides": overrides,
        "out_dir": out_dir,
        "exit_status": exit_status,
        "artifacts": artifacts + ["manifest.json"],
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _overrides(args) -> dict:
    out = {"tol": args.tol, "max_iter": args.max_iter}
    if args.alpha is not None:
        out["alpha"] = args.alpha
    return out


def _cmd_solve(args) -> int:
    case = _load(args.case, args.alpha)
    config = engine.SolverConfig(outer_tol=args.tol, max_outer=args.max_iter)
    sol = engine.solve_dispatch(case, config)
    code = engine.EXIT_CODES[sol.status]
    artifacts: list[str] = []
    _write(args.out, "schedule.csv", _schedule_rows(sol), artifacts)
    _write(args.out, "trace.csv", _trace_rows(sol), artifacts)
    _write(args.out, "summary", _summary_text(sol), artifacts)
    _write(args.out, "solution.json",
           json.dumps(_solution_dict(sol), indent=2) + "\n", artifacts)
    _manifest(args.out, "solve", args.case, _overrides(args), code, artifacts)
    print(f"status: {sol.status}  fuel: {sol.fuel_liters:.6g} L  "
          f"iterations: {sol.outer_iterations}")
    if sol.message:
        print(sol.message)
    return code


def _cmd_compare(args) -> int:
    case = _load(args.case, args.alpha)
    variants = tuple(v for v in args.variants.split(",") if v)
    for v in variants:
        if v not in ("A", "B", "C"):
            raise netmodel.CaseParseError(f"unknown variant {v!r}")
    config = engine.SolverConfig(outer_tol=args.tol, max_outer=args.max_iter)
    results = engine.compare_models(case, variants, config)
    artifacts: list[str] = []
    header = "t," + ",".join(f"cum_fuel_{r.name}" for r in results)
    rows = [header]
    for t in range(case.horizon):
        cells = [str(t)]
        for r in results:
            cells.append(_r(r.cumulative_fuel[t]) if np.isfinite(r.cumulative_fuel[t]) else "")
        rows.append(",".join(cells))
    _write(args.out, "cumulative_fuel.csv", "\n".join(rows) + "\n", artifacts)
    lines = ["model,fuel_liters,status"]
    for r in results:
        fuel = _r(r.fuel_liters) if np.isfinite(r.fuel_liters) else ""
        lines.append(f"{r.name},{fuel},{r.status}")
    _write(args.out, "compare_summary.csv", "\n".join(lines) + "\n", artifacts)
    code = engine.EXIT_CODES[results[0].status]
    _manifest(args.out, "compare", args.case, _overrides(args), code, artifacts)
    for r in results:
        fuel = f"{r.fuel_liters:.6g} L" if np.isfinite(r.fuel_liters) else "n/a"
        print(f"{r.name}: {r.status}  fuel: {fuel}")
    return code


def _cmd_validate(args) -> int:
    try:
        case = netmodel.load_case(args.case)
    except (netmodel.CaseParseError, netmodel.CaseReferenceError, OSError) as exc:
        print(f"invalid case: {exc}", file=sys.stderr)
        return 2
    problems = netmodel.validate_case(case)
    if problems:
        for msg in problems:
            print(f"violation: {msg}")
        return 2
    if args.solution is None:
        print("case valid")
        return 0
    issues = _check_schedule(case, args.solution)
    if issues:
        for msg in issues:
            print(f"violation: {msg}")
        return 2
    print("case and schedule valid")
    return 0


def _check_schedule(case, path, tol=1e-6):
    """Re-validate a schedule.csv against generator/storage limits."""
    gens = {g.id: g for g in case.generators}
    stores = {s.id: s for s in case.storage}
    p = {}
    pb = {}
    soc = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,unit_id,kind,p_mw,q_mvar,soc":
            return [f"unexpected schedule header: {header}"]
        for ln in fh:
            ln = ln.strip()
            if not ln:
                continue
            t_s, uid, kind, p_s, q_s, soc_s = ln.split(",")
            t = int(t_s)
            if kind == "gen":
                p[(t, uid)] = (float(p_s), float(q_s))
            else:
                pb[(t, uid)] = float(p_s)
                soc[(t, uid)] = float(soc_s)
    issues = []
    for (t, uid), (pv, qv) in sorted(p.items()):
        g = gens.get(uid)
        if g is None:
            issues.append(f"unknown generator {uid}")
            continue
        if not (g.p_min - tol <= pv <= g.p_max + tol):
            issues.append(f"{uid} t={t}: p={pv} outside [{g.p_min}, {g.p_max}]")
        if not (g.q_min - tol <= qv <= g.q_max + tol):
            issues.append(f"{uid} t={t}: q={qv} outside [{g.q_min}, {g.q_max}]")
        if t > 0 and (t - 1, uid) in p:
            d = pv - p[(t - 1, uid)][0]
            if d > g.ramp_up + tol or d < -g.ramp_down - tol:
                issues.append(f"{uid} t={t}: ramp {d:+.6g} MW outside limits")
    for sid, st in stores.items():
        flows = [pb.get((t, sid)) for t in range(case.horizon)]
        if any(f is None for f in flows):
            issues.append(f"storage {sid}: missing timesteps in schedule")
            continue
        if abs(sum(flows)) > tol:
            issues.append(f"storage {sid}: net flow {sum(flows):.3g} MW not zero")
        e = st.e0_mwh
        for t, f in enumerate(flows):
            if not (-st.max_charge_mw - tol <= f <= st.max_discharge_mw + tol):
                issues.append(f"storage {sid} t={t}: flow {f} outside rate limits")
            e -= st.eta * f * case.dt_hours
            frac = e / st.capacity_mwh
            if not (st.soc_min - tol <= frac <= st.soc_max + tol):
                issues.append(f"storage {sid} t={t}: SOC {frac:.6g} outside window")
            got = soc[(t, sid)]
            if abs(got - frac) > 1e-4:
                issues.append(
                    f"storage {sid} t={t}: reported SOC {got} != recomputed {frac:.6g}"
                )
    return issues


def _cmd_oracle(args) -> int:
    case = _load(args.case, args.alpha)
    try:
        res = baseline.brute_force_dispatch(case, args.step)
    except baseline.InfeasibleDispatchError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    print(f"oracle fuel: {res.fuel_liters!r} L")
    if args.out:
        artifacts: list[str] = []
        rows = ["t,unit_id,kind,p_mw"]
        for t in range(case.horizon):
            for i, g in enumerate(case.generators):
                rows.append(f"{t},{g.id},gen,{_r(res.p_mw[t, i])}")
            for j, s in enumerate(case.storage):
                rows.append(f"{t},{s.id},ess,{_r(res.p_ess_mw[t, j])}")
        _write(args.out, "oracle_schedule.csv", "\n".join(rows) + "\n", artifacts)
        _write(args.out, "oracle_summary",
               f"fuel_liters = {_r(res.fuel_liters)}\nstep_mw = {_r(args.step)}\n",
               artifacts)
        _manifest(args.out, "oracle", args.case, {"step": args.step}, 0, artifacts)
    return 0


def _cmd_export(args) -> int:
    with open(args.solution) as fh:
        doc = json.load(fh)
    if args.format == "json":
        text = json.dumps(doc, indent=2) + "\n"
    else:
        rows = ["t,unit_id,kind,p_mw,q_mvar,soc"]
        T = len(doc["p_mw"])
        for t in range(T):
            for i, gid in enumerate(doc["gen_ids"]):
                rows.append(
                    f"{t},{gid},gen,{_r(doc['p_mw'][t][i])},"
                    f"{_r(doc['q_mvar'][t][i])},"
                )
            for j, sid in enumerate(doc["ess_ids"]):
                rows.append(
                    f"{t},{sid},ess,{_r(doc['p_ess_mw'][t][j])},,"
                    f"{_r(doc['soc'][t][j])}"
                )
        text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "compare": _cmd_compare,
    "validate": _cmd_validate,
    "oracle": _cmd_oracle,
    "export": _cmd_export,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (netmodel.CaseParseError, netmodel.CaseReferenceError,
            baseline.TinyCaseError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
