"""Batch experiment driver.

Subcommands: run-sync, run-async, run-ct, exrec-scan, threshold-flow,
gadget-check, lifetime, solve-params, erosion-test, replay.  Every run writes
its CSV artifacts plus a manifest (<prefix>.manifest.json) whose config and
seed reproduce the CSV bodies byte for byte; `replay --manifest FILE` does
exactly that.  Exit codes: 0 success, 2 configuration error, 3 runtime
invariant violation, 4 check-suite failure.

CSV schemas (fixed headers):
  run-sync      step,singular_sites,data_ones
  run-async     events,accepts,rejects,min_counter,max_counter,faults
  run-ct        t,v                      (density samples)
                + summary.csv: key,value rows
  exrec-scan    p,eta,P_direct_bad,ci_lo,ci_hi,P_bad,ci_bad_lo,ci_bad_hi,
                n_exrecs,n_direct_bad,n_bad,eta_direct,eta_bad_rootR
                + fit: tolerance,slope,intercept,amplification_est,points_used
  threshold-flow level,eta_iter,eta_closed  + summary row with the threshold
  gadget-check  gadget,condition,passed,n_cases,first_failure
  lifetime      L,p,trial,lifetime,censored
  solve-params  name,ok checks + solution row
  erosion-test  trial,n_sites,norm,contained
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import ConfigurationError, InvariantViolation
from .lattice import new_lattice
from .manifest import RunManifest, parse_config, pool_map, write_csv
from .noise import NoiseParams
from .datalayer import (
    check_gadget_conditions,
    identity_gadget,
    naive_repetition_ec_gadget,
    prep_zero_gadget,
    repetition_code,
    repetition_ec_gadget,
    transversal_cnot_gadget,
    transversal_x_gadget,
)
from .renorm import estimate_level_noise, lifetime_experiment, renorm_flow, scan_params
from .schedule import FeasibilityConstraints, solve_params
from .schedulers import CTParams, run_async, run_ct, run_sync
from .structure import erosion_trials, singular_mask

GADGETS = {
    "rep3-ec": lambda: repetition_ec_gadget(),
    "rep3-ec-no-correction": lambda: repetition_ec_gadget(include_correction=False),
    "rep3-ec-naive": naive_repetition_ec_gadget,
    "identity": lambda: identity_gadget(repetition_code()),
    "transversal-x": lambda: transversal_x_gadget(repetition_code()),
    "transversal-cnot": lambda: transversal_cnot_gadget(repetition_code()),
    "prep-zero": lambda: prep_zero_gadget(repetition_code()),
}


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file; flags win over it")
    sub.add_argument("--outdir", default=".", help="directory for CSVs and the manifest")
    sub.add_argument("--prefix", default=None, help="output file prefix (default: subcommand)")
    sub.add_argument("--seed", type=int, default=None)
    for key in ("block-size", "refresh-steps", "code-steps", "sim-rounds",
                "structure-tolerance", "cluster-width"):
        sub.add_argument(f"--{key}", type=int, default=None, dest=key.replace("-", "_"))


def build_parser():
    ap = argparse.ArgumentParser(prog="toomqca", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sp = ap.add_subparsers(dest="cmd", required=True)

    s = sp.add_parser("run-sync", help="synchronous trajectory")
    _add_common(s)
    s.add_argument("--n", type=int, default=48)
    s.add_argument("--steps", type=int, default=96)
    s.add_argument("--p", type=float, default=0.0)
    s.add_argument("--rule", default="structure")
    s.add_argument("--stride", type=int, default=8)

    s = sp.add_parser("run-async", help="marching-soldier event trajectory")
    _add_common(s)
    s.add_argument("--n", type=int, default=32)
    s.add_argument("--events", type=int, default=100000)
    s.add_argument("--p", type=float, default=0.0)

    s = sp.add_parser("run-ct", help="continuous-time Poisson trajectory")
    _add_common(s)
    s.add_argument("--n", type=int, default=32)
    s.add_argument("--duration", type=float, default=100.0)
    s.add_argument("--p", type=float, default=0.0)
    s.add_argument("--sample-rate", type=float, default=2.0)

    s = sp.add_parser("exrec-scan", help="bad-exRec sparsity Monte Carlo")
    _add_common(s)
    s.add_argument("--tec", type=int, default=1, choices=(1, 2),
                   help="reduced structure tolerance for measurable statistics")
    s.add_argument("--p-grid", default=None, help="comma-separated rates")
    s.add_argument("--target-events", type=int, default=80)

    s = sp.add_parser("threshold-flow", help="strength recursion and closed form")
    _add_common(s)
    s.add_argument("--A", type=float, required=True)
    s.add_argument("--tec", type=int, default=1)
    s.add_argument("--eta0", type=float, required=True)
    s.add_argument("--k", type=int, default=5)

    s = sp.add_parser("gadget-check", help="fault-tolerance condition enumeration")
    _add_common(s)
    s.add_argument("--gadget", default="rep3-ec", choices=sorted(GADGETS))
    s.add_argument("--max-faults", type=int, default=None)

    s = sp.add_parser("lifetime", help="memory lifetime experiment")
    _add_common(s)
    s.add_argument("--L", default="16,32,64", help="comma-separated sizes")
    s.add_argument("--p", default="0.01", help="comma-separated rates")
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--cap", type=int, default=10000)

    s = sp.add_parser("solve-params", help="feasibility solver")
    _add_common(s)
    s.add_argument("--d-d", type=int, default=12)
    s.add_argument("--c-sim", type=float, default=1.0)
    s.add_argument("--c-prog", type=float, default=1.0)
    s.add_argument("--c-dim", type=float, default=1.0)
    s.add_argument("--refresh-min", type=int, default=18)

    s = sp.add_parser("erosion-test", help="triangle erosion containment sweep")
    _add_common(s)
    s.add_argument("--n", type=int, default=32)
    s.add_argument("--trials", type=int, default=1000)

    s = sp.add_parser("replay", help="re-run a recorded manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--outdir", default=".")
    return ap


def _resolve(args, strict=True):
    overrides = {
        k: getattr(args, k, None)
        for k in ("block_size", "refresh_steps", "code_steps", "sim_rounds",
                  "structure_tolerance", "cluster_width", "seed")
    }
    return parse_config(getattr(args, "config", None), overrides, strict=strict)


def _paths(args, *names):
    prefix = args.prefix or args.cmd
    os.makedirs(args.outdir, exist_ok=True)
    return [os.path.join(args.outdir, f"{prefix}.{name}.csv") for name in names]


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_run_sync(args):
    config, params = _resolve(args)
    seed = config["seed"]
    manifest = RunManifest.begin(args.cmd, args.argv, config, seed)
    lat = new_lattice(args.n, params)
    noise = NoiseParams(rate=args.p)
    traj = run_sync(lat, args.steps, noise, seed=manifest.derive_seed("sync"),
                    rule=args.rule, stride=args.stride)
    (out,) = _paths(args, "trajectory")
    rows = []
    for snap in traj.snapshots + [traj.lattice]:
        rows.append((snap.global_time, int(singular_mask(snap).sum()),
                     int(snap.data["bit"].sum()) if snap.data_rule == "bit" else 0))
    write_csv(out, ["step", "singular_sites", "data_ones"], rows)
    manifest.finish([out])
    manifest.write(os.path.join(args.outdir, f"{args.prefix or args.cmd}.manifest.json"))
    return 0


def cmd_run_async(args):
    config, params = _resolve(args)
    seed = config["seed"]
    manifest = RunManifest.begin(args.cmd, args.argv, config, seed)
    lat = new_lattice(args.n, params)
    noise = NoiseParams(rate=args.p, layers=frozenset({"structure"}))
    traj = run_async(lat, args.events, noise, seed=manifest.derive_seed("async"))
    (out,) = _paths(args, "summary")
    write_csv(
        out,
        ["events", "accepts", "rejects", "min_counter", "max_counter", "faults"],
        [(args.events, traj.accepts, traj.rejects, int(lat.counter.min()),
          int(lat.counter.max()), len(traj.fault_path.events))],
    )
    log_path = os.path.join(args.outdir, f"{args.prefix or args.cmd}.events.txt")
    with open(log_path, "w") as fh:
        fh.write(traj.event_log_text())
    manifest.finish([out, log_path])
    manifest.write(os.path.join(args.outdir, f"{args.prefix or args.cmd}.manifest.json"))
    return 0


def cmd_run_ct(args):
    config, params = _resolve(args)
    seed = config["seed"]
    manifest = RunManifest.begin(args.cmd, args.argv, config, seed)
    lat = new_lattice(args.n, params)
    ct = CTParams(noise_rate=args.p, duration=args.duration, sample_rate=args.sample_rate)
    traj = run_ct(lat, ct, seed=manifest.derive_seed("ct"))
    samples_path, summary_path = _paths(args, "samples", "summary")
    write_csv(samples_path, ["t", "v"], [(t, v) for (t, v) in traj.samples])
    from .schedulers import effective_fault_rate

    write_csv(
        summary_path,
        ["key", "value"],
        [
            ("events", len(traj.ev_time)),
            ("accepts", traj.accepts),
            ("rejects", traj.rejects),
            ("noise_events", traj.noise_events),
            ("effective_fault_rate", effective_fault_rate(traj)),
        ],
    )
    manifest.finish([samples_path, summary_path])
    manifest.write(os.path.join(args.outdir, f"{args.prefix or args.cmd}.manifest.json"))
    return 0


def cmd_exrec_scan(args):
    # reduced tolerance on purpose; geometry comes from scan_params
    config, _ = _resolve(args, strict=False)
    seed = config["seed"]
    manifest = RunManifest.begin(args.cmd, args.argv, config, seed)
    params = scan_params(args.tec)
    if args.p_grid:
        grid = _floats(args.p_grid)
    else:
        grid = list(np.geomspace(1e-3 if args.tec == 1 else 2e-3, 1e-2, 4 if args.tec == 1 else 3))
    res = estimate_level_noise(
        params, grid, seed=manifest.derive_seed("scan"), target_events=args.target_events
    )
    rows_path, fit_path = _paths(args, "rows", "fit")
    rows = []
    for r in res.rows:
        lo, hi = r.ci_direct()
        blo, bhi = r.ci_bad()
        rows.append(
            (r.p, r.eta, r.p_direct_bad, lo, hi, r.p_bad, blo, bhi,
             r.n_exrecs, r.n_direct_bad, r.n_bad, r.eta_direct(),
             r.eta_bad_root_r(params.influence_size))
        )
    write_csv(
        rows_path,
        ["p", "eta", "P_direct_bad", "ci_lo", "ci_hi", "P_bad", "ci_bad_lo",
         "ci_bad_hi", "n_exrecs", "n_direct_bad", "n_bad", "eta_direct",
         "eta_bad_rootR"],
        rows,
    )
    write_csv(
        fit_path,
        ["tolerance", "slope", "intercept", "amplification_est", "points_used"],
        [(res.tolerance, res.slope if res.slope is not None else "",
          res.intercept if res.intercept is not None else "",
          res.amplification_est if res.amplification_est is not None else "",
          res.points_used)],
    )
    manifest.finish([rows_path, fit_path])
    manifest.write(os.path.join(args.outdir, f"{args.prefix or args.cmd}.manifest.json"))
    return 0


def cmd_threshold_flow(args):
    config, _ = _resolve(args)
    manifest = RunManifest.begin(args.cmd, args.argv, config, config["seed"])
    flow = renorm_flow(args.eta0, args.A, args.tec, args.k)
    levels_path, summary_path = _paths(args, "levels", "summary")
    write_csv(
        levels_path,
        ["level", "eta_iter", "eta_closed"],
        [(k, flow.eta_per_level[k], flow.closed_form[k]) for k in range(args.k + 1)],
    )
    write_csv(
        summary_path,
        ["key", "value"],
        [("eta_th", flow.threshold), ("max_rel_err", flow.max_rel_err),
         ("suppressed", flow.suppressed)],
    )
    manifest.finish([levels_path, summary_path])
    manifest.write(os.path.join(args.outdir, f"{args.prefix or args.cmd}.manifest.json"))
    return 0


def cmd_gadget_check(args):
    config, _ = _resolve(args)
    manifest = RunManifest.begin(args.cmd, args.argv, config, config["seed"])
    gadget = GADGETS[args.gadget]()
    rep = check_gadget_conditions(gadget, repetition_code(), max_faults=args.max_faults)
    (out,) = _paths(args, "report")
    first = rep.failures[0] if rep.failures else ("", "")
    write_csv(
        out,
        ["gadget", "condition", "passed", "n_cases", "first_failure"],
        [(rep.gadget, first[0] or "all", rep.passed, rep.n_cases,
          first[1].replace(",", ";"))],
    )
    manifest.finish([out])
    manifest.write(os.path.join(args.outdir, f"{args.prefix or args.cmd}.manifest.json"))
    print(f"{rep.gadget}: {'pass' if rep.passed else 'FAIL'} over {rep.n_cases} cases")
    return 0 if rep.passed else 4


def cmd_lifetime(args):
    config, params = _resolve(args)
    seed = config["seed"]
    manifest = RunManifest.begin(args.cmd, args.argv, config, seed)
    sizes = _ints(args.L)
    rates = _floats(args.p)

    rows, summary = lifetime_experiment(
        sizes, rates, trials=args.trials, cap=args.cap,
        seed=manifest.derive_seed("lifetime"), params=params
    )
    rows_path, medians_path = _paths(args, "rows", "medians")
    write_csv(
        rows_path,
        ["L", "p", "trial", "lifetime", "censored"],
        [(r.size, r.p, r.trial, r.lifetime, r.censored) for r in rows],
    )
    write_csv(
        medians_path,
        ["L", "p", "median", "median_censored", "n_censored", "ci_lo", "ci_hi",
         "level_capacity"],
        [(s["size"], s["p"], s["median"], s["median_censored"], s["n_censored"],
          s["ci"][0], s["ci"][1], s["level_capacity"]) for s in summary],
    )
    manifest.finish([rows_path, medians_path])
    manifest.write(os.path.join(args.outdir, f"{args.prefix or args.cmd}.manifest.json"))
    return 0


def cmd_solve_params(args):
    config, _ = _resolve(args)
    manifest = RunManifest.begin(args.cmd, args.argv, config, config["seed"])
    cons = FeasibilityConstraints(
        data_dim=args.d_d, c_sim=args.c_sim, c_prog=args.c_prog, c_dim=args.c_dim
    )
    rep = solve_params(cons, refresh_min=args.refresh_min, code_steps=args.code_steps or 6)
    sol_path, checks_path = _paths(args, "solution", "checks")
    write_csv(
        sol_path,
        ["feasible", "block_size", "cycle_steps", "refresh_steps", "sim_rounds",
         "cell_dim", "searched_to"],
        [(rep.feasible, rep.block_size or "", rep.cycle_steps or "",
          rep.refresh_steps or "", rep.sim_rounds or "", rep.cell_dim or "",
          rep.searched_to)],
    )
    write_csv(checks_path, ["inequality", "ok"],
              [(name.replace(",", ";"), ok) for name, ok in rep.checks])
    manifest.finish([sol_path, checks_path])
    manifest.write(os.path.join(args.outdir, f"{args.prefix or args.cmd}.manifest.json"))
    return 0 if rep.feasible else 4


def cmd_erosion_test(args):
    config, _ = _resolve(args)
    manifest = RunManifest.begin(args.cmd, args.argv, config, config["seed"])
    passes, rows = erosion_trials(args.n, args.trials, seed=manifest.derive_seed("erosion"))
    (out,) = _paths(args, "trials")
    write_csv(out, ["trial", "n_sites", "norm", "contained"], rows)
    manifest.finish([out])
    manifest.write(os.path.join(args.outdir, f"{args.prefix or args.cmd}.manifest.json"))
    print(f"erosion containment: {passes}/{args.trials}")
    return 0 if passes == args.trials else 4


def cmd_replay(args):
    man = RunManifest.load(args.manifest)
    argv = [a for a in man.argv]
    # redirect outputs, keep everything else as recorded
    if "--outdir" in argv:
        argv[argv.index("--outdir") + 1] = args.outdir
    else:
        argv += ["--outdir", args.outdir]
    return dispatch(argv)


_HANDLERS = {
    "run-sync": cmd_run_sync,
    "run-async": cmd_run_async,
    "run-ct": cmd_run_ct,
    "exrec-scan": cmd_exrec_scan,
    "threshold-flow": cmd_threshold_flow,
    "gadget-check": cmd_gadget_check,
    "lifetime": cmd_lifetime,
    "solve-params": cmd_solve_params,
    "erosion-test": cmd_erosion_test,
    "replay": cmd_replay,
}


def dispatch(argv) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    args.argv = list(argv)
    try:
        return _HANDLERS[args.cmd](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(dispatch(args.argv))


if __name__ == "__main__":
    main()
