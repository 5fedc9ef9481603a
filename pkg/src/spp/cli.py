"""Batch command line front end.

Subcommands::

    spp plan <scenario.json> --out DIR
    spp simulate DIR --seed N --model zero|random|adversarial
    spp full <scenario.json> --out DIR

Exit codes: 0 success, 2 infeasible plan, 3 separation violation, 4 input
error.  ``SPP_THREADS`` caps the numeric thread pools used by the solver.

Heavy imports happen after thread limits are applied, so ``SPP_THREADS``
must be honored before anything numeric loads.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SEPARATION = 3
EXIT_INPUT = 4


def _apply_thread_cap():
    cap = os.environ.get("SPP_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _build_parser():
    p = argparse.ArgumentParser(prog="spp", description="Sequential multi-vehicle path planning via reachability.")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("plan", help="compute all vehicle plans")
    pp.add_argument("scenario", help="scenario JSON file (or bundled name)")
    pp.add_argument("--out", required=True, help="output directory")

    ps = sub.add_parser("simulate", help="simulate a previously planned directory")
    ps.add_argument("plandir", help="directory produced by `spp plan`")
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--model", choices=("zero", "random", "adversarial"), default=None)

    pf = sub.add_parser("full", help="plan, simulate, check, and render reports")
    pf.add_argument("scenario", help="scenario JSON file (or bundled name)")
    pf.add_argument("--out", required=True, help="output directory")
    pf.add_argument("--seed", type=int, default=None)
    pf.add_argument("--model", choices=("zero", "random", "adversarial"), default=None)
    return p


def _resolve_scenario_path(arg):
    from spp.scenario import BUNDLED, bundled_scenario_path

    if os.path.exists(arg):
        return arg
    if arg in BUNDLED:
        return str(bundled_scenario_path(arg))
    raise FileNotFoundError(f"scenario file not found: {arg}")


def _do_plan(scn, outdir, audit=None):
    from spp import io as IO
    from spp.planner import plan_all

    os.makedirs(outdir, exist_ok=True)
    audit = audit if audit is not None else {}
    plans = plan_all(
        scn.grid, scn.vehicles, scn.static_field(), scn.config,
        horizon=scn.horizon, save_dt=scn.save_dt, cfl=scn.cfl,
        kernel_tol=scn.kernel_tol, audit=audit, kernel_cache={})
    for p in plans:
        IO.save_time_fields(p.value.value, os.path.join(outdir, f"value_{p.vehicle.id}.hjt"))
        IO.save_time_fields(p.induced_obstacles, os.path.join(outdir, f"induced_{p.vehicle.id}.hjt"))
        if p.nominal_trajectory is not None:
            IO.save_trajectory(p.nominal_trajectory, os.path.join(outdir, f"nominal_{p.vehicle.id}.traj"))
    if plans and plans[0].kernel is not None:
        IO.save_field(plans[0].kernel, os.path.join(outdir, "kernel.hjf"))
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        for line in IO.plan_summary_lines(plans):
            fh.write(line + "\n")
    pairs = [("scenario", scn.name), ("method", scn.config.method),
             ("seed", scn.seed), ("save_dt", scn.save_dt), ("sim_dt", scn.sim_dt),
             ("solves", audit.get("solves", 0))]
    for p in plans:
        if p.shrunk_target_radius is not None:
            pairs.append((f"shrunk_radius_{p.vehicle.id}", repr(p.shrunk_target_radius)))
    IO.write_kv(os.path.join(outdir, "manifest.txt"), pairs)
    return plans


def _load_plans(scn, plandir):
    from spp import io as IO
    from spp.dynamics import HamiltonianMode
    from spp.planner import PlanResult
    from spp import solver as S

    summary = {}
    with open(os.path.join(plandir, "summary.txt")) as fh:
        for line in fh:
            kv = dict(part.split("=", 1) for part in line.split())
            summary[int(kv["vehicle"])] = kv
    manifest = IO.read_kv(os.path.join(plandir, "manifest.txt"))
    kernel = None
    kpath = os.path.join(plandir, "kernel.hjf")
    if os.path.exists(kpath):
        kernel = IO.load_field_file(kpath)
    plans = []
    for spec in scn.vehicles:
        kv = summary[spec.id]
        value_tf = IO.load_time_fields_file(os.path.join(plandir, f"value_{spec.id}.hjt"))
        induced = IO.load_time_fields_file(os.path.join(plandir, f"induced_{spec.id}.hjt"))
        vf = S.ValueFunction(value_tf, HamiltonianMode.BASIC_REACH, 0.0, 0)
        npath = os.path.join(plandir, f"nominal_{spec.id}.traj")
        nominal = IO.load_trajectory_file(npath) if os.path.exists(npath) else None
        shrunk = manifest.get(f"shrunk_radius_{spec.id}")
        plans.append(PlanResult(
            vehicle=spec, method=kv["method"], ldt=float(kv["ldt"]), value=vf,
            induced_obstacles=induced, nominal_trajectory=nominal, kernel=kernel,
            shrunk_target_radius=float(shrunk) if shrunk else None))
    return plans


def _do_simulate(scn, plans, outdir, model=None):
    from spp import io as IO
    from spp.sim import check_arrival, check_separation, simulate

    model = model or scn.disturbance
    trajectories = {}
    report = []
    for p in plans:
        traj = simulate(p, model, scn.sim_dt, scn.config, grid=scn.grid)
        trajectories[p.vehicle.id] = traj
        IO.save_trajectory(traj, os.path.join(outdir, f"traj_{p.vehicle.id}.traj"))
        arrived, t_in = check_arrival(traj, p.vehicle)
        report.append(f"vehicle={p.vehicle.id} arrived={int(arrived)} "
                      f"arrival_time={'nan' if t_in is None else f'{t_in:.4f}'} "
                      f"sta={p.vehicle.sta:.4f}")
    violations = check_separation(list(trajectories.values()), scn.config.collision_radius)
    report.append(f"violations={len(violations)}")
    for v in violations[:20]:
        report.append(f"violation t={v[0]:.4f} pair={v[1]},{v[2]} dist={v[3]:.4f}")
    with open(os.path.join(outdir, "simulation.txt"), "w") as fh:
        fh.write("\n".join(report) + "\n")
    IO.write_kv(os.path.join(outdir, "run.txt"),
                [("seed", model.seed), ("model", model.kind), ("dt", scn.sim_dt)])
    return trajectories, violations


def _do_intruder(scn, plans, outdir, audit):
    from spp import io as IO
    from spp.intruder import compute_avoid_set, replan_after_intruder, run_with_intruder
    from spp.sim import check_arrival, check_separation, simulate

    intr = scn.intruder
    avoid = compute_avoid_set(scn.vehicles[0].params, intr.params,
                              scn.config.collision_radius, intr.t_IAT, audit=audit)
    trajs, affected, states_at_tea, events = run_with_intruder(
        plans, intr, scn.config, avoid, model=scn.disturbance,
        dt=scn.sim_dt, grid=scn.grid)
    merged, replan_events = replan_after_intruder(
        affected, states_at_tea, plans, scn.config, scn.grid,
        scn.static_field(), t_ea=intr.t_ea, horizon=scn.horizon,
        save_dt=scn.save_dt, audit=audit, kernel_cache={})
    events.extend(replan_events)
    report = [f"affected={','.join(str(a) for a in affected) if affected else 'none'}"]
    new_trajs = dict(trajs)
    for p in merged:
        if p.vehicle.id in affected:
            traj = simulate(p, scn.disturbance, scn.sim_dt, scn.config, grid=scn.grid)
            new_trajs[p.vehicle.id] = traj
            IO.save_trajectory(traj, os.path.join(outdir, f"replanned_{p.vehicle.id}.traj"))
            arrived, t_in = check_arrival(traj, p.vehicle)
            report.append(f"vehicle={p.vehicle.id} replanned=1 arrived={int(arrived)} "
                          f"arrival_time={'nan' if t_in is None else f'{t_in:.4f}'}")
    violations = check_separation(list(new_trajs.values()), scn.config.collision_radius)
    report.append(f"violations={len(violations)}")
    report.append(f"solves={audit.get('solves', 0)}")
    with open(os.path.join(outdir, "intruder.txt"), "w") as fh:
        fh.write("\n".join(report) + "\n")
    with open(os.path.join(outdir, "events.txt"), "w") as fh:
        fh.write("\n".join(events) + ("\n" if events else ""))
    return new_trajs, violations


def _render_reports(scn, plans, trajectories, outdir):
    from spp import report as R

    R.render_overview(os.path.join(outdir, "overview.svg"), scn, plans, trajectories)
    for p in plans:
        R.render_brs_contours(os.path.join(outdir, f"brs_{p.vehicle.id}.svg"), scn, p)
    if plans and plans[0].kernel is not None:
        R.render_kernel(os.path.join(outdir, "kernel.svg"), plans[0].kernel)


def _fail_record(outdir, code, message):
    try:
        os.makedirs(outdir, exist_ok=True)
        with open(os.path.join(outdir, "failure.json"), "w") as fh:
            json.dump({"exit_code": code, "error": message}, fh, indent=2)
            fh.write("\n")
    except OSError:
        pass


def main(argv=None):
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)

    from spp.intruder import AvoidanceSeparationError, IntruderError
    from spp.planner import InfeasibleError, PlanningError
    from spp.scenario import ScenarioError, load_scenario
    from spp.sim import DisturbanceModel

    outdir = getattr(args, "out", None) or getattr(args, "plandir", None)
    try:
        if args.command == "plan":
            path = _resolve_scenario_path(args.scenario)
            scn = load_scenario(path)
            os.makedirs(args.out, exist_ok=True)
            shutil.copyfile(path, os.path.join(args.out, "scenario.json"))
            _do_plan(scn, args.out)
            print(f"planned {len(scn.vehicles)} vehicles -> {args.out}")
            return EXIT_OK

        if args.command == "simulate":
            scn_path = os.path.join(args.plandir, "scenario.json")
            if not os.path.isdir(args.plandir) or not os.path.exists(scn_path):
                raise FileNotFoundError(f"not a plan directory: {args.plandir}")
            scn = load_scenario(scn_path)
            model = scn.disturbance
            if args.model is not None or args.seed is not None:
                model = DisturbanceModel(args.model or model.kind,
                                         model.seed if args.seed is None else args.seed)
            plans = _load_plans(scn, args.plandir)
            _, violations = _do_simulate(scn, plans, args.plandir, model)
            if violations:
                _fail_record(args.plandir, EXIT_SEPARATION,
                             f"{len(violations)} separation violations")
                print(f"separation violations: {len(violations)}", file=sys.stderr)
                return EXIT_SEPARATION
            print(f"simulated {len(plans)} vehicles -> {args.plandir}")
            return EXIT_OK

        # full
        path = _resolve_scenario_path(args.scenario)
        scn = load_scenario(path)
        os.makedirs(args.out, exist_ok=True)
        shutil.copyfile(path, os.path.join(args.out, "scenario.json"))
        model = scn.disturbance
        if args.model is not None or args.seed is not None:
            model = DisturbanceModel(args.model or model.kind,
                                     model.seed if args.seed is None else args.seed)
        audit = {}
        plans = _do_plan(scn, args.out, audit)
        if scn.intruder is not None:
            trajectories, violations = _do_intruder(scn, plans, args.out, audit)
        else:
            trajectories, violations = _do_simulate(scn, plans, args.out, model)
        _render_reports(scn, plans, trajectories, args.out)
        if violations:
            _fail_record(args.out, EXIT_SEPARATION, f"{len(violations)} separation violations")
            print(f"separation violations: {len(violations)}", file=sys.stderr)
            return EXIT_SEPARATION
        print(f"full run complete -> {args.out}")
        return EXIT_OK

    except InfeasibleError as e:
        _fail_record(outdir, EXIT_INFEASIBLE, str(e))
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except AvoidanceSeparationError as e:
        _fail_record(outdir, EXIT_SEPARATION, str(e))
        print(f"separation violation during avoidance: {e}", file=sys.stderr)
        return EXIT_SEPARATION
    except (ScenarioError, IntruderError, PlanningError, FileNotFoundError,
            NotADirectoryError) as e:
        _fail_record(outdir, EXIT_INPUT, str(e))
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
