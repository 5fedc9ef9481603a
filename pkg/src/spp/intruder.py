"""Single-intruder handling: a pairwise avoid-set safety override during the
intruder's presence, plus re-planning of the affected vehicles afterwards.

Assumptions: at most one intruder is present, its dynamics are known, and it
stays for at most ``t_IAT``.  While the intruder is present, any vehicle whose
relative state drifts near the avoid set abandons its plan and plays the
avoidance control of the pairwise relative game; once the intruder leaves, the
vehicles that had to deviate are re-planned as lowest-priority vehicles from
wherever they ended up.
"""

from __future__ import annotations

import logging
import math
import dataclasses
from dataclasses import dataclass

import numpy as np

from spp import grid as G
from spp.dynamics import DubinsParams, HamiltonianMode, State3, flow, tracking_law
from spp.planner import InfeasibleError, VehicleSpec, plan_all
from spp import sim as Sim
from spp import solver as S

log = logging.getLogger(__name__)


class IntruderError(RuntimeError):
    pass


class AvoidanceSeparationError(IntruderError):
    """Vehicles lost separation among themselves while dodging the intruder."""

    def __init__(self, violations):
        super().__init__(f"separation lost during avoidance: {violations[:3]}")
        self.violations = violations


@dataclass(frozen=True)
class RelativeGameParams:
    """Player split of the pairwise game: the avoiding vehicle occupies the
    maximizing (tracker) slot, the intruder the minimizing (reference) slot."""

    tracker: DubinsParams
    planner: DubinsParams
    R_EB: float


@dataclass(frozen=True)
class IntruderSpec:
    """One intruder with known dynamics, present over [t_sa, t_ea]."""

    params: DubinsParams
    x0: State3
    t_sa: float
    t_ea: float
    t_IAT: float
    behavior: str = "scripted"            # scripted | adversarial
    segments: tuple = ()                  # scripted: ((duration, v, omega), ...)

    def __post_init__(self):
        if self.t_ea < self.t_sa:
            raise IntruderError("t_ea must not precede t_sa")
        if self.t_ea - self.t_sa > self.t_IAT + 1e-9:
            raise IntruderError("intruder duration exceeds t_IAT")
        if self.behavior not in ("scripted", "adversarial"):
            raise IntruderError(f"unknown intruder behavior {self.behavior!r}")


@dataclass(eq=False)
class AvoidSet:
    """Sublevel set of ``value``: relative states (intruder seen from the
    vehicle frame) from which the intruder can force a collision within the
    horizon despite best avoidance."""

    value: G.Field
    R_c: float
    horizon: float
    vehicle: DubinsParams
    intruder: DubinsParams


def relative_grid(vehicle, intruder, R_c, horizon, counts=(61, 61, 33)):
    """Grid sized from the relative-speed bound: nothing farther than
    R_c + (v_veh + v_int + 2 d_r) * horizon can matter."""
    reach = R_c + (vehicle.v_max + intruder.v_max + 2 * vehicle.d_r) * horizon
    ext = 1.15 * reach
    return G.make_grid((-ext, -ext, 0.0), (ext, ext, 2 * math.pi), counts, (False, False, True))


def compute_avoid_set(vehicle, intruder, R_c, horizon, grid=None,
                      cfl=S.DEFAULT_CFL, audit=None):
    """Backward reachable set of the collision disk over the relative Dubins
    dynamics, intruder forcing collision against best vehicle avoidance."""
    if horizon < 0:
        raise IntruderError("horizon must be nonnegative")
    g = grid if grid is not None else relative_grid(vehicle, intruder, R_c, max(horizon, 1e-3))
    dx = g.axis_coords(0)
    dy = g.axis_coords(1)
    target = G.Field(g, np.broadcast_to(np.sqrt(dx * dx + dy * dy) - R_c, g.shape).copy(),
                     is_sdf=True)
    if horizon == 0:
        return AvoidSet(target, R_c, 0.0, vehicle, intruder)
    pair = RelativeGameParams(tracker=vehicle, planner=intruder, R_EB=R_c)
    req = S.SolveRequest(g, target, HamiltonianMode.ERROR_BOUND, pair,
                         -horizon, 0.0, save_dt=horizon, direction="backward", cfl=cfl)
    vf = S.solve(req)
    if audit is not None:
        audit["solves"] = audit.get("solves", 0) + 1
    value = vf.value.fields[0]
    if not (value.values > 0.0).any():
        raise IntruderError("whole relative domain is unsafe for this horizon")
    return AvoidSet(value, R_c, horizon, vehicle, intruder)


def avoid_control(avoid, e):
    """Maximizing vehicle control of the relative game at relative state e."""
    lam = G.sample_gradient(avoid.value, e.as_array())
    pair = RelativeGameParams(avoid.vehicle, avoid.intruder, avoid.R_c)
    return tracking_law(lam, e, pair)


def _intruder_trajectory(spec: IntruderSpec, dt):
    """Integrate the scripted segment list over [t_sa, t_ea]."""
    state = spec.x0
    t = spec.t_sa
    times, states = [t], [state.as_array()]
    segs = list(spec.segments) or [(spec.t_ea - spec.t_sa, spec.params.v_max, 0.0)]
    for dur, v, om in segs:
        n = max(1, int(round(dur / dt)))
        h = dur / n
        for _ in range(n):
            if t >= spec.t_ea - 1e-12:
                break
            state = Sim._rk4(state, (v, om), (0.0, 0.0, 0.0), spec.params, h)
            t += h
            times.append(t)
            states.append(state.as_array())
    n = len(times)
    return Sim.Trajectory(np.array(times), np.array(states), np.zeros((n, 2)), np.zeros((n, 3)))


def run_with_intruder(plans, intruder: IntruderSpec, config, avoid: AvoidSet,
                      model=None, dt=0.01, grid=None, band=0.05):
    """Joint simulation of all plans through the intruder's stay.

    Returns (trajectories up to t_ea keyed by vehicle id, affected id list,
    states at t_ea keyed by id, event log lines).  A vehicle switches to the
    avoidance control while its relative state sits within ``band`` of the
    avoid set and the intruder is present; any switch marks it affected.
    """
    model = model or Sim.DisturbanceModel("zero")
    if intruder.behavior == "adversarial":
        intr_traj = None
        intr_state = intruder.x0
    else:
        intr_traj = _intruder_trajectory(intruder, dt)

    policies = {p.vehicle.id: Sim.make_policy(p, config) for p in plans}
    sources = {p.vehicle.id: Sim._DisturbanceSource(model, p.vehicle.params, p.vehicle.id)
               for p in plans}
    states = {p.vehicle.id: p.vehicle.x0 for p in plans}
    arrived = {p.vehicle.id: False for p in plans}
    overriding = {p.vehicle.id: False for p in plans}
    affected: list[int] = []
    events: list[str] = []
    rec = {p.vehicle.id: {"t": [], "x": [], "u": [], "d": []} for p in plans}

    t0 = min(min(p.ldt for p in plans), intruder.t_sa)
    t1 = max(max(p.vehicle.sta for p in plans), intruder.t_ea)
    n_steps = int(round((t1 - t0) / dt))
    t = t0
    for k in range(n_steps + 1):
        present = intruder.t_sa - 1e-12 <= t <= intruder.t_ea + 1e-12
        if present:
            if intr_traj is not None:
                intr_state = intr_traj.state_at(t)
        for p in plans:
            vid = p.vehicle.id
            if t < p.ldt - 1e-12 or arrived[vid]:
                continue
            s = states[vid]
            c = p.vehicle.target_center
            if math.hypot(s.px - c[0], s.py - c[1]) <= p.vehicle.target_radius and not (
                    present and overriding[vid]):
                arrived[vid] = True
                continue
            use_avoid = False
            if present:
                e = Sim.tracking_error(s, intr_state, avoid.value.grid)
                v_rel = G.sample(avoid.value, e.as_array())
                use_avoid = v_rel <= band
            if use_avoid != overriding[vid]:
                overriding[vid] = use_avoid
                events.append(f"t={t:.3f} vehicle={vid} event="
                              f"{'avoid_on' if use_avoid else 'avoid_off'}")
                if use_avoid and vid not in affected:
                    affected.append(vid)
            if use_avoid:
                u = avoid_control(avoid, e)
                lam = G.sample_gradient(avoid.value, e.as_array())
            else:
                u, lam = policies[vid](t, s)
            d = sources[vid].draw(lam)
            nxt = Sim._rk4(s, u, d, p.vehicle.params, dt)
            if grid is not None:
                nxt = Sim._clamp_to_domain(nxt, grid)
            r = rec[vid]
            r["t"].append(t)
            r["x"].append(s.as_array())
            r["u"].append(u)
            r["d"].append(d)
            states[vid] = nxt
        if intruder.behavior == "adversarial" and present:
            # intruder chases the nearest unarrived vehicle's relative game optimum
            live = [p for p in plans if not arrived[p.vehicle.id] and t >= p.ldt]
            if live:
                tgt = min(live, key=lambda p: math.hypot(states[p.vehicle.id].px - intr_state.px,
                                                         states[p.vehicle.id].py - intr_state.py))
                st = states[tgt.vehicle.id]
                bearing = math.atan2(st.py - intr_state.py, st.px - intr_state.px)
                err = Sim.wrap_angle(bearing - intr_state.theta)
                om = max(-intruder.params.omega_max,
                         min(intruder.params.omega_max, 4.0 * err))
                intr_state = Sim._rk4(intr_state, (intruder.params.v_max, om),
                                      (0.0, 0.0, 0.0), intruder.params, dt)
        t = t0 + (k + 1) * dt

    trajectories = {}
    for p in plans:
        r = rec[p.vehicle.id]
        if not r["t"]:
            continue
        ts = np.array(r["t"] + [r["t"][-1] + dt])
        xs = np.array(r["x"] + [states[p.vehicle.id].as_array()])
        us = np.array(r["u"] + [(0.0, 0.0)])
        ds = np.array(r["d"] + [(0.0, 0.0, 0.0)])
        trajectories[p.vehicle.id] = Sim.Trajectory(ts, xs, us, ds)

    # hard safety audits over the intruder's stay
    for vid in affected:
        tr = trajectories[vid]
        msk = (tr.times >= intruder.t_sa) & (tr.times <= intruder.t_ea)
        for tt, st in zip(tr.times[msk], tr.states[msk]):
            if intr_traj is not None:
                ip = intr_traj.position_at(tt)
                dd = math.hypot(st[0] - ip[0], st[1] - ip[1])
                if dd <= avoid.R_c:
                    log.warning("vehicle %d within R_c of intruder at t=%.3f (d=%.4f)",
                                vid, tt, dd)
    viol = Sim.check_separation(list(trajectories.values()), config.collision_radius)
    viol = [v for v in viol if intruder.t_sa <= v[0] <= intruder.t_ea]
    if viol and affected:
        raise AvoidanceSeparationError(viol)

    states_at_tea = {vid: tr.state_at(intruder.t_ea) for vid, tr in trajectories.items()}
    for p in plans:
        if p.vehicle.id not in states_at_tea:
            states_at_tea[p.vehicle.id] = p.vehicle.x0
    return trajectories, affected, states_at_tea, events


def replan_after_intruder(affected, states_at_tea, plans, config, grid,
                          static_obstacles=None, *, t_ea, horizon=5.0,
                          save_dt=0.05, kernel_grid=None, audit=None,
                          kernel_cache=None):
    """Re-plan the affected vehicles as lowest-priority vehicles from their
    t_ea states; unaffected plans pass through untouched."""
    if not affected:
        return list(plans), []
    by_id = {p.vehicle.id: p for p in plans}
    unaffected = [p for p in plans if p.vehicle.id not in affected]
    max_pri = max((p.vehicle.priority for p in unaffected), default=0)
    new_specs = []
    for rank, vid in enumerate(affected):
        old = by_id[vid].vehicle
        new_specs.append(VehicleSpec(
            id=old.id, priority=max_pri + 1 + rank, params=old.params,
            x0=states_at_tea[vid], target_center=old.target_center,
            target_radius=old.target_radius, sta=t_ea + horizon))
    events = []
    new_plans = plan_all(
        grid, new_specs, static_obstacles, config, horizon=horizon,
        save_dt=save_dt, kernel_grid=kernel_grid, audit=audit,
        preset_induced=[p.induced_obstacles for p in unaffected],
        kernel_cache=kernel_cache)
    clamped = []
    for p in new_plans:
        # the vehicle is physically at its t_ea state; it cannot depart earlier
        if p.ldt < t_ea:
            p = dataclasses.replace(p, ldt=t_ea)
        clamped.append(p)
        events.append(f"t={t_ea:.3f} vehicle={p.vehicle.id} event=replanned")
    return unaffected + clamped, events
