"""Sequential prioritized planning: vehicles plan one at a time in priority
order, each treating the space-time reserved by higher priorities as moving
obstacles.

Four planning methods are provided:

* ``basic``            - no disturbance, exact committed trajectories; induced
                         obstacles are collision disks around the trajectory.
* ``centralized``      - worst-case disturbance, optimal control enforced;
                         induced obstacles come from the closed-loop forward
                         reachable set.
* ``least_restrictive``- worst-case disturbance, arbitrary control away from
                         the reach-set boundary; induced obstacles come from
                         the open-loop forward set intersected with the
                         backward set.
* ``robust_tracking``  - plan with reduced authority and track with full
                         authority; induced obstacles translate the invariant
                         tracking-error kernel along the nominal trajectory.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from spp import grid as G
from spp.dynamics import DubinsParams, HamiltonianMode, State3, TrackingErrorParams, optimal_control
from spp.sim import Trajectory, wrap_angle
from spp import solver as S

log = logging.getLogger(__name__)

METHODS = ("basic", "centralized", "least_restrictive", "robust_tracking")


class PlanningError(RuntimeError):
    pass


class InfeasibleError(PlanningError):
    def __init__(self, vehicle_id, cause):
        super().__init__(f"vehicle {vehicle_id}: {cause}")
        self.vehicle_id = vehicle_id
        self.cause = cause


@dataclass(frozen=True)
class VehicleSpec:
    id: int
    priority: int
    params: DubinsParams
    x0: State3
    target_center: tuple
    target_radius: float
    sta: float

    def __post_init__(self):
        if self.target_radius <= 0:
            raise PlanningError("target_radius must be positive")


@dataclass(frozen=True)
class MethodConfig:
    method: str
    collision_radius: float = 0.1
    lrc_boundary_band: float = 0.05
    rtt: TrackingErrorParams | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise PlanningError(f"unknown method {self.method!r}")
        if self.method == "robust_tracking" and self.rtt is None:
            raise PlanningError("robust_tracking requires tracking-error parameters")


@dataclass(eq=False)
class PlanResult:
    vehicle: VehicleSpec
    method: str
    ldt: float
    value: S.ValueFunction
    induced_obstacles: G.TimeField
    nominal_trajectory: Trajectory | None = None
    kernel: G.Field | None = None
    shrunk_target_radius: float | None = None


def total_obstacles(static_2d, induced, times, grid2d):
    """Union (pointwise min) of the static set and all induced obstacle
    sequences, sampled on the given time lattice."""
    base = static_2d if static_2d is not None else G.absent_field(grid2d)
    fields = []
    for t in times:
        vals = base.values
        for tf in induced:
            vals = np.minimum(vals, tf.at_time(t).values)
        fields.append(G.Field(grid2d, vals.copy() if induced else vals))
    return G.TimeField(times, fields)


def latest_departure_time(value, x0):
    """Largest time at which x0 still belongs to the reach set, with linear
    refinement between the bracketing samples."""
    x = x0.as_array() if isinstance(x0, State3) else np.asarray(x0)
    times = value.times
    vals = np.array([G.sample(f, x) for f in value.value.fields])
    inside = np.nonzero(vals <= 0.0)[0]
    if len(inside) == 0:
        raise InfeasibleError("?", "start state never enters the reach set over the solved span")
    k = int(inside[-1])
    if k == len(times) - 1:
        return float(times[k])
    v0, v1 = vals[k], vals[k + 1]
    if v1 <= v0:  # non-bracketing numerics; fall back to the sample time
        return float(times[k])
    return float(times[k] + (times[k + 1] - times[k]) * (0.0 - v0) / (v1 - v0))


def induced_obstacle_basic(traj, R_c, grid2d, times):
    """Collision disk of radius R_c around the committed trajectory position."""
    fields = []
    for t in times:
        p = traj.position_at(t)
        fields.append(G.sdf_disk_cylinder(grid2d, p, R_c))
    return G.TimeField(times, fields)


def induced_obstacle_cc(frs, R_c):
    """Project each closed-loop FRS sample to the position plane and pad by
    the collision radius."""
    fields = [G.dilate_positions(G.project_min_nonposition(f), R_c) for f in frs.value.fields]
    return G.TimeField(frs.times, fields)


def induced_obstacle_lrc(frs_open, brs, R_c):
    """Open-loop forward set intersected with the backward set, projected and
    padded by the collision radius."""
    fields = []
    for t, f in zip(frs_open.times, frs_open.value.fields):
        if t < brs.times[0] - 1e-9 or t > brs.times[-1] + 1e-9:
            raise PlanningError("FRS/BRS time spans do not overlap")
        inter = G.set_intersect(f, brs.field_at(t))
        fields.append(G.dilate_positions(G.project_min_nonposition(inter), R_c))
    return G.TimeField(frs_open.times, fields)


def kernel_position_radius(kernel):
    """Circumscribed radius of the kernel's position-plane footprint."""
    proj = G.project_min_nonposition(kernel) if kernel.grid.dim > 2 else kernel
    mask = proj.values <= 0.0
    if not mask.any():
        raise PlanningError("empty kernel")
    g = proj.grid
    xs = g.axis_coords(0)
    ys = g.axis_coords(1)
    rr = np.sqrt(xs * xs + ys * ys)
    return float(np.broadcast_to(rr, proj.values.shape)[mask].max())


def induced_obstacle_rtt(nominal, kernel, R_c, grid2d, times):
    """Translate the kernel's (circumscribed-disk) position footprint along
    the nominal trajectory and pad by the collision radius."""
    rho = kernel_position_radius(kernel)
    fields = []
    for t in times:
        p = nominal.position_at(t)
        fields.append(G.sdf_disk_cylinder(grid2d, p, rho + R_c))
    return G.TimeField(times, fields)


def shrink_target(target_2d, kernel):
    """Erode the target by the kernel's position footprint (dilate the
    complement, complement back)."""
    rho = kernel_position_radius(kernel)
    comp = G.set_complement(target_2d)
    comp.is_sdf = False  # negated SDF is not a distance to the complement set
    eroded = G.set_complement(G.dilate_positions(comp, rho))
    if not (eroded.values <= 0.0).any():
        raise PlanningError("shrunken target is empty; kernel exceeds the target radius")
    return eroded


def augment_obstacles(obstacles, kernel):
    """Minkowski-pad each obstacle sample by the kernel's position footprint."""
    rho = kernel_position_radius(kernel)
    fields = [G.dilate_positions(f, rho) if not f.is_absent else f for f in obstacles.fields]
    return G.TimeField(obstacles.times, fields)


def _integrate_nominal(value, spec, params, mode, t0, t1, dt, target_center, target_radius):
    """Integrate the optimal-control ODE of a disturbance-free plan (RK4,
    zero-order-hold controls, gradient sampled at step start)."""
    state = spec.x0
    t = t0
    times, states, controls = [t], [state.as_array()], []
    c = target_center
    n_steps = max(1, int(round((t1 - t0) / dt)))
    for _ in range(n_steps):
        if math.hypot(state.px - c[0], state.py - c[1]) <= target_radius:
            break
        lam = value.sample_gradient(t, state.as_array())
        u = optimal_control(lam, state, mode, params)
        x = state.as_array()

        def f(s):
            return np.array([u[0] * math.cos(s[2]), u[0] * math.sin(s[2]), u[1]])

        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        # keep positions inside the solve domain (boundary acts as a wall)
        g = value.value.grid
        x[0] = min(max(x[0], g.mins[0]), g.maxs[0])
        x[1] = min(max(x[1], g.mins[1]), g.maxs[1])
        state = State3(x[0], x[1], x[2])
        t += dt
        times.append(t)
        states.append(state.as_array())
        controls.append(u)
    controls.append((0.0, 0.0))
    n = len(times)
    return Trajectory(np.array(times), np.array(states),
                      np.array(controls), np.zeros((n, 3)))


def _solve_with_extension(build_request, spec, audit):
    """Solve, and on infeasibility extend the horizon once by 2.0."""
    for extension in (0.0, 2.0):
        req = build_request(extension)
        vf = S.solve(req)
        if audit is not None:
            audit["solves"] = audit.get("solves", 0) + 1
        try:
            ldt = latest_departure_time(vf, spec.x0)
            return vf, ldt
        except InfeasibleError:
            if extension > 0.0:
                raise InfeasibleError(spec.id, "start state unreachable even after horizon extension")
            log.info("vehicle %s infeasible on initial span; extending horizon by 2.0", spec.id)
    raise AssertionError("unreachable")


def _save_lattice(t0, t1, save_dt):
    n = max(1, int(round((t1 - t0) / save_dt)))
    return t0 + (t1 - t0) * np.arange(n + 1) / n


def plan_all(grid, specs, static_obstacles, config, *, horizon=5.0,
             save_dt=0.05, cfl=S.DEFAULT_CFL, kernel_grid=None,
             kernel_tol=1e-3, kernel_t_max=20.0, audit=None,
             preset_induced=None, kernel_cache=None):
    """Plan every vehicle in ascending priority order.

    ``static_obstacles`` is a position-plane field (or None).  ``horizon`` is
    the per-vehicle solve depth below its scheduled arrival.  ``preset_induced``
    supplies already-reserved obstacle sequences (used by re-planning) that
    every vehicle here must additionally avoid.  Returns one PlanResult per
    vehicle, in the given order.
    """
    specs = sorted(specs, key=lambda s: s.priority)
    grid2d = grid.position_subgrid()
    method = config.method
    R_c = config.collision_radius
    results = []
    induced_sofar = list(preset_induced) if preset_induced else []

    kernel = eb_value = None
    rho = None
    if method == "robust_tracking":
        kernel, eb_value = compute_rtt_kernel(
            config.rtt, kernel_grid, tol=kernel_tol, t_max=kernel_t_max, cfl=cfl,
            audit=audit, cache=kernel_cache)
        rho = kernel_position_radius(kernel)

    for spec in specs:
        if audit is not None:
            audit.setdefault("reads", {})[spec.id] = [p.vehicle.id for p in results]
        target_2d = G.sdf_disk_cylinder(grid2d, spec.target_center, spec.target_radius)
        shrunk_radius = None
        if method == "robust_tracking":
            shrunk_radius = spec.target_radius - rho
            if shrunk_radius <= 0:
                raise InfeasibleError(spec.id, "kernel footprint exceeds the target radius")
            target_2d = G.sdf_disk_cylinder(grid2d, spec.target_center, shrunk_radius)
        target = G.extend_to_state_space(target_2d, grid)

        def build_request(extension, spec=spec, target=target):
            t0 = spec.sta - horizon - extension
            times = _save_lattice(t0, spec.sta, save_dt)
            obst = None
            if static_obstacles is not None or induced_sofar:
                obst = total_obstacles(static_obstacles, induced_sofar, times, grid2d)
                if method == "robust_tracking":
                    obst = augment_obstacles(obst, kernel)
            if method == "basic":
                mode, params = HamiltonianMode.BASIC_REACH, spec.params
            elif method == "robust_tracking":
                mode, params = HamiltonianMode.REDUCED_REACH, config.rtt.planner
            else:
                mode, params = HamiltonianMode.REACH_UNDER_DSTB, spec.params
            return S.SolveRequest(grid, target, mode, params, t0, spec.sta, save_dt,
                                  direction="backward", obstacles=obst, cfl=cfl)

        value, ldt = _solve_with_extension(build_request, spec, audit)

        nominal = None
        if method == "basic":
            nominal = _integrate_nominal(value, spec, spec.params, HamiltonianMode.BASIC_REACH,
                                         ldt, spec.sta, save_dt, spec.target_center, spec.target_radius)
            times = _save_lattice(ldt, spec.sta, save_dt)
            induced = induced_obstacle_basic(nominal, R_c, grid2d, times)
        elif method == "centralized":
            frs = _solve_frs(grid, spec, value, ldt, save_dt, cfl,
                             HamiltonianMode.FRS_CLOSED_LOOP, audit)
            induced = induced_obstacle_cc(frs, R_c)
        elif method == "least_restrictive":
            frs = _solve_frs(grid, spec, value, ldt, save_dt, cfl,
                             HamiltonianMode.FRS_OPEN_LOOP, audit)
            induced = induced_obstacle_lrc(frs, value, R_c)
        else:  # robust_tracking
            nominal = _integrate_nominal(value, spec, config.rtt.planner, HamiltonianMode.REDUCED_REACH,
                                         ldt, spec.sta, save_dt, spec.target_center, shrunk_radius)
            times = _save_lattice(ldt, spec.sta, save_dt)
            induced = induced_obstacle_rtt(nominal, kernel, R_c, grid2d, times)

        plan = PlanResult(spec, method, ldt, value, induced,
                          nominal_trajectory=nominal, kernel=kernel,
                          shrunk_target_radius=shrunk_radius)
        results.append(plan)
        induced_sofar.append(induced)
    return results


def _initial_point_set(grid, x0, cells=2.0):
    """Small implicit set around the initial state (a couple of cells in
    position and heading) used to seed forward solves; deep enough that
    scheme dissipation cannot erase it in the first few steps."""
    h_pos = cells * max(grid.spacing[0], grid.spacing[1])
    h_th = cells * grid.spacing[2]
    dx = grid.axis_coords(0) - x0.px
    dy = grid.axis_coords(1) - x0.py
    pos = np.sqrt(dx * dx + dy * dy) - h_pos
    th = grid.axis_coords(2) - x0.theta
    dth = np.abs(np.arctan2(np.sin(th), np.cos(th))) - h_th
    return G.Field(grid, np.broadcast_to(np.maximum(pos, dth), grid.shape).copy())


def _solve_frs(grid, spec, brs_value, ldt, save_dt, cfl, mode, audit):
    seed = _initial_point_set(grid, spec.x0)
    feedback = None
    if mode is HamiltonianMode.FRS_CLOSED_LOOP:
        feedback = S._ClosedLoopFeedback(brs_value, spec.params)
    t1 = max(spec.sta, ldt + save_dt)
    # the open-loop (worst-case) forward set should err conservative: the
    # more diffusive first-order stencil over-approximates it, while the
    # closed-loop tube around a certified trajectory is kept sharp
    order = 1 if mode is HamiltonianMode.FRS_OPEN_LOOP else 2
    req = S.SolveRequest(grid, seed, mode, spec.params, ldt, t1, save_dt,
                         direction="forward", feedback=feedback, cfl=cfl,
                         order=order)
    vf = S.solve(req)
    if audit is not None:
        audit["solves"] = audit.get("solves", 0) + 1
    return vf


def default_kernel_grid(R_EB, n=41, n_theta=25):
    """Error-coordinate grid: position errors to about twice the bound."""
    ext = 2.0 * R_EB
    return G.make_grid((-ext, -ext, 0.0), (ext, ext, 2 * math.pi),
                       (n, n, n_theta), (False, False, True))


def compute_rtt_kernel(tp, kernel_grid=None, tol=1e-3, t_max=20.0, cfl=S.DEFAULT_CFL,
                       audit=None, cache=None):
    """Invariant tracking-error kernel for the given authority split.

    Cacheable across vehicles sharing the same parameters; counts as one solve.
    """
    key = (tp, kernel_grid)
    if cache is not None and key in cache:
        return cache[key]
    g = kernel_grid if kernel_grid is not None else default_kernel_grid(tp.R_EB)
    # violation set: position error outside the R_EB ball
    dx = g.axis_coords(0)
    dy = g.axis_coords(1)
    viol = G.Field(g, np.broadcast_to(tp.R_EB - np.sqrt(dx * dx + dy * dy), g.shape).copy())
    kernel, converged, vf = S.solve_invariant_kernel(g, viol, tp, tol=tol, t_max=t_max, cfl=cfl)
    if audit is not None:
        audit["solves"] = audit.get("solves", 0) + 1
    if not converged:
        log.warning("kernel iteration hit t_max before convergence (sup change %.2e)", vf.sup_change)
    out = (kernel, vf)
    if cache is not None:
        cache[key] = out
    return out
