"""Closed-loop execution of planned policies under disturbance models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from spp import grid as G
from spp.dynamics import (
    DubinsParams,
    HamiltonianMode,
    State3,
    TrackingErrorParams,
    flow,
    optimal_control,
    optimal_disturbance,
    tracking_law,
)

log = logging.getLogger(__name__)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return math.atan2(math.sin(a), math.cos(a))


@dataclass(eq=False)
class Trajectory:
    """Uniformly sampled closed-loop run: states plus applied inputs."""

    times: np.ndarray
    states: np.ndarray        # (N, 3): px, py, theta
    controls: np.ndarray      # (N, 2): v, omega applied over [t_k, t_{k+1})
    disturbances: np.ndarray  # (N, 3): d_x, d_y, d_theta

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        self.controls = np.asarray(self.controls, dtype=np.float64)
        self.disturbances = np.asarray(self.disturbances, dtype=np.float64)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def position_at(self, t):
        """Linearly interpolated position; clamps outside the covered span."""
        ts = self.times
        if t <= ts[0]:
            return self.states[0, :2].copy()
        if t >= ts[-1]:
            return self.states[-1, :2].copy()
        i = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1 - w) * self.states[i, :2] + w * self.states[i + 1, :2]

    def state_at(self, t):
        ts = self.times
        if t <= ts[0]:
            s = self.states[0]
        elif t >= ts[-1]:
            s = self.states[-1]
        else:
            i = int(np.searchsorted(ts, t, side="right")) - 1
            w = (t - ts[i]) / (ts[i + 1] - ts[i])
            a, b = self.states[i], self.states[i + 1]
            th = a[2] + w * wrap_angle(b[2] - a[2])
            s = np.array([(1 - w) * a[0] + w * b[0], (1 - w) * a[1] + w * b[1], th])
        return State3(s[0], s[1], s[2])


@dataclass(frozen=True)
class DisturbanceModel:
    """Zero, seeded-uniform-random, or adversarial (value-gradient) disturbance."""

    kind: str = "zero"  # zero | random | adversarial
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("zero", "random", "adversarial"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")


class _DisturbanceSource:
    def __init__(self, model: DisturbanceModel, params: DubinsParams, vehicle_id=0):
        self.model = model
        self.params = params
        self.rng = np.random.default_rng((model.seed, vehicle_id))

    def draw(self, costate):
        p = self.params
        if self.model.kind == "zero" or (p.d_r == 0 and p.d_theta_max == 0):
            return (0.0, 0.0, 0.0)
        if self.model.kind == "random":
            ang = self.rng.uniform(0, 2 * math.pi)
            rad = p.d_r * math.sqrt(self.rng.uniform())
            dth = self.rng.uniform(-p.d_theta_max, p.d_theta_max)
            return (rad * math.cos(ang), rad * math.sin(ang), dth)
        # adversarial: worst case along the supplied costate
        l1, l2, l3 = costate
        n = math.hypot(l1, l2)
        dx, dy = (p.d_r * l1 / n, p.d_r * l2 / n) if n > 0 else (0.0, 0.0)
        dth = p.d_theta_max * (1.0 if l3 > 0 else (-1.0 if l3 < 0 else 0.0))
        return (dx, dy, dth)


def _rk4(state, u, d, params, dt):
    def f(s):
        return flow(s, u, d, params)

    x = state.as_array()
    k1 = f(state)
    k2 = f(State3(*(x + 0.5 * dt * k1)))
    k3 = f(State3(*(x + 0.5 * dt * k2)))
    k4 = f(State3(*(x + dt * k3)))
    nxt = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return State3(nxt[0], nxt[1], nxt[2])


def _clamp_to_domain(state, grid):
    px = min(max(state.px, grid.mins[0]), grid.maxs[0])
    py = min(max(state.py, grid.mins[1]), grid.maxs[1])
    if (px, py) != (state.px, state.py):
        log.warning("state clamped to grid boundary at (%.3f, %.3f)", state.px, state.py)
        return State3(px, py, state.theta)
    return state


def tracking_error(state, reference, grid=None):
    """Reference state expressed in the tracker's rotated frame."""
    dx = reference.px - state.px
    dy = reference.py - state.py
    c, s = math.cos(-state.theta), math.sin(-state.theta)
    ex = c * dx - s * dy
    ey = s * dx + c * dy
    eth = reference.theta - state.theta
    if grid is not None:
        ex = min(max(ex, grid.mins[0] + 1e-9), grid.maxs[0] - 1e-9)
        ey = min(max(ey, grid.mins[1] + 1e-9), grid.maxs[1] - 1e-9)
    return State3(ex, ey, eth)


def _kernel_costate(kernel, e):
    """Costate of the tracking game at error e (kernel is the negated game value)."""
    return -G.sample_gradient(kernel, e.as_array())


def make_policy(plan, config):
    """Control law (t, state) -> ((v, omega), costate_for_adversary)."""
    method = plan.method
    spec = plan.vehicle

    if method in ("basic", "centralized"):
        mode = HamiltonianMode.BASIC_REACH if method == "basic" else HamiltonianMode.REACH_UNDER_DSTB

        def policy(t, state):
            lam = plan.value.sample_gradient(t, state.as_array())
            return optimal_control(lam, state, mode, spec.params), lam

        return policy

    if method == "least_restrictive":
        band = config.lrc_boundary_band
        c = spec.target_center

        def policy(t, state):
            lam = plan.value.sample_gradient(t, state.as_array())
            v = plan.value.sample(t, state.as_array())
            if v >= -band:
                return optimal_control(lam, state, HamiltonianMode.REACH_UNDER_DSTB, spec.params), lam
            # free control: straight toward the target at full speed
            bearing = math.atan2(c[1] - state.py, c[0] - state.px)
            err = wrap_angle(bearing - state.theta)
            om = max(-spec.params.omega_max, min(spec.params.omega_max, 4.0 * err))
            return (spec.params.v_max, om), lam

        return policy

    if method == "robust_tracking":
        tp = config.rtt
        kernel = plan.kernel
        nominal = plan.nominal_trajectory

        def policy(t, state):
            ref = nominal.state_at(t)
            e = tracking_error(state, ref, kernel.grid)
            lam = _kernel_costate(kernel, e)
            return tracking_law(lam, e, tp), lam

        return policy

    raise ValueError(f"unknown method {method!r}")


def simulate(plan, model, dt, config, grid=None):
    """Run one vehicle's closed-loop policy from its latest departure time.

    Ends at the scheduled arrival time or on target entry, whichever is first.
    """
    spec = plan.vehicle
    policy = make_policy(plan, config)
    src = _DisturbanceSource(model, spec.params, vehicle_id=spec.id)
    state = spec.x0
    t = plan.ldt
    times, states, controls, dstbs = [t], [state.as_array()], [], []
    c = np.asarray(spec.target_center)
    r_target = spec.target_radius
    n_steps = max(1, int(round((spec.sta - plan.ldt) / dt)))
    for _ in range(n_steps):
        if np.hypot(state.px - c[0], state.py - c[1]) <= r_target:
            break
        u, lam = policy(t, state)
        d = src.draw(lam)
        state = _rk4(state, u, d, spec.params, dt)
        if grid is not None:
            state = _clamp_to_domain(state, grid)
        t += dt
        times.append(t)
        states.append(state.as_array())
        controls.append(u)
        dstbs.append(d)
    controls.append((0.0, 0.0))
    dstbs.append((0.0, 0.0, 0.0))
    return Trajectory(np.array(times), np.array(states), np.array(controls), np.array(dstbs))


def check_separation(trajectories, R_c):
    """Pairwise distance audit; distance <= R_c at a shared sample is a violation."""
    violations = []
    n = len(trajectories)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = trajectories[i], trajectories[j]
            t0 = max(a.times[0], b.times[0])
            t1 = min(a.times[-1], b.times[-1])
            if t1 < t0:
                continue
            dt = min(a.dt or 1.0, b.dt or 1.0)
            ts = np.arange(t0, t1 + dt / 2, dt)
            for t in ts:
                pa = a.position_at(t)
                pb = b.position_at(t)
                dist = float(np.hypot(*(pa - pb)))
                if dist <= R_c:
                    violations.append((float(t), i, j, dist))
    return violations


def check_arrival(traj, spec):
    """(arrived, arrival_time): first target entry at or before the schedule."""
    c = spec.target_center
    d = np.hypot(traj.states[:, 0] - c[0], traj.states[:, 1] - c[1])
    inside = np.nonzero(d <= spec.target_radius)[0]
    if len(inside) == 0:
        return False, None
    t_in = float(traj.times[inside[0]])
    return t_in <= spec.sta + 1e-9, t_in
