"""Dubins-car models, tracking-error dynamics, and their Hamiltonians.

Every reachability mode used by the planners has a closed-form Hamiltonian:
the speed term is the extreme of v * (l1 cos(th) + l2 sin(th)) over the speed
interval, the turn term is +/- omega_max * |l3|, the planar disturbance term is
+/- d_r * ||(l1, l2)|| and the heading disturbance term is +/- d_theta * |l3|,
with signs fixed by each mode's min/max roles.

Tie-breaking is deterministic: a zero control coefficient selects the upper
bound of the interval (v = v_max, omega = +omega_max); a zero planar costate
selects the zero disturbance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True)
class DubinsParams:
    """Speed/turn-rate bounds and disturbance magnitudes for one vehicle."""

    v_min: float
    v_max: float
    omega_max: float
    d_r: float = 0.0
    d_theta_max: float = 0.0
    speed_fixed: float | None = None

    def __post_init__(self):
        if not (0 <= self.v_min <= self.v_max):
            raise DynamicsError("need 0 <= v_min <= v_max")
        if self.omega_max <= 0:
            raise DynamicsError("omega_max must be positive")
        if self.d_r < 0 or self.d_theta_max < 0:
            raise DynamicsError("disturbance bounds must be nonnegative")
        if self.speed_fixed is not None and not (self.v_min == self.v_max == self.speed_fixed):
            raise DynamicsError("speed_fixed requires v_min = v_max = speed_fixed")

    @staticmethod
    def fixed_speed(v, omega_max, d_r=0.0, d_theta_max=0.0):
        return DubinsParams(v, v, omega_max, d_r, d_theta_max, speed_fixed=v)


@dataclass(frozen=True)
class State3:
    """Planar position plus heading; heading stored wrapped to [0, 2*pi)."""

    px: float
    py: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", self.theta % (2 * math.pi))

    def as_array(self):
        return np.array([self.px, self.py, self.theta])


@dataclass(frozen=True)
class TrackingErrorParams:
    """Full-authority tracker vs reduced-authority planner, with error radius."""

    tracker: DubinsParams
    planner: DubinsParams
    R_EB: float

    def __post_init__(self):
        t, p = self.tracker, self.planner
        if not (t.v_min <= p.v_min and p.v_max <= t.v_max and p.omega_max <= t.omega_max):
            raise DynamicsError("planner control set must be contained in tracker's")
        if self.R_EB <= 0:
            raise DynamicsError("R_EB must be positive")


class HamiltonianMode(enum.Enum):
    """Which players optimize, and in which direction."""

    BASIC_REACH = "basic_reach"          # min over u, no disturbance
    REACH_UNDER_DSTB = "reach_under_dstb"  # min over u, max over d
    FRS_CLOSED_LOOP = "frs_closed_loop"  # u pinned to a feedback law, max over d
    FRS_OPEN_LOOP = "frs_open_loop"      # max over u, max over d
    ERROR_BOUND = "error_bound"          # max over tracker u, min over (u_r, d)
    REDUCED_REACH = "reduced_reach"      # min over reduced control set, no disturbance


CONTROL_MIN_MODES = (HamiltonianMode.BASIC_REACH, HamiltonianMode.REACH_UNDER_DSTB,
                     HamiltonianMode.REDUCED_REACH)


def flow(state, u, d, params, validate=False):
    """State derivative of the disturbed Dubins car."""
    v, om = u
    dx, dy, dth = d
    if validate:
        if not (params.v_min - 1e-9 <= v <= params.v_max + 1e-9) or abs(om) > params.omega_max + 1e-9:
            raise DynamicsError("control out of bounds")
        if math.hypot(dx, dy) > params.d_r + 1e-9 or abs(dth) > params.d_theta_max + 1e-9:
            raise DynamicsError("disturbance out of bounds")
    return np.array([v * math.cos(state.theta) + dx,
                     v * math.sin(state.theta) + dy,
                     om + dth])


def _speed_min(s, p):
    """min over v in [v_min, v_max] of v*s; tie at s == 0 -> v_max."""
    return np.where(s > 0, p.v_min * s, p.v_max * s)


def _speed_max(s, p):
    return np.where(s < 0, p.v_min * s, p.v_max * s)


def hamiltonian_arrays(lam1, lam2, lam3, cos_th, sin_th, mode, params, feedback=None):
    """Vectorized Hamiltonian; all costate/heading arguments broadcast together.

    ``feedback`` supplies (v, omega) arrays for FRS_CLOSED_LOOP.
    """
    if mode is HamiltonianMode.ERROR_BOUND:
        raise DynamicsError("error-bound Hamiltonian needs error coordinates; use error_hamiltonian_arrays")
    s = lam1 * cos_th + lam2 * sin_th
    n12 = np.sqrt(lam1 * lam1 + lam2 * lam2)
    a3 = np.abs(lam3)
    p = params
    if mode in CONTROL_MIN_MODES:
        h = _speed_min(s, p) - p.omega_max * a3
        if mode is HamiltonianMode.REACH_UNDER_DSTB:
            h = h + p.d_r * n12 + p.d_theta_max * a3
        return h
    if mode is HamiltonianMode.FRS_OPEN_LOOP:
        return _speed_max(s, p) + p.omega_max * a3 + p.d_r * n12 + p.d_theta_max * a3
    if mode is HamiltonianMode.FRS_CLOSED_LOOP:
        if feedback is None:
            raise DynamicsError("closed-loop mode requires a feedback (v, omega) pair")
        v_fb, om_fb = feedback
        return v_fb * s + om_fb * lam3 + p.d_r * n12 + p.d_theta_max * a3
    raise DynamicsError(f"unhandled mode {mode}")


def error_hamiltonian_arrays(lam1, lam2, lam3, xr, yr, cos_th, sin_th, tp):
    """Hamiltonian of the tracking game: max over tracker, min over planner and
    disturbance, of costate . error_flow."""
    t, p = tp.tracker, tp.planner
    # planner terms (minimizing)
    s_r = lam1 * cos_th + lam2 * sin_th
    h = _speed_min(s_r, p) - p.omega_max * np.abs(lam3)
    # tracker terms (maximizing): v coefficient is -lam1, omega coefficient below
    h = h + _speed_max(-lam1, t)
    c_om = lam1 * yr - lam2 * xr - lam3
    h = h + t.omega_max * np.abs(c_om)
    # disturbance (minimizing, rotation leaves the planar norm invariant)
    n12 = np.sqrt(lam1 * lam1 + lam2 * lam2)
    h = h - t.d_r * n12 - t.d_theta_max * np.abs(lam3)
    return h


def hamiltonian(costate, state, mode, params, feedback=None):
    """Scalar Hamiltonian at one state."""
    l1, l2, l3 = costate
    if mode is HamiltonianMode.ERROR_BOUND:
        return float(error_hamiltonian_arrays(
            np.float64(l1), np.float64(l2), np.float64(l3),
            state.px, state.py, math.cos(state.theta), math.sin(state.theta), params))
    return float(hamiltonian_arrays(
        np.float64(l1), np.float64(l2), np.float64(l3),
        math.cos(state.theta), math.sin(state.theta), mode, params, feedback=feedback))


def optimal_control(costate, state, mode, params):
    """Extremizing (v, omega) for the control-optimizing modes."""
    if mode not in CONTROL_MIN_MODES and mode is not HamiltonianMode.FRS_OPEN_LOOP:
        raise DynamicsError(f"mode {mode} does not optimize the control")
    l1, l2, l3 = costate
    s = l1 * math.cos(state.theta) + l2 * math.sin(state.theta)
    p = params
    if mode in CONTROL_MIN_MODES:
        v = p.v_min if s > 0 else p.v_max
        om = -p.omega_max if l3 > 0 else p.omega_max
    else:
        v = p.v_min if s < 0 else p.v_max
        om = p.omega_max if l3 >= 0 else -p.omega_max
    return (v, om)


def optimal_disturbance(costate, state, mode, params):
    """Extremizing (d_x, d_y, d_theta) for the disturbance-optimizing modes."""
    if mode not in (HamiltonianMode.REACH_UNDER_DSTB, HamiltonianMode.FRS_CLOSED_LOOP,
                    HamiltonianMode.FRS_OPEN_LOOP, HamiltonianMode.ERROR_BOUND):
        raise DynamicsError(f"mode {mode} does not optimize the disturbance")
    l1, l2, l3 = costate
    p = params.tracker if isinstance(params, TrackingErrorParams) else params
    n = math.hypot(l1, l2)
    if n > 0:
        dx, dy = p.d_r * l1 / n, p.d_r * l2 / n
    else:
        dx, dy = 0.0, 0.0
    dth = p.d_theta_max * (1.0 if l3 > 0 else (-1.0 if l3 < 0 else 0.0))
    if mode is HamiltonianMode.ERROR_BOUND:
        return (-dx, -dy, -dth)
    return (dx, dy, dth)


def error_flow(e, u, u_r, d, params=None, validate=False):
    """Tracking-error derivative in the tracker's rotated frame.

    e = (x_r, y_r, theta_r) is the reference state seen from the tracker; u is
    the tracker control, u_r the (reduced-authority) reference control, and the
    planar disturbance is already expressed in the tracker frame.
    """
    v, om = u
    v_r, om_r = u_r
    dx, dy, dth = d
    if validate and params is not None:
        t, p = params.tracker, params.planner
        if not (t.v_min - 1e-9 <= v <= t.v_max + 1e-9) or abs(om) > t.omega_max + 1e-9:
            raise DynamicsError("tracker control out of bounds")
        if not (p.v_min - 1e-9 <= v_r <= p.v_max + 1e-9) or abs(om_r) > p.omega_max + 1e-9:
            raise DynamicsError("reference control out of bounds")
        if math.hypot(dx, dy) > t.d_r + 1e-9 or abs(dth) > t.d_theta_max + 1e-9:
            raise DynamicsError("disturbance out of bounds")
    xr, yr, th = e.px, e.py, e.theta
    return np.array([
        v_r * math.cos(th) - v + om * yr + dx,
        v_r * math.sin(th) - om * xr + dy,
        om_r - om + dth,
    ])


def error_hamiltonian(costate, e, params):
    l1, l2, l3 = costate
    return float(error_hamiltonian_arrays(
        np.float64(l1), np.float64(l2), np.float64(l3),
        e.px, e.py, math.cos(e.theta), math.sin(e.theta), params))


def tracking_law(costate, e, params):
    """Maximizing tracker control (v, omega) of the tracking game."""
    l1, l2, l3 = costate
    t = params.tracker
    v = t.v_min if -l1 < 0 else t.v_max  # coefficient of v is -l1; tie -> v_max
    c_om = l1 * e.py - l2 * e.px - l3
    om = t.omega_max if c_om >= 0 else -t.omega_max
    return (v, om)


def reference_optimal(costate, e, params):
    """Minimizing reference control of the tracking game (the worst-case
    maneuvering of the tracked trajectory)."""
    l1, l2, l3 = costate
    p = params.planner
    s_r = l1 * math.cos(e.theta) + l2 * math.sin(e.theta)
    v_r = p.v_min if s_r > 0 else p.v_max
    om_r = -p.omega_max if l3 > 0 else p.omega_max
    return (v_r, om_r)


def dissipation_bounds(grid, mode, params):
    """Per-dimension bounds on |dH/dlambda_k| for Lax-Friedrichs dissipation."""
    if mode is HamiltonianMode.ERROR_BOUND:
        t, p = params.tracker, params.planner
        max_x = max(abs(grid.mins[0]), abs(grid.maxs[0]))
        max_y = max(abs(grid.mins[1]), abs(grid.maxs[1]))
        a1 = p.v_max + t.v_max + t.omega_max * max_y + t.d_r
        a2 = p.v_max + t.omega_max * max_x + t.d_r
        a3 = p.omega_max + t.omega_max + t.d_theta_max
        return np.array([a1, a2, a3])
    p = params
    return np.array([p.v_max + p.d_r, p.v_max + p.d_r, p.omega_max + p.d_theta_max])
