"""Lax-Friedrichs solver for the double-obstacle HJ variational inequality
(backward, final-value) and the plain HJ PDE (forward, initial-value).

Scheme: upwind spatial discretization (second-order ENO by default,
first-order available) with per-dimension
dissipation coefficients, 2-stage TVD Runge-Kutta in time at CFL 0.5.  For
backward solves each Euler substep is followed by the variational clamps, min
with the target function first, then max with the negated obstacle function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from spp import grid as G
from spp.dynamics import HamiltonianMode, dissipation_bounds, hamiltonian_arrays, error_hamiltonian_arrays

DEFAULT_CFL = 0.5


class SolverError(RuntimeError):
    pass


class InstabilityError(SolverError):
    pass


@dataclass
class SolveRequest:
    grid: G.Grid
    target: G.Field
    mode: HamiltonianMode
    params: object
    t_start: float
    t_end: float
    save_dt: float
    direction: str = "backward"  # "backward" (VI) or "forward" (PDE)
    obstacles: G.TimeField | None = None
    feedback: object | None = None  # feedback control source for FRS_CLOSED_LOOP
    cfl: float = DEFAULT_CFL
    order: int = 2  # spatial accuracy: 2 (ENO) or 1 (upwind, more diffusive)

    def __post_init__(self):
        if self.direction not in ("backward", "forward"):
            raise SolverError(f"bad direction {self.direction!r}")
        if not self.t_start < self.t_end:
            raise SolverError("need t_start < t_end")
        if self.save_dt <= 0:
            raise SolverError("save_dt must be positive")


@dataclass(eq=False)
class ValueFunction:
    """Time-sampled value function; sublevel sets are the reachable sets."""

    value: G.TimeField
    mode: HamiltonianMode
    sup_change: float | None = None
    iterations: int = 0

    @property
    def grid(self):
        return self.value.grid

    @property
    def times(self):
        return self.value.times

    def field_at(self, t):
        return self.value.at_time(t)

    def sample(self, t, x):
        """Value at (t, x), linear in t between the bracketing samples."""
        times = self.value.times
        if t <= times[0]:
            return G.sample(self.value.fields[0], x)
        if t >= times[-1]:
            return G.sample(self.value.fields[-1], x)
        i = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[i]) / (times[i + 1] - times[i])
        v0 = G.sample(self.value.fields[i], x)
        v1 = G.sample(self.value.fields[i + 1], x)
        return (1 - w) * v0 + w * v1

    def sample_gradient(self, t, x):
        """Spatial gradient at (t, x) from the nearest-in-time sample."""
        return G.sample_gradient(self.field_at(t), x)


class _ClosedLoopFeedback:
    """Per-node optimal control extracted from a reach value function.

    Caches the (v, omega) node arrays for the value sample nearest the query
    time; the control is the minimizing one of the reach game.
    """

    def __init__(self, value_fn, params):
        self.value_fn = value_fn
        self.params = params
        self._key = None
        self._fb = None

    def at_time(self, t, cos_th, sin_th):
        fld = self.value_fn.field_at(t)
        key = id(fld)
        if key != self._key:
            g1, g2, g3 = fld.gradient_fields()
            p = self.params
            s = g1 * cos_th + g2 * sin_th
            v = np.where(s > 0, p.v_min, p.v_max)
            om = np.where(g3 > 0, -p.omega_max, p.omega_max)
            self._key = key
            self._fb = (v, om)
        return self._fb


def _one_sided_diffs(V, axis, h, periodic):
    """Forward/backward first-order differences with periodic wrap or clamped
    extrapolation at non-periodic boundaries."""
    if periodic:
        fwd = (np.roll(V, -1, axis=axis) - V) / h
        bwd = np.roll(fwd, 1, axis=axis)
        return fwd, bwd
    d = np.diff(V, axis=axis) / h
    first = [slice(None)] * V.ndim
    first[axis] = slice(0, 1)
    last = [slice(None)] * V.ndim
    last[axis] = slice(-1, None)
    fwd = np.concatenate([d, d[tuple(last)]], axis=axis)
    bwd = np.concatenate([d[tuple(first)], d], axis=axis)
    return fwd, bwd


def _minmod(a, b):
    """Same sign: the one of smaller magnitude; opposite signs: zero."""
    return np.where(a * b > 0, np.where(np.abs(a) <= np.abs(b), a, b), 0.0)


def _eno2_diffs(V, axis, h, periodic):
    """Second-order essentially-non-oscillatory one-sided differences.

    D-  = (V_i - V_{i-1})/h + (h/2) minmod(D2_{i-1}, D2_i)
    D+  = (V_{i+1} - V_i)/h - (h/2) minmod(D2_i, D2_{i+1})

    with D2 the centered second derivative.  Non-periodic borders fall back
    to the first-order stencil (the correction is zeroed there)."""
    fwd1, bwd1 = _one_sided_diffs(V, axis, h, periodic)
    d2 = (fwd1 - bwd1) / h  # centered second derivative
    if periodic:
        d2m = np.roll(d2, 1, axis=axis)
        d2p = np.roll(d2, -1, axis=axis)
    else:
        edge0 = [slice(None)] * V.ndim
        edge0[axis] = slice(0, 1)
        edge1 = [slice(None)] * V.ndim
        edge1[axis] = slice(-1, None)
        z0 = np.zeros_like(d2[tuple(edge0)])
        core_lo = [slice(None)] * V.ndim
        core_lo[axis] = slice(0, -1)
        core_hi = [slice(None)] * V.ndim
        core_hi[axis] = slice(1, None)
        d2m = np.concatenate([z0, d2[tuple(core_lo)]], axis=axis)
        d2p = np.concatenate([d2[tuple(core_hi)], np.zeros_like(d2[tuple(edge1)])], axis=axis)
        # first-order at the two border layers in this axis
        d2 = d2.copy()
        d2[tuple(edge0)] = 0.0
        d2[tuple(edge1)] = 0.0
    bwd = bwd1 + 0.5 * h * _minmod(d2m, d2)
    fwd = fwd1 - 0.5 * h * _minmod(d2, d2p)
    return fwd, bwd


class _Scheme:
    """Holds the per-grid constants of one solve."""

    def __init__(self, grid, mode, params, feedback=None, cfl=DEFAULT_CFL,
                 order=2):
        if not 0.0 < cfl <= 1.0:
            raise InstabilityError(
                f"CFL number {cfl} outside (0, 1]: explicit time stepping is "
                "unstable above 1")
        self.grid = grid
        self.mode = mode
        self.params = params
        self.diffs = _eno2_diffs if order == 2 else _one_sided_diffs
        self.alpha = dissipation_bounds(grid, mode, params)
        self.h = grid.spacing
        self.cfl = cfl
        self.dt_max = cfl / float(np.sum(self.alpha / np.array(self.h)))
        th = grid.axis_coords(2) if grid.dim >= 3 else np.zeros((1, 1))
        self.cos_th = np.cos(th)
        self.sin_th = np.sin(th)
        if grid.dim >= 3:
            self.xr = grid.axis_coords(0)
            self.yr = grid.axis_coords(1)
        self.feedback = feedback
        self.alpha_local = self._local_alphas()

    def _local_alphas(self):
        """Per-node bounds on |dH/dlambda_k|: tighter than the global vector
        because the heading (and, for the error game, the position offsets)
        are grid coordinates, so the speed terms can use |cos|/|sin| at each
        node instead of their global maximum.  Halves the front smearing of
        the global-coefficient scheme while staying monotone."""
        c, s = np.abs(self.cos_th), np.abs(self.sin_th)
        if self.mode is HamiltonianMode.ERROR_BOUND:
            t, p = self.params.tracker, self.params.planner
            # x-rate is v_p cos(theta_r) - v_t + omega_t*y_r + d_x; the two
            # speed terms never flip sign independently, so bound their
            # difference over both intervals instead of summing the maxima
            lo = np.minimum(p.v_min * self.cos_th, p.v_max * self.cos_th)
            hi = np.maximum(p.v_min * self.cos_th, p.v_max * self.cos_th)
            speed1 = np.maximum(np.abs(hi - t.v_min), np.abs(lo - t.v_max))
            a1 = speed1 + t.omega_max * np.abs(self.yr) + t.d_r
            a2 = p.v_max * s + t.omega_max * np.abs(self.xr) + t.d_r
            a3 = np.float64(p.omega_max + t.omega_max + t.d_theta_max)
        else:
            p = self.params
            a1 = p.v_max * c + p.d_r
            a2 = p.v_max * s + p.d_r
            a3 = np.float64(p.omega_max + p.d_theta_max)
        return (a1, a2, a3)

    def numerical_hamiltonian(self, V, t, diss_sign=1.0):
        """H(averaged gradient) - diss_sign * dissipation.

        Marching forward in time uses V <- V - dt*(H - diss); marching
        backward uses V <- V + dt*(H + diss), so the dissipation always acts
        diffusively along the marching direction.
        """
        fwd = []
        bwd = []
        for k in range(self.grid.dim):
            f, b = self.diffs(V, k, self.h[k], self.grid.periodic[k])
            fwd.append(f)
            bwd.append(b)
        l1 = (fwd[0] + bwd[0]) * 0.5
        l2 = (fwd[1] + bwd[1]) * 0.5
        l3 = (fwd[2] + bwd[2]) * 0.5
        if self.mode is HamiltonianMode.ERROR_BOUND:
            h = error_hamiltonian_arrays(l1, l2, l3, self.xr, self.yr,
                                         self.cos_th, self.sin_th, self.params)
        elif self.mode is HamiltonianMode.FRS_CLOSED_LOOP:
            fb = self.feedback.at_time(t, self.cos_th, self.sin_th)
            h = hamiltonian_arrays(l1, l2, l3, self.cos_th, self.sin_th,
                                   self.mode, self.params, feedback=fb)
        else:
            h = hamiltonian_arrays(l1, l2, l3, self.cos_th, self.sin_th,
                                   self.mode, self.params)
        for k in range(self.grid.dim):
            h -= diss_sign * self.alpha_local[k] * (fwd[k] - bwd[k]) * 0.5
        return h


def lf_numerical_hamiltonian(scheme, V, t=0.0):
    """Numerical Hamiltonian array for a value array V under the scheme."""
    return scheme.numerical_hamiltonian(V, t)


def _obstacle_values(obstacles, t, grid):
    """Obstacle node values at time t, broadcastable to the solve grid."""
    if obstacles is None:
        return None
    f = obstacles.at_time(t)
    if f.grid.dim == grid.dim:
        return f.values
    vals = f.values.reshape(f.values.shape + (1,) * (grid.dim - f.grid.dim))
    return vals


def _clamp(V, target_vals, obs_vals):
    V = np.minimum(V, target_vals)
    if obs_vals is not None:
        V = np.maximum(V, -obs_vals)
    return V


def step_backward_vi(scheme, V, t, dt, target_vals, obs_vals):
    """One explicit Euler substep of the backward VI, clamps applied after."""
    Vn = V + dt * scheme.numerical_hamiltonian(V, t, diss_sign=-1.0)
    return _clamp(Vn, target_vals, obs_vals)


def solve(request: SolveRequest) -> ValueFunction:
    """Integrate the HJ VI (backward) or HJ PDE (forward) and sample in time.

    Returns samples at t_start + k*save_dt (ascending), always including both
    endpoints of the span.
    """
    g = request.grid
    scheme = _Scheme(g, request.mode, request.params, feedback=request.feedback,
                     cfl=request.cfl, order=request.order)
    target_vals = request.target.values
    backward = request.direction == "backward"

    n_save = max(1, int(round((request.t_end - request.t_start) / request.save_dt)))
    save_times = request.t_start + (request.t_end - request.t_start) * np.arange(n_save + 1) / n_save

    obs0 = _obstacle_values(request.obstacles, request.t_end if backward else request.t_start, g)
    V = np.maximum(target_vals, -obs0) if obs0 is not None else target_vals.copy()
    # any stable evolution stays within the domain diameter of the initial
    # data; far beyond that means the time step violated the CFL condition
    span = abs(request.t_end - request.t_start)
    v_bound = (float(np.max(np.abs(V[np.isfinite(V)]), initial=1.0))
               + float(np.max(scheme.alpha)) * span) * 1e3
    v_lo, v_hi = float(V.min()), float(V.max())

    saves = {}
    t = request.t_end if backward else request.t_start
    saves[len(save_times) - 1 if backward else 0] = V.copy()
    pending = list(range(len(save_times) - 2, -1, -1)) if backward else list(range(1, len(save_times)))
    steps = 0
    for si in pending:
        t_goal = save_times[si]
        while (t - t_goal > 1e-12) if backward else (t_goal - t > 1e-12):
            dt = min(scheme.dt_max, abs(t - t_goal))
            t_next = t - dt if backward else t + dt
            if backward:
                obs = _obstacle_values(request.obstacles, t_next, g)
                V1 = step_backward_vi(scheme, V, t, dt, target_vals, obs)
                V2 = step_backward_vi(scheme, V1, t_next, dt, target_vals, obs)
                V = _clamp(0.5 * (V + V2), target_vals, obs)
            else:
                V1 = V - dt * scheme.numerical_hamiltonian(V, t)
                V2 = V1 - dt * scheme.numerical_hamiltonian(V1, t_next)
                V = 0.5 * (V + V2)
                # the Hamiltonian vanishes at zero gradient, so the exact
                # solution satisfies a maximum principle: its range never
                # leaves the initial range.  Enforcing that on the non-periodic
                # boundary shells (where extrapolated ghost nodes leave the
                # scheme without dissipation) suppresses corner growth while
                # leaving interior values untouched.
                _clip_boundary(V, g, v_lo, v_hi)
            t = t_next
            steps += 1
            if steps % 64 == 0 and (not np.isfinite(V).all()
                                    or np.abs(V).max() > v_bound):
                raise InstabilityError(f"diverging values at t={t:.4f}")
        saves[si] = V.copy()
    if not np.isfinite(V).all() or np.abs(V).max() > v_bound:
        raise InstabilityError("diverging values in final field")

    fields = [G.Field(g, saves[i]) for i in range(len(save_times))]
    tf = G.TimeField(save_times, fields)
    return ValueFunction(tf, request.mode, iterations=steps)


def _clip_boundary(V, grid, lo, hi):
    """Clip the boundary shells of every non-periodic axis to [lo, hi]."""
    for ax in range(grid.dim):
        if grid.periodic[ax]:
            continue
        sl0 = [slice(None)] * V.ndim
        sl0[ax] = slice(0, 1)
        sl1 = [slice(None)] * V.ndim
        sl1[ax] = slice(-1, None)
        np.clip(V[tuple(sl0)], lo, hi, out=V[tuple(sl0)])
        np.clip(V[tuple(sl1)], lo, hi, out=V[tuple(sl1)])


def solve_invariant_kernel(grid, violation_target, params, tol=1e-3, t_max=20.0,
                           cfl=DEFAULT_CFL, chunk=1.0):
    """Infinite-horizon backward VI for the tracking game.

    ``violation_target`` is the set of tracking errors that violate the error
    bound.  The backward reach set of that target (under the game Hamiltonian)
    is grown until the sup-norm change per unit time drops below ``tol``; the
    returned field is its complement, whose sublevel set is the control
    invariant kernel of maintainable tracking errors.

    Returns (kernel_field, converged).  Raises KernelEmptyError if the kernel
    has no nodes.
    """
    scheme = _Scheme(grid, HamiltonianMode.ERROR_BOUND, params, cfl=cfl)
    target_vals = violation_target.values
    V = target_vals.copy()
    elapsed = 0.0
    converged = False
    sup_change = math.inf
    iters = 0
    while elapsed < t_max:
        span = min(chunk, t_max - elapsed)
        V_prev = V
        t = 0.0
        while t < span - 1e-12:
            dt = min(scheme.dt_max, span - t)
            V0 = V
            V1 = np.minimum(V0 + dt * scheme.numerical_hamiltonian(V0, -elapsed - t, diss_sign=-1.0), target_vals)
            V2 = np.minimum(V1 + dt * scheme.numerical_hamiltonian(V1, -elapsed - t, diss_sign=-1.0), target_vals)
            V = np.minimum(0.5 * (V0 + V2), target_vals)
            t += dt
            iters += 1
        if not np.isfinite(V).all():
            raise InstabilityError("non-finite values in kernel solve")
        elapsed += span
        sup_change = float(np.max(np.abs(V - V_prev))) / span
        if sup_change < tol:
            converged = True
            break
    kernel = G.Field(grid, -V)
    if not (kernel.values <= 0).any():
        raise KernelEmptyError("invariant kernel is empty")
    vf = ValueFunction(G.TimeField([0.0], [G.Field(grid, V)]), HamiltonianMode.ERROR_BOUND,
                       sup_change=sup_change, iterations=iters)
    return kernel, converged, vf


class KernelEmptyError(SolverError):
    pass
