"""Sequential planner tests on small grids (full-resolution runs live in
the acceptance suite)."""

import numpy as np
import pytest

from spp import grid as G
from spp import planner as P
from spp.dynamics import DubinsParams, State3


def small_grid():
    return G.make_grid((-1.0, -1.0, 0.0), (1.0, 1.0, 2 * np.pi),
                       (41, 41, 24), (False, False, True))


def vehicle(vid, x0, target, sta=0.0, r=0.1, priority=None, params=None):
    return P.VehicleSpec(
        id=vid, priority=priority if priority is not None else vid,
        params=params or DubinsParams(1.0, 1.0, 1.0, speed_fixed=1.0),
        x0=State3(*x0), target_center=target, target_radius=r, sta=sta)


class FakeValue:
    """Affine-in-time value: V(t, x) = t - t_cross."""

    def __init__(self, grid, times, t_cross):
        fields = [G.Field(grid, np.full(grid.shape, t - t_cross))
                  for t in times]
        self.value = G.TimeField(np.asarray(times, dtype=float), fields)
        self.times = self.value.times


def test_latest_departure_time_linear_refinement():
    g = small_grid()
    fv = FakeValue(g, [-1.0, -0.5, 0.0, 0.5], t_cross=0.17)
    ldt = P.latest_departure_time(fv, State3(0.0, 0.0, 0.0))
    # [DERIVED] zero crossing of t - 0.17 is t = 0.17
    assert abs(ldt - 0.17) < 1e-9


def test_latest_departure_time_infeasible():
    g = small_grid()
    fv = FakeValue(g, [-1.0, 0.0], t_cross=-5.0)  # always positive
    with pytest.raises(P.InfeasibleError):
        P.latest_departure_time(fv, State3(0.0, 0.0, 0.0))


def test_induced_obstacle_basic_follows_trajectory():
    from spp.sim import Trajectory
    g = small_grid()
    g2 = g.position_subgrid()
    ts = np.linspace(-1.0, 0.0, 21)
    states = np.stack([ts + 0.5, np.zeros_like(ts), np.zeros_like(ts)],
                      axis=1)
    traj = Trajectory(times=ts, states=states, controls=np.zeros((21, 2)),
                      disturbances=np.zeros((21, 3)))
    tf = P.induced_obstacle_basic(traj, 0.1, g2, ts)
    # at t=-0.5 the vehicle is at x=0: the obstacle is a 0.1 disk there
    f = tf.at_time(-0.5)
    assert G.sample(f, np.array([0.0, 0.0])) < 0
    assert G.sample(f, np.array([0.05, 0.05])) < 0
    assert G.sample(f, np.array([0.3, 0.0])) > 0


def test_total_obstacles_union():
    g = small_grid()
    g2 = g.position_subgrid()
    static = G.sdf_disk_cylinder(g2, (0.5, 0.5), 0.2)
    a = G.sdf_disk_cylinder(g2, (-0.5, -0.5), 0.2)
    tf_a = G.TimeField(np.array([-1.0, 0.0]), [a, a])
    times = np.array([-1.0, -0.5, 0.0])
    tot = P.total_obstacles(static, [tf_a], times, g2)
    f = tot.at_time(-0.5)
    assert G.sample(f, np.array([0.5, 0.5])) < 0
    assert G.sample(f, np.array([-0.5, -0.5])) < 0
    assert G.sample(f, np.array([0.5, -0.5])) > 0


def test_shrink_target_reduces_radius():
    g = small_grid()
    g2 = g.position_subgrid()
    target = G.sdf_disk_cylinder(g2, (0.0, 0.0), 0.3)
    kg = G.make_grid((-0.2, -0.2, 0.0), (0.2, 0.2, 2 * np.pi), (31, 31, 12),
                     (False, False, True))
    kernel = G.sdf_disk_cylinder(kg, (0.0, 0.0), 0.1)
    rho = P.kernel_position_radius(kernel)
    assert abs(rho - 0.1) < 2 * max(kg.spacing[:2])
    shrunk = P.shrink_target(target, kernel)
    # [DERIVED] shrinking a 0.3 disk by rho leaves about a (0.3 - rho) disk
    h = max(g2.spacing)
    assert G.sample(shrunk, np.array([0.0, 0.0])) < 0
    assert G.sample(shrunk, np.array([0.3 - rho + 2 * h, 0.0])) > 0
    assert G.sample(shrunk, np.array([0.3 - rho - 2 * h, 0.0])) < 0


def test_plan_all_single_vehicle_straight_line():
    g = small_grid()
    cfg = P.MethodConfig("basic", collision_radius=0.1)
    v = vehicle(1, (-0.5, 0.0, 0.0), (0.5, 0.0), sta=0.0)
    plans = P.plan_all(g, [v], None, cfg, horizon=1.6, save_dt=0.05)
    assert len(plans) == 1
    p = plans[0]
    # [DERIVED] aligned straight run: distance 1.0 minus radius 0.1 at v=1
    assert abs(p.ldt - (-0.9)) < 0.1
    tr = p.nominal_trajectory
    end = tr.states[-1]
    # ends on the target boundary up to one rollout step
    assert np.hypot(end[0] - 0.5, end[1]) <= 0.1 + 0.02


def test_plan_all_priority_order_and_obstacles():
    g = small_grid()
    cfg = P.MethodConfig("basic", collision_radius=0.1)
    # offset lanes: close enough to exercise the induced obstacle, far
    # enough that the coarse grid does not wall off vehicle 2's start
    v1 = vehicle(1, (-0.5, 0.0, 0.0), (0.5, 0.0), sta=0.0, priority=1)
    v2 = vehicle(2, (0.5, 0.25, np.pi), (-0.5, 0.25), sta=0.2, priority=2)
    plans = P.plan_all(g, [v2, v1], None, cfg, horizon=2.0, save_dt=0.05)
    # returned in priority order regardless of input order
    assert [p.vehicle.id for p in plans] == [1, 2]
    # the higher-priority vehicle contributes an induced obstacle
    assert plans[0].induced_obstacles is not None
    # lower priority never departs into a violation: simulated separation
    from spp.sim import DisturbanceModel, simulate, check_separation
    model = DisturbanceModel("zero", seed=0)
    trajs = [simulate(p, model, 0.01, cfg, grid=g) for p in plans]
    assert check_separation(trajs, cfg.collision_radius) == []


def test_plan_all_infeasible_raises():
    g = small_grid()
    cfg = P.MethodConfig("basic", collision_radius=0.1)
    # target fully inside a static obstacle
    static = G.sdf_disk_cylinder(g.position_subgrid(), (0.5, 0.0), 0.3)
    v = vehicle(1, (-0.5, 0.0, 0.0), (0.5, 0.0), r=0.05)
    with pytest.raises(P.InfeasibleError) as ei:
        P.plan_all(g, [v], static, cfg, horizon=1.0, save_dt=0.1)
    assert ei.value.vehicle_id == 1


def test_audit_counts_solves():
    g = small_grid()
    cfg = P.MethodConfig("basic", collision_radius=0.1)
    v1 = vehicle(1, (-0.5, 0.0, 0.0), (0.5, 0.0), priority=1)
    v2 = vehicle(2, (0.5, 0.6, np.pi), (-0.5, 0.6), sta=0.2, priority=2)
    audit = {}
    P.plan_all(g, [v1, v2], None, cfg, horizon=1.6, save_dt=0.05,
               audit=audit)
    # basic method: exactly one PDE solve per vehicle
    assert audit.get("solves") == 2


def test_method_config_validation():
    with pytest.raises(P.PlanningError):
        P.MethodConfig("no_such_method")
    with pytest.raises(P.PlanningError):
        P.MethodConfig("robust_tracking")  # requires tracking parameters
