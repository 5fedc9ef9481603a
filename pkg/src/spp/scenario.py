"""Scenario files: JSON descriptions of a full multi-vehicle experiment.

Unknown keys are rejected and validation errors carry the offending field
path.  Bundled scenarios live in ``spp/scenarios/``.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass, field as dc_field

from spp import grid as G
from spp.dynamics import DubinsParams, State3, TrackingErrorParams
from spp.intruder import IntruderSpec
from spp.planner import MethodConfig, VehicleSpec
from spp.sim import DisturbanceModel

BUNDLED = ("basic4", "dstb4_cc", "dstb4_lrc", "dstb4_rtt", "intruder5")


class ScenarioError(ValueError):
    """Validation failure; the message names the offending field path."""


def _check_keys(obj, allowed, path):
    extra = set(obj) - set(allowed)
    if extra:
        raise ScenarioError(f"{path}: unknown keys {sorted(extra)}")


def _req(obj, key, path):
    if key not in obj:
        raise ScenarioError(f"{path}.{key}: missing required key")
    return obj[key]


@dataclass(frozen=True)
class StaticObstacle:
    kind: str                   # disk | box
    center: tuple = ()          # disk
    radius: float = 0.0         # disk
    mins: tuple = ()            # box
    maxs: tuple = ()            # box

    def to_field(self, grid2d):
        if self.kind == "disk":
            return G.sdf_disk_cylinder(grid2d, self.center, self.radius)
        return G.sdf_axis_box(grid2d, self.mins, self.maxs)


@dataclass(eq=False)
class Scenario:
    name: str
    grid: G.Grid
    config: MethodConfig
    vehicles: list
    static_obstacles: list
    disturbance: DisturbanceModel
    sim_dt: float = 0.01
    save_dt: float = 0.05
    cfl: float = 0.5
    kernel_tol: float = 1e-3
    horizon: float = 5.0
    seed: int = 0
    intruder: IntruderSpec | None = None
    intruder_t_iat: float = 0.0

    def static_field(self):
        """Union of the static obstacles on the position plane, or None."""
        if not self.static_obstacles:
            return None
        g2 = self.grid.position_subgrid()
        f = self.static_obstacles[0].to_field(g2)
        for ob in self.static_obstacles[1:]:
            f = G.set_union(f, ob.to_field(g2))
        return f


def _parse_params(obj, path):
    _check_keys(obj, ("v_min", "v_max", "omega_max", "d_r", "d_theta_max"), path)
    try:
        return DubinsParams(
            v_min=float(_req(obj, "v_min", path)), v_max=float(_req(obj, "v_max", path)),
            omega_max=float(_req(obj, "omega_max", path)),
            d_r=float(obj.get("d_r", 0.0)), d_theta_max=float(obj.get("d_theta_max", 0.0)))
    except ValueError as e:
        raise ScenarioError(f"{path}: {e}") from e


def _parse_vehicle(obj, idx, default_params):
    path = f"vehicles[{idx}]"
    _check_keys(obj, ("id", "priority", "x0", "target", "target_radius", "sta", "params"), path)
    params = _parse_params(obj["params"], f"{path}.params") if "params" in obj else default_params
    if params is None:
        raise ScenarioError(f"{path}.params: missing and no scenario-level default")
    x0 = _req(obj, "x0", path)
    if len(x0) != 3:
        raise ScenarioError(f"{path}.x0: need [px, py, theta]")
    tgt = _req(obj, "target", path)
    try:
        return VehicleSpec(
            id=int(_req(obj, "id", path)),
            priority=int(obj.get("priority", obj.get("id", idx + 1))),
            params=params, x0=State3(*[float(v) for v in x0]),
            target_center=(float(tgt[0]), float(tgt[1])),
            target_radius=float(_req(obj, "target_radius", path)),
            sta=float(_req(obj, "sta", path)))
    except ValueError as e:
        raise ScenarioError(f"{path}: {e}") from e


def _parse_obstacle(obj, idx):
    path = f"static_obstacles[{idx}]"
    kind = _req(obj, "kind", path)
    if kind == "disk":
        _check_keys(obj, ("kind", "center", "radius"), path)
        c = _req(obj, "center", path)
        return StaticObstacle("disk", center=(float(c[0]), float(c[1])),
                              radius=float(_req(obj, "radius", path)))
    if kind == "box":
        _check_keys(obj, ("kind", "mins", "maxs"), path)
        return StaticObstacle("box", mins=tuple(map(float, _req(obj, "mins", path))),
                              maxs=tuple(map(float, _req(obj, "maxs", path))))
    raise ScenarioError(f"{path}.kind: unknown obstacle kind {kind!r}")


def _parse_intruder(obj):
    path = "intruder"
    _check_keys(obj, ("params", "x0", "t_sa", "t_ea", "t_iat", "behavior", "segments"), path)
    x0 = _req(obj, "x0", path)
    segs = tuple(tuple(map(float, s)) for s in obj.get("segments", []))
    try:
        return IntruderSpec(
            params=_parse_params(_req(obj, "params", path), f"{path}.params"),
            x0=State3(*[float(v) for v in x0]),
            t_sa=float(_req(obj, "t_sa", path)), t_ea=float(_req(obj, "t_ea", path)),
            t_IAT=float(_req(obj, "t_iat", path)),
            behavior=obj.get("behavior", "scripted"), segments=segs)
    except (ValueError, RuntimeError) as e:
        raise ScenarioError(f"{path}: {e}") from e


_TOP_KEYS = ("name", "method", "grid", "collision_radius", "lrc_boundary_band",
             "vehicle_params", "vehicles", "static_obstacles", "disturbance",
             "rtt", "sim_dt", "save_dt", "cfl", "kernel_tol", "horizon",
             "seed", "intruder")


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "$")
    gspec = _req(doc, "grid", "$")
    _check_keys(gspec, ("mins", "maxs", "counts", "periodic"), "grid")
    try:
        grid = G.make_grid(tuple(map(float, _req(gspec, "mins", "grid"))),
                           tuple(map(float, _req(gspec, "maxs", "grid"))),
                           tuple(map(int, _req(gspec, "counts", "grid"))),
                           tuple(map(bool, _req(gspec, "periodic", "grid"))))
    except ValueError as e:
        raise ScenarioError(f"grid: {e}") from e

    rtt = None
    if "rtt" in doc:
        r = doc["rtt"]
        _check_keys(r, ("tracker", "planner", "R_EB"), "rtt")
        try:
            rtt = TrackingErrorParams(
                tracker=_parse_params(_req(r, "tracker", "rtt"), "rtt.tracker"),
                planner=_parse_params(_req(r, "planner", "rtt"), "rtt.planner"),
                R_EB=float(_req(r, "R_EB", "rtt")))
        except ValueError as e:
            raise ScenarioError(f"rtt: {e}") from e

    try:
        config = MethodConfig(
            method=_req(doc, "method", "$"),
            collision_radius=float(doc.get("collision_radius", 0.1)),
            lrc_boundary_band=float(doc.get("lrc_boundary_band", 0.05)),
            rtt=rtt)
    except RuntimeError as e:
        raise ScenarioError(f"method: {e}") from e

    default_params = (_parse_params(doc["vehicle_params"], "vehicle_params")
                      if "vehicle_params" in doc else None)
    vlist = _req(doc, "vehicles", "$")
    if not vlist:
        raise ScenarioError("vehicles: must be non-empty")
    vehicles = [_parse_vehicle(v, i, default_params) for i, v in enumerate(vlist)]
    ids = [v.id for v in vehicles]
    if len(set(ids)) != len(ids):
        raise ScenarioError("vehicles: duplicate ids")

    d = doc.get("disturbance", {})
    _check_keys(d, ("kind", "seed"), "disturbance")
    try:
        model = DisturbanceModel(kind=d.get("kind", "zero"), seed=int(d.get("seed", 0)))
    except ValueError as e:
        raise ScenarioError(f"disturbance: {e}") from e

    obstacles = [_parse_obstacle(o, i) for i, o in enumerate(doc.get("static_obstacles", []))]
    intr = _parse_intruder(doc["intruder"]) if "intruder" in doc else None

    return Scenario(
        name=str(_req(doc, "name", "$")), grid=grid, config=config,
        vehicles=vehicles, static_obstacles=obstacles, disturbance=model,
        sim_dt=float(doc.get("sim_dt", 0.01)), save_dt=float(doc.get("save_dt", 0.05)),
        cfl=float(doc.get("cfl", 0.5)), kernel_tol=float(doc.get("kernel_tol", 1e-3)),
        horizon=float(doc.get("horizon", 5.0)), seed=int(doc.get("seed", 0)),
        intruder=intr)


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: parse error at line {e.lineno}: {e.msg}") from e
    return parse_scenario(doc)


def bundled_scenario_path(name):
    if name not in BUNDLED:
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return importlib.resources.files("spp") / "scenarios" / f"{name}.json"


def load_bundled(name) -> Scenario:
    return load_scenario(bundled_scenario_path(name))
