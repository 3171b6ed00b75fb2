"""Scenario and plan file I/O: schema-versioned JSON with exact round-trips.

Floats serialize via Python's shortest round-trip repr, so load(save(x))
recovers values bit-exactly; that is what makes the plan replay check and
the byte-identical determinism contract possible.  Validation errors always
name the offending field path.
"""

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import BoundState, init_bounds, propagate_bounds
from .environment import Circle, Environment, Rect
from .errors import ReplayMismatch, ScenarioError
from .model import LinearSystem, ValidatedSystem, derive_scalar_bounds, validate_system
from .planner import METCPlan, PlannerParams, plan_cost

__all__ = ["Scenario", "load_scenario", "save_scenario", "scenario_from_dict",
           "scenario_hash", "save_plan", "load_plan", "plan_to_dict", "BUILD_ID"]

SCHEMA_VERSION = 1
BUILD_ID = "etgbt 0.1.0"
REPLAY_ATOL = 1e-9


@dataclass(frozen=True)
class Scenario:
    """A fully validated scenario plus its canonical source document."""

    system: ValidatedSystem
    initial_mean: np.ndarray
    sigma0: np.ndarray
    lambda0: np.ndarray
    environment: Environment
    planner: PlannerParams
    sim_runs: int
    sim_seed: int
    doc: dict


def _get(doc: dict, key: str, path: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing required field")
    return doc[key]


def _matrix(doc: dict, key: str, path: str) -> np.ndarray:
    raw = _get(doc, key, path)
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}.{key}", f"not a numeric matrix: {exc}") from None
    if arr.ndim != 2:
        raise ScenarioError(f"{path}.{key}", f"expected a 2-d matrix, got shape {arr.shape}")
    return arr


def _vector(doc: dict, key: str, path: str) -> np.ndarray:
    raw = _get(doc, key, path)
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}.{key}", f"not a numeric vector: {exc}") from None
    if arr.ndim != 1:
        raise ScenarioError(f"{path}.{key}", f"expected a vector, got shape {arr.shape}")
    return arr


def _shape_from_dict(doc: dict, path: str):
    kind = _get(doc, "type", path)
    if kind == "circle":
        center = _vector(doc, "center", path)
        radius = _get(doc, "radius", path)
        try:
            return Circle((center[0], center[1]), float(radius))
        except (ValueError, IndexError) as exc:
            raise ScenarioError(path, str(exc)) from None
    if kind == "rect":
        lo = _vector(doc, "lo", path)
        hi = _vector(doc, "hi", path)
        try:
            return Rect((lo[0], lo[1]), (hi[0], hi[1]))
        except (ValueError, IndexError) as exc:
            raise ScenarioError(path, str(exc)) from None
    raise ScenarioError(f"{path}.type", f"unknown shape type {kind!r}")


def _shape_to_dict(shape) -> dict:
    if isinstance(shape, Circle):
        return {"type": "circle", "center": list(shape.center), "radius": shape.radius}
    return {"type": "rect", "lo": list(shape.lo), "hi": list(shape.hi)}


def environment_from_dict(doc: dict, path: str = "environment") -> Environment:
    ws_doc = _get(doc, "workspace", path)
    lo = _vector(ws_doc, "lo", f"{path}.workspace")
    hi = _vector(ws_doc, "hi", f"{path}.workspace")
    try:
        workspace = Rect((lo[0], lo[1]), (hi[0], hi[1]))
    except ValueError as exc:
        raise ScenarioError(f"{path}.workspace", str(exc)) from None
    obstacles = []
    for i, obs_doc in enumerate(_get(doc, "obstacles", path)):
        obstacles.append(_shape_from_dict(obs_doc, f"{path}.obstacles[{i}]"))
    goal = _shape_from_dict(_get(doc, "goal", path), f"{path}.goal")
    try:
        return Environment(workspace, tuple(obstacles), goal)
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


def environment_to_dict(env: Environment) -> dict:
    return {
        "workspace": {"lo": list(env.workspace.lo), "hi": list(env.workspace.hi)},
        "obstacles": [_shape_to_dict(o) for o in env.obstacles],
        "goal": _shape_to_dict(env.goal),
    }


def scenario_from_dict(doc: dict) -> Scenario:
    version = _get(doc, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"expected {SCHEMA_VERSION}, got {version}")
    sys_doc = _get(doc, "system", "")
    matrices = {key: _matrix(sys_doc, key, "system") for key in "ABCQRK"}
    try:
        system = validate_system(LinearSystem(**matrices))
    except Exception as exc:
        raise ScenarioError("system", str(exc)) from None
    init_doc = _get(doc, "initial", "")
    mean = _vector(init_doc, "mean", "initial")
    sigma0 = _matrix(init_doc, "sigma", "initial")
    if "lambda" in init_doc:
        lambda0 = _matrix(init_doc, "lambda", "initial")
    else:
        lambda0 = np.zeros_like(sigma0)
    n = system.n
    if mean.shape[0] != n or sigma0.shape != (n, n) or lambda0.shape != (n, n):
        raise ScenarioError("initial", f"mean/sigma/lambda dimensions must match n={n}")
    env = environment_from_dict(_get(doc, "environment", ""))
    planner_doc = dict(_get(doc, "planner", ""))
    for key in ("control_low", "control_high"):
        if key not in planner_doc:
            raise ScenarioError(f"planner.{key}", "missing required field")
    try:
        planner = PlannerParams(**{k: (tuple(v) if isinstance(v, list) else v)
                                   for k, v in planner_doc.items()})
    except (TypeError, ValueError) as exc:
        raise ScenarioError("planner", str(exc)) from None
    if len(planner.control_low) != system.p:
        raise ScenarioError("planner.control_low",
                            f"length must equal input dimension p={system.p}")
    sim_doc = doc.get("simulation", {})
    sim_runs = int(sim_doc.get("runs", 1000))
    sim_seed = int(sim_doc.get("seed", 0))
    if sim_runs < 1:
        raise ScenarioError("simulation.runs", "must be >= 1")
    return Scenario(system=system, initial_mean=mean, sigma0=sigma0, lambda0=lambda0,
                    environment=env, planner=planner, sim_runs=sim_runs,
                    sim_seed=sim_seed, doc=doc)


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"invalid JSON: {exc}") from None
    return scenario_from_dict(doc)


def _canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def scenario_hash(doc: dict) -> str:
    return "sha256:" + hashlib.sha256(_canonical(doc).encode()).hexdigest()


def save_scenario(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def plan_to_dict(plan: METCPlan) -> dict:
    return {
        "horizon": plan.horizon,
        "nominal_states": plan.nominal_states.tolist(),
        "nominal_controls": plan.nominal_controls.tolist(),
        "deltas": plan.deltas.tolist(),
        "bounds": [{"lambda_bar": b.lambda_bar, "p_bar": b.p_bar, "p_lo": b.p_lo}
                   for b in plan.bounds],
        "expected_cost": plan.expected_cost,
        "m": plan.m,
        "cost_cm": plan.cost_cm,
    }


def save_plan(plan: METCPlan, scenario_doc: dict, seed: int, wall_time_s: float,
              path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "plan": plan_to_dict(plan),
        "scenario": scenario_doc,
        "provenance": {
            "scenario_hash": scenario_hash(scenario_doc),
            "seed": seed,
            "build": BUILD_ID,
            "wall_time_s": wall_time_s,
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _replay_check(plan: METCPlan, scenario: Scenario) -> None:
    """Re-propagate states and bounds from the plan inputs; must match stored."""
    sys = scenario.system
    states = np.empty_like(plan.nominal_states)
    states[0] = plan.nominal_states[0]
    for k in range(plan.horizon):
        states[k + 1] = sys.A @ states[k] + sys.B @ plan.nominal_controls[k]
    if not np.allclose(states, plan.nominal_states, atol=REPLAY_ATOL, rtol=REPLAY_ATOL):
        raise ReplayMismatch("stored nominal states do not replay from the controls")
    sb = derive_scalar_bounds(sys)
    replayed = propagate_bounds(init_bounds(scenario.sigma0, scenario.lambda0),
                                sb, plan.deltas)
    for stored, fresh in zip(plan.bounds, replayed):
        if abs(stored.lambda_bar - fresh.lambda_bar) > REPLAY_ATOL * max(1.0, abs(fresh.lambda_bar)) \
                or abs(stored.p_bar - fresh.p_bar) > REPLAY_ATOL * max(1.0, abs(fresh.p_bar)):
            raise ReplayMismatch("stored bound stream does not replay from the thresholds")
    expected = plan_cost(plan.deltas, plan.m, plan.cost_cm)
    if abs(expected - plan.expected_cost) > REPLAY_ATOL * max(1.0, abs(expected)):
        raise ReplayMismatch("stored expected_cost does not match the threshold schedule")
    if not np.allclose(states[0], scenario.initial_mean, atol=REPLAY_ATOL, rtol=0.0):
        raise ReplayMismatch("plan does not start at the scenario's initial mean")


def load_plan(path) -> tuple[METCPlan, Scenario, dict]:
    """Load and verify a plan file: schema, scenario hash, and replay check."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"invalid JSON: {exc}") from None
    version = _get(doc, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"expected {SCHEMA_VERSION}, got {version}")
    provenance = _get(doc, "provenance", "")
    scenario_doc = _get(doc, "scenario", "")
    stored_hash = _get(provenance, "scenario_hash", "provenance")
    if scenario_hash(scenario_doc) != stored_hash:
        raise ScenarioError("provenance.scenario_hash",
                            "embedded scenario does not match its recorded hash")
    scenario = scenario_from_dict(scenario_doc)
    plan_doc = _get(doc, "plan", "")
    horizon = int(_get(plan_doc, "horizon", "plan"))
    bounds = []
    for i, b in enumerate(_get(plan_doc, "bounds", "plan")):
        try:
            bounds.append(BoundState(lambda_bar=float(b["lambda_bar"]),
                                     p_bar=float(b["p_bar"]),
                                     p_lo=float(b["p_lo"]), step=i))
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"plan.bounds[{i}]", str(exc)) from None
    try:
        plan = METCPlan(
            nominal_states=np.array(_get(plan_doc, "nominal_states", "plan"), dtype=float),
            nominal_controls=np.array(_get(plan_doc, "nominal_controls", "plan"),
                                      dtype=float).reshape(horizon, -1),
            deltas=np.array(_get(plan_doc, "deltas", "plan"), dtype=float),
            bounds=tuple(bounds),
            expected_cost=float(_get(plan_doc, "expected_cost", "plan")),
            horizon=horizon,
            m=int(_get(plan_doc, "m", "plan")),
            cost_cm=float(_get(plan_doc, "cost_cm", "plan")),
        )
    except ValueError as exc:
        raise ScenarioError("plan", str(exc)) from None
    _replay_check(plan, scenario)
    return plan, scenario, provenance
