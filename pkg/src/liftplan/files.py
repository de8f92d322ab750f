"""Scenario and trajectory file formats.

Scenario files are JSON objects with the top-level sections
{model, geometry, risk, cost, waypoints, qcc, solver}; see docs/scenarios.md.
Trajectory files store the planned means, coefficient matrices, and per-step
covariances.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .scenarios import ScenarioConfig
from .system import LiftedTrajectory, SystemDef


def _section(data: dict, name: str) -> dict:
    value = data.get(name, {}) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a JSON object")
    return dict(value)


def _take(section: dict, section_name: str, key: str, default):
    return section.pop(key, default)


def _reject_unknown(section: dict, name: str) -> None:
    if section:
        raise ConfigError(f"unknown field(s) in {name!r}: {sorted(section)}")


def scenario_from_dict(data: dict, name: str = "") -> ScenarioConfig:
    """Validate a scenario JSON object; unknown fields are rejected with the
    offending section and field names."""
    if not isinstance(data, dict):
        raise ConfigError("scenario file must contain a JSON object")
    known = {"model", "geometry", "risk", "cost", "waypoints", "qcc", "solver", "name"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown top-level section(s): {sorted(extra)}")

    model = _section(data, "model")
    geometry = _section(data, "geometry")
    risk = _section(data, "risk")
    cost = _section(data, "cost")
    qcc = data.get("qcc") or None
    solver = _section(data, "solver")
    waypoints = data.get("waypoints", []) or []

    kind = _take(geometry, "geometry", "kind", None)
    if kind is None:
        raise ConfigError("geometry.kind is required (circle | funnel | free)")

    kwargs: dict = {
        "kind": kind,
        "name": data.get("name", name),
        "T": float(_take(model, "model", "T", 0.1)),
        "sigma1": float(_take(model, "model", "sigma1", 0.05)),
        "sigma2": float(_take(model, "model", "sigma2", 0.05)),
        "N": int(_take(model, "model", "N", 50)),
        "eps_state": float(_take(risk, "risk", "eps_state", 0.05)),
        "eps_control": float(_take(risk, "risk", "eps_control", 0.10)),
        "u_max": float(_take(risk, "risk", "u_max", 25.0)),
        "tolerance": float(_take(solver, "solver", "tolerance", 1e-8)),
        "max_iters": int(_take(solver, "solver", "max_iters", 200)),
    }
    _reject_unknown(model, "model")
    _reject_unknown(risk, "risk")
    _reject_unknown(solver, "solver")

    if kind == "circle":
        kwargs["radius"] = float(_take(geometry, "geometry", "radius", 1.5))
        kwargs["sides"] = int(_take(geometry, "geometry", "sides", 20))
        kwargs["r_wp"] = float(_take(geometry, "geometry", "r_wp", 0.8))
    elif kind == "funnel":
        x_range = _take(geometry, "geometry", "x_range", (-0.3, 2.5))
        kwargs["x_lo"], kwargs["x_hi"] = float(x_range[0]), float(x_range[1])
        kwargs["h_entry"] = float(_take(geometry, "geometry", "h_entry", 0.4))
        kwargs["h_exit"] = float(_take(geometry, "geometry", "h_exit", 0.2))
    elif kind == "free":
        lccs = _take(geometry, "geometry", "lccs", [])
        kwargs["extra_lccs"] = tuple(lccs)
    _reject_unknown(geometry, "geometry")

    if waypoints:
        parsed = []
        for i, wp in enumerate(waypoints):
            try:
                parsed.append((int(wp["step"]), (float(wp["pos"][0]), float(wp["pos"][1]))))
            except (KeyError, TypeError, IndexError) as exc:
                raise ConfigError(f"waypoints[{i}] must have 'step' and 'pos': {exc}")
        kwargs["waypoints"] = tuple(parsed)

    for key in ("stage_diag", "terminal_diag"):
        if key in cost:
            kwargs[key] = tuple(float(v) for v in cost.pop(key))
    for key in ("stage_scale", "terminal_scale", "control_weight", "wp_weight"):
        if key in cost:
            kwargs[key] = float(cost.pop(key))
    if "goal_pos" in cost:
        gp = cost.pop("goal_pos")
        kwargs["goal_pos"] = (float(gp[0]), float(gp[1]))
    _reject_unknown(cost, "cost")

    if qcc is not None:
        if not isinstance(qcc, dict):
            raise ConfigError("section 'qcc' must be a JSON object")
        qcc = dict(qcc)
        kwargs["qcc_mode"] = _take(qcc, "qcc", "mode", None)
        kwargs["qcc_eps"] = float(_take(qcc, "qcc", "eps", 0.05))
        if "q_cc" in qcc:
            kwargs["qcc_q"] = np.asarray(qcc.pop("q_cc"), dtype=float)
        _reject_unknown(qcc, "qcc")

    return ScenarioConfig(**kwargs)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    return scenario_from_dict(data, name=path.stem)


def trajectory_to_dict(traj: LiftedTrajectory) -> dict:
    n_x = traj.mu_x[0].shape[0]
    n_u = traj.mu_u[0].shape[0] if traj.mu_u else 0
    n_w = (traj.V_x[1].shape[1] - traj.V_x[0].shape[1]) if traj.N else 0
    return {
        "N": traj.N,
        "n_x": n_x,
        "n_u": n_u,
        "n_w": n_w,
        "mu_x": [m.tolist() for m in traj.mu_x],
        "mu_u": [m.tolist() for m in traj.mu_u],
        "V_x": [v.tolist() for v in traj.V_x],
        "V_u": [v.tolist() for v in traj.V_u],
        "cov_x": [traj.state_cov(k).tolist() for k in range(traj.N + 1)],
    }


def trajectory_from_dict(data: dict) -> LiftedTrajectory:
    try:
        return LiftedTrajectory(
            mu_x=[np.asarray(m, dtype=float) for m in data["mu_x"]],
            V_x=[np.asarray(v, dtype=float) for v in data["V_x"]],
            mu_u=[np.asarray(m, dtype=float) for m in data["mu_u"]],
            V_u=[np.asarray(v, dtype=float) for v in data["V_u"]],
        )
    except KeyError as exc:
        raise ConfigError(f"trajectory file missing field {exc}")


def load_trajectory(path) -> LiftedTrajectory:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    return trajectory_from_dict(data)


def check_dimensions(sys: SystemDef, traj: LiftedTrajectory) -> None:
    if traj.N != sys.N:
        raise ShapeError(f"trajectory horizon {traj.N} != scenario horizon {sys.N}")
    traj.validate_against(sys, cov_tol=np.inf)
