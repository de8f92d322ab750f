"""Benchmark scenario library: planar quadrotor snap planning in two
geometries (circular arena, narrowing corridor) plus a terminal ellipsoid
variant, and a grid-sweep runner producing CSV summaries.

The vehicle model is a pair of quadruple integrators (position, velocity,
acceleration, jerk in x and y) driven by snap inputs, discretised exactly
under zero-order hold; random accelerations enter through D.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .baseline import solve_baseline
from .constraints import (
    MixedLCC, QCCMode, QCCSpec, control_box_lccs, state_lcc,
)
from .cost import CostSpec, Waypoint
from .errors import ConfigError
from .montecarlo import rollout
from .program import compile_program, restrict_open_loop
from .solver import SolveOptions, SolveResult, Status, solve
from .system import SystemDef


def quadrotor_zoh(T: float, sigma1: float, sigma2: float, N: int = 50,
                  mu0=None, Sigma0=None) -> SystemDef:
    """Planar snap-controlled quadrotor, exact ZOH discretisation.

    State ordering [p, v, a, j] x [x, y]; the input is the snap of both axes
    and the disturbance is a white acceleration with per-axis scales
    (sigma1, sigma2).
    """
    if T <= 0:
        raise ConfigError(f"step length T must be positive, got {T}")
    I2 = np.eye(2)
    Z2 = np.zeros((2, 2))
    A = np.block([
        [I2, T * I2, T**2 / 2 * I2, T**3 / 6 * I2],
        [Z2, I2, T * I2, T**2 / 2 * I2],
        [Z2, Z2, I2, T * I2],
        [Z2, Z2, Z2, I2],
    ])
    B = np.vstack([T**4 / 24 * I2, T**3 / 6 * I2, T**2 / 2 * I2, T * I2])
    D = np.vstack([T**2 / 2 * I2, T * I2, I2, Z2]) @ np.diag([sigma1, sigma2])
    mu0 = np.zeros(8) if mu0 is None else np.asarray(mu0, dtype=float)
    Sigma0 = 1e-5 * np.eye(8) if Sigma0 is None else np.asarray(Sigma0, dtype=float)
    return SystemDef.lti(A, B, D, N=N, mu0=mu0, Sigma0=Sigma0)


def _weights(diag4) -> np.ndarray:
    return np.kron(np.diag(np.asarray(diag4, dtype=float)), np.eye(2))


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario description (see docs/scenarios.md for the JSON schema)."""

    kind: str                      # "circle" | "funnel" | "free"
    T: float = 0.1
    sigma1: float = 0.05
    sigma2: float = 0.05
    N: int = 50
    eps_state: float = 0.05
    eps_control: float = 0.10
    u_max: float = 25.0
    # circle geometry
    radius: float = 1.5
    sides: int = 20
    r_wp: float = 0.8
    # funnel geometry
    x_lo: float = -0.3
    x_hi: float = 2.5
    h_entry: float = 0.4
    h_exit: float = 0.2
    # optional overrides
    waypoints: tuple = ()          # ((step, (x, y)), ...) replaces the defaults
    extra_lccs: tuple = ()         # MixedLCC objects or raw dicts (kind "free")
    qcc_mode: str | None = None    # "lmi" | "quadratic" | "markov"
    qcc_eps: float = 0.05
    qcc_q: np.ndarray | None = None
    stage_diag: tuple | None = None
    stage_scale: float | None = None
    terminal_diag: tuple | None = None
    terminal_scale: float | None = None
    control_weight: float = 1.0
    wp_weight: float = 1e5
    goal_pos: tuple | None = None
    tolerance: float = 1e-8
    max_iters: int = 200
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("circle", "funnel", "free"):
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.T <= 0:
            raise ConfigError("model.T must be positive")
        if self.N < 1:
            raise ConfigError("model.N must be at least 1")
        if self.sides < 3:
            raise ConfigError("geometry.sides must be at least 3")
        if not (self.h_entry >= self.h_exit > 0):
            raise ConfigError("geometry must satisfy h_entry >= h_exit > 0")
        for label, eps in (("eps_state", self.eps_state),
                           ("eps_control", self.eps_control)):
            if not 0.0 < eps < 0.5:
                raise ConfigError(f"risk level out of range: {label}={eps:g}")
        if self.qcc_mode is not None:
            if self.qcc_mode not in ("lmi", "quadratic", "markov"):
                raise ConfigError(f"unknown qcc mode {self.qcc_mode!r}")
            if self.kind != "free":
                raise ConfigError("qcc constraints require geometry kind 'free'")
            if not 0.0 < self.qcc_eps < 1.0:
                raise ConfigError(f"risk level out of range: qcc_eps={self.qcc_eps:g}")

    def solve_options(self) -> SolveOptions:
        return SolveOptions(tolerance=self.tolerance, max_iters=self.max_iters)


def _circle_waypoints(cfg: ScenarioConfig):
    if cfg.waypoints:
        return list(cfg.waypoints)
    step = cfg.N // 5
    angles = np.deg2rad([0.0, 90.0, 180.0, 270.0])
    return [
        (step * (i + 1), (cfg.r_wp * np.cos(a), cfg.r_wp * np.sin(a)))
        for i, a in enumerate(angles)
    ]


def _funnel_waypoints(cfg: ScenarioConfig):
    if cfg.waypoints:
        return list(cfg.waypoints)
    step = cfg.N // 4
    xs = cfg.x_lo + (cfg.x_hi - cfg.x_lo) * np.array([0.25, 0.5, 0.75])
    return [(step * (i + 1), (float(x), 0.0)) for i, x in enumerate(xs)]


def _position_row(sys: SystemDef, k: int, nx_dir, b: float, eps: float) -> MixedLCC:
    a_k = np.zeros(sys.n_x)
    a_k[0], a_k[1] = nx_dir
    return state_lcc(sys, k, a_k, b, eps)


def _to_waypoint(sys: SystemDef, cfg: ScenarioConfig, step: int, pos) -> Waypoint:
    target = np.zeros(sys.n_x)
    target[0], target[1] = pos
    weight = _weights([cfg.wp_weight, 0.0, 0.0, 0.0])
    return Waypoint(step=int(step), target=target, weight=weight)


def _stage_and_terminal(cfg: ScenarioConfig, stage_default, stage_scale_default,
                        terminal_default, terminal_scale_default):
    sd = cfg.stage_diag if cfg.stage_diag is not None else stage_default
    ss = cfg.stage_scale if cfg.stage_scale is not None else stage_scale_default
    td = cfg.terminal_diag if cfg.terminal_diag is not None else terminal_default
    ts = cfg.terminal_scale if cfg.terminal_scale is not None else terminal_scale_default
    return ss * _weights(sd), ts * _weights(td)


def circle_arena(cfg: ScenarioConfig):
    """Stay inside a circle (inscribed-polygon surrogate), loop through four
    waypoints, return to rest at the origin."""
    sys = quadrotor_zoh(cfg.T, cfg.sigma1, cfg.sigma2, N=cfg.N)
    wps = [_to_waypoint(sys, cfg, s, p) for s, p in _circle_waypoints(cfg)]
    Q, Q_N = _stage_and_terminal(
        cfg, (1.0, 0.1, 0.01, 1e-3), 1.0, (50.0, 2.0, 0.5, 0.1), 1e6
    )
    cost = CostSpec.create(
        sys,
        Q=Q,
        R=cfg.control_weight * np.eye(2),
        Q_N=Q_N,
        x_star=np.zeros(8),
        waypoints=wps,
    )
    # half-planes through the edges of the polygon inscribed in the circle
    margin = cfg.radius * np.cos(np.pi / cfg.sides)
    theta = 2.0 * np.pi * np.arange(cfg.sides) / cfg.sides
    constraints: list = [
        _position_row(sys, k, (np.cos(t), np.sin(t)), margin, cfg.eps_state)
        for k in range(cfg.N + 1)
        for t in theta
    ]
    constraints += control_box_lccs(sys, cfg.u_max, cfg.eps_control)
    return sys, cost, constraints


def _funnel_cost(sys: SystemDef, cfg: ScenarioConfig) -> CostSpec:
    wps = [_to_waypoint(sys, cfg, s, p) for s, p in _funnel_waypoints(cfg)]
    x_star = np.zeros(8)
    x_star[0], x_star[1] = cfg.goal_pos if cfg.goal_pos is not None else (2.2, 0.0)
    Q, Q_N = _stage_and_terminal(
        cfg, (0.0, 1.0, 0.1, 0.01), 0.05, (80.0, 3.0, 0.5, 0.1), 1e6
    )
    return CostSpec.create(
        sys,
        Q=Q,
        R=cfg.control_weight * np.eye(2),
        Q_N=Q_N,
        x_star=x_star,
        waypoints=wps,
    )


def funnel_corridor(cfg: ScenarioConfig):
    """Traverse a trapezoidal corridor that narrows from h_entry to h_exit."""
    sys = quadrotor_zoh(cfg.T, cfg.sigma1, cfg.sigma2, N=cfg.N)
    cost = _funnel_cost(sys, cfg)
    slope = (cfg.h_exit - cfg.h_entry) / (cfg.x_hi - cfg.x_lo)
    wall = cfg.h_entry - slope * cfg.x_lo   # p_y <= wall + slope * p_x
    constraints: list = []
    for k in range(cfg.N + 1):
        constraints.append(_position_row(sys, k, (-1.0, 0.0), -cfg.x_lo, cfg.eps_state))
        constraints.append(_position_row(sys, k, (1.0, 0.0), cfg.x_hi, cfg.eps_state))
        constraints.append(_position_row(sys, k, (-slope, 1.0), wall, cfg.eps_state))
        constraints.append(_position_row(sys, k, (-slope, -1.0), wall, cfg.eps_state))
    constraints += control_box_lccs(sys, cfg.u_max, cfg.eps_control)
    return sys, cost, constraints


def terminal_qcc_case(cfg: ScenarioConfig):
    """Funnel cost structure with the position chance constraints removed and
    a single terminal ellipsoid constraint in the requested mode."""
    if cfg.qcc_mode is None:
        raise ConfigError("terminal-ellipsoid scenario requires a qcc mode")
    sys = quadrotor_zoh(cfg.T, cfg.sigma1, cfg.sigma2, N=cfg.N)
    cost = _funnel_cost(sys, cfg)
    constraints: list = list(control_box_lccs(sys, cfg.u_max, cfg.eps_control))
    q = np.eye(8) if cfg.qcc_q is None else np.asarray(cfg.qcc_q, dtype=float)
    constraints.append(
        QCCSpec(Q_cc=q, eps=cfg.qcc_eps, step=cfg.N, mode=QCCMode(cfg.qcc_mode))
    )
    return sys, cost, constraints


def _materialize_lcc(sys: SystemDef, raw) -> MixedLCC:
    if isinstance(raw, MixedLCC):
        return raw
    a = np.zeros((sys.N + 1) * sys.n_x)
    alpha = np.zeros(sys.N * sys.n_u)
    for key, vec_ in dict(raw.get("state", {})).items():
        k = int(key)
        if not 0 <= k <= sys.N:
            raise ConfigError(f"geometry.lccs state step {k} outside 0..{sys.N}")
        a[k * sys.n_x:(k + 1) * sys.n_x] = np.asarray(vec_, dtype=float)
    for key, vec_ in dict(raw.get("control", {})).items():
        k = int(key)
        if not 0 <= k < sys.N:
            raise ConfigError(f"geometry.lccs control step {k} outside 0..{sys.N - 1}")
        alpha[k * sys.n_u:(k + 1) * sys.n_u] = np.asarray(vec_, dtype=float)
    return MixedLCC(a=a, alpha=alpha, b=float(raw["b"]), eps=float(raw["eps"]))


def build_scenario(cfg: ScenarioConfig):
    """Dispatch to the matching builder; 'free' means no position geometry."""
    if cfg.kind == "circle":
        return circle_arena(cfg)
    if cfg.kind == "funnel":
        return funnel_corridor(cfg)
    if cfg.qcc_mode is not None and cfg.kind == "free":
        return terminal_qcc_case(cfg)
    sys = quadrotor_zoh(cfg.T, cfg.sigma1, cfg.sigma2, N=cfg.N)
    cost = _funnel_cost(sys, cfg)
    constraints = [_materialize_lcc(sys, raw) for raw in cfg.extra_lccs]
    constraints += control_box_lccs(sys, cfg.u_max, cfg.eps_control)
    return sys, cost, constraints


def run_method(sys, cost, constraints, method: str,
               options: SolveOptions | None = None) -> SolveResult:
    if method == "exact":
        return solve(compile_program(sys, cost, constraints), options)
    if method == "openloop":
        return solve(restrict_open_loop(compile_program(sys, cost, constraints)), options)
    if method == "baseline":
        return solve_baseline(sys, cost, constraints, options)
    raise ConfigError(f"unknown method {method!r}")


def _scenario_params(cfg: ScenarioConfig):
    if cfg.kind == "circle":
        return f"{cfg.r_wp:g}", ""
    if cfg.kind == "funnel":
        return f"{cfg.h_entry:g}", f"{cfg.h_exit:g}"
    if cfg.qcc_mode is not None:
        return cfg.qcc_mode, ""
    return "", ""


SWEEP_COLUMNS = ("scenario", "method", "sigma1", "sigma2", "param1", "param2",
                 "status", "objective", "solve_ms", "mc_rate_min", "cost_reduction")


def run_sweep(cells, methods, *, mc_samples: int = 0, seed: int = 0) -> list[dict]:
    """Run each (scenario, method) pair; one result row per pair.

    Individual failures are recorded as status 'error' and the sweep
    continues.  When both the exact method and the baseline solve a cell, the
    exact row carries the relative cost reduction; when the baseline is
    infeasible but the exact method solves, it is reported as 100%.
    """
    rows = []
    for cfg in cells:
        per_method: dict[str, SolveResult | None] = {}
        for method in methods:
            p1, p2 = _scenario_params(cfg)
            row = {
                "scenario": cfg.name or cfg.kind,
                "method": method,
                "sigma1": cfg.sigma1,
                "sigma2": cfg.sigma2,
                "param1": p1,
                "param2": p2,
                "status": "error",
                "objective": "",
                "solve_ms": "",
                "mc_rate_min": "",
                "cost_reduction": "",
            }
            try:
                sys, cost, constraints = build_scenario(cfg)
                t0 = time.perf_counter()
                res = run_method(sys, cost, constraints, method, cfg.solve_options())
                row["solve_ms"] = 1e3 * (time.perf_counter() - t0)
                row["status"] = res.status.value
                per_method[method] = res
                if res.status is Status.OPTIMAL:
                    row["objective"] = res.objective
                    if mc_samples > 0:
                        report = rollout(sys, res.trajectory, constraints, cost,
                                         seed=seed, count=mc_samples)
                        rates = [c.rate for c in report.checks]
                        if rates:
                            row["mc_rate_min"] = min(rates)
            except Exception as exc:   # sweep must survive individual cells
                row["status"] = "error"
                row["mc_rate_min"] = ""
                row["objective"] = ""
                per_method[method] = None
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)

        exact = per_method.get("exact")
        base = per_method.get("baseline")
        if exact is not None and exact.status is Status.OPTIMAL and base is not None:
            target = next(r for r in rows[-len(methods):] if r["method"] == "exact")
            if base.status is Status.OPTIMAL:
                target["cost_reduction"] = (
                    f"{100.0 * (1.0 - exact.objective / base.objective):.2f}%"
                )
            elif base.status is Status.INFEASIBLE:
                target["cost_reduction"] = "100%"
    return rows


def sweep_to_csv(rows) -> str:
    from .jsonio import format_float

    def cell(v):
        if isinstance(v, float):
            return format_float(v)
        return str(v)

    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(cell(row.get(c, "")) for c in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"


# -- grids matching the published feasibility tables --------------------------

def circle_grid() -> list[ScenarioConfig]:
    cells = [(0.010, 0.80), (0.060, 0.70), (0.060, 0.50), (0.070, 0.50),
             (0.070, 0.70), (0.850, 0.50), (0.850, 0.70)]
    return [
        ScenarioConfig(kind="circle", sigma1=s, sigma2=s, r_wp=r,
                       name=f"circle_s{s:g}_r{r:g}")
        for s, r in cells
    ]


def funnel_grid() -> list[ScenarioConfig]:
    cells = [(0.010, 0.40, 0.20), (0.056, 0.40, 0.20), (0.056, 0.50, 0.30),
             (0.060, 0.40, 0.20), (0.060, 0.50, 0.30), (0.500, 0.40, 0.20),
             (0.550, 0.50, 0.30)]
    return [
        ScenarioConfig(kind="funnel", sigma1=s, sigma2=s, h_entry=he, h_exit=hx,
                       name=f"funnel_s{s:g}_h{he:g}_{hx:g}")
        for s, he, hx in cells
    ]


def terminal_qcc_grid(modes=("markov", "lmi", "quadratic")) -> list[ScenarioConfig]:
    cells = [(0.18, 0.005), (0.20, 0.010), (0.173, 0.173), (0.175, 0.175)]
    return [
        ScenarioConfig(kind="free", sigma1=s1, sigma2=s2, qcc_mode=mode,
                       name=f"qcc_{mode}_s{s1:g}_{s2:g}")
        for s1, s2 in cells
        for mode in modes
    ]
