"""Chance-constrained stochastic trajectory planning via moment lifting."""

from .system import (
    SystemDef, BasisIndex, LiftedTrajectory,
    basis_dim, vec, unvec, initial_factor,
)
from .quantiles import inv_norm_cdf, inv_chi2_cdf, norm_cdf, chi2_cdf
from .cost import CostSpec, Waypoint, expected_quadratic, assemble_objective, evaluate_cost
from .constraints import (
    MixedLCC, TerminalCovSpec, QCCSpec, QCCMode,
    build_lcc, build_terminal_cov, qcc_lmi, qcc_quadratic_bound,
    build_qcc_quadratic, build_qcc_markov,
    state_lcc, control_lcc, control_box_lccs,
)
from .dynamics import (
    propagate_mean, propagate_basis, propagate_trajectory,
    dynamics_equalities, replay_residual,
)
from .ir import ConicProgram, DecisionIndex, dump_text
from .program import compile_program, restrict_open_loop
from .solver import Status, SolveOptions, SolveResult, solve, solve_raw
from .baseline import (
    BaselinePolicy, riccati_gains, closed_loop_covariances,
    embed_policy, solve_baseline,
)
from .montecarlo import (
    MCReport, ConstraintCheck, rollout, covariance_oracle, qcc_empirical,
    standard_normal_draws,
)
from .scenarios import (
    ScenarioConfig, quadrotor_zoh, circle_arena, funnel_corridor,
    terminal_qcc_case, build_scenario, run_method, run_sweep, sweep_to_csv,
    circle_grid, funnel_grid, terminal_qcc_grid,
)
from .files import (
    load_scenario, scenario_from_dict, load_trajectory,
    trajectory_to_dict, trajectory_from_dict,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
