"""Decoupled reference planner: fixed finite-horizon Riccati feedback,
covariance propagation under those gains, deterministic constraint
tightening, and a mean-only optimisation.

The reported objective is the expected cost of the induced affine policy
(mean cost plus the covariance-trace terms), so comparisons against the
lifted method are on the same footing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .constraints import MixedLCC
from .cost import CostSpec
from .dynamics import propagate_basis
from .errors import UnsupportedConstraintError
from .ir import ConicProgram, EqBlock, QuadObjTerm, SOCRow
from .quantiles import inv_norm_cdf
from .solver import SolveOptions, SolveResult, Status, solve_raw
from .system import LiftedTrajectory, SystemDef, initial_factor


def riccati_gains(sys: SystemDef, cost: CostSpec) -> list[np.ndarray]:
    """Finite-horizon LQR gains K[k] = -(R + B'PB)^{-1} B'PA, P_N = Q_N."""
    P = cost.Q_N.copy()
    gains: list[np.ndarray] = [None] * sys.N
    for k in range(sys.N - 1, -1, -1):
        A, B = sys.A[k], sys.B[k]
        M = cost.R[k] + B.T @ P @ B
        K = -np.linalg.solve(M, B.T @ P @ A)
        Acl = A + B @ K
        P = cost.Q[k] + K.T @ cost.R[k] @ K + Acl.T @ P @ Acl
        P = 0.5 * (P + P.T)
        gains[k] = K
    return gains


def closed_loop_covariances(sys: SystemDef, gains) -> list[np.ndarray]:
    """Sigma[k+1] = (A + B K) Sigma[k] (A + B K)' + D D'."""
    Sigma = [sys.Sigma0.copy()]
    for k in range(sys.N):
        Acl = sys.A[k] + sys.B[k] @ gains[k]
        S = Acl @ Sigma[k] @ Acl.T + sys.D[k] @ sys.D[k].T
        Sigma.append(0.5 * (S + S.T))
    return Sigma


@dataclass(frozen=True)
class BaselinePolicy:
    gains: tuple[np.ndarray, ...]
    mu_x: tuple[np.ndarray, ...]
    mu_u: tuple[np.ndarray, ...]
    Sigma: tuple[np.ndarray, ...]


def embed_policy(sys: SystemDef, policy: BaselinePolicy) -> LiftedTrajectory:
    """Lift u_k = mu_u[k] + K_k (x_k - mu_x[k]) into coefficient form."""
    V_x = [initial_factor(sys.Sigma0)]
    V_u = []
    for k in range(sys.N):
        V_u.append(policy.gains[k] @ V_x[k])
        V_x.append(propagate_basis(sys, V_x[k], V_u[k], k))
    return LiftedTrajectory(
        mu_x=list(policy.mu_x), V_x=V_x, mu_u=list(policy.mu_u), V_u=V_u
    )


def _classify_lcc(sys: SystemDef, c: MixedLCC, i: int):
    """Baseline handles one-step, one-kind constraints only."""
    if not isinstance(c, MixedLCC):
        raise UnsupportedConstraintError(
            f"constraint {i}: baseline supports linear chance constraints only, "
            f"got {type(c).__name__}"
        )
    s_steps = c.touched_state_steps(sys)
    u_steps = c.touched_control_steps(sys)
    if len(s_steps) + len(u_steps) != 1:
        raise UnsupportedConstraintError(
            f"constraint {i}: baseline cannot represent multi-step or "
            f"state/control-mixed chance constraints"
        )
    if s_steps:
        k = s_steps[0]
        return "state", k, c.state_block(sys, k), c.b, c.eps
    k = u_steps[0]
    return "control", k, c.control_block(sys, k), c.b, c.eps


def solve_baseline(sys: SystemDef, cost: CostSpec, constraints=(),
                   options: SolveOptions | None = None) -> SolveResult:
    """Fix Riccati gains, tighten each constraint by its closed-loop standard
    deviation, optimise the means, and report the full stochastic cost."""
    gains = riccati_gains(sys, cost)
    Sigma = closed_loop_covariances(sys, gains)
    parsed = [_classify_lcc(sys, c, i) for i, c in enumerate(constraints)]

    n_x, n_u, N = sys.n_x, sys.n_u, sys.N
    mu_x_off = [k * n_x for k in range(N + 1)]
    base_u = (N + 1) * n_x
    mu_u_off = [base_u + k * n_u for k in range(N)]
    n_vars = base_u + N * n_u

    # mean dynamics equalities
    rows, cols, vals, bs = [], [], [], []
    r0 = 0
    rows.append(np.arange(n_x))
    cols.append(mu_x_off[0] + np.arange(n_x))
    vals.append(np.ones(n_x))
    bs.append(sys.mu0.copy())
    r0 += n_x
    for k in range(N):
        r_ids = r0 + np.arange(n_x)
        rows += [r_ids,
                 np.repeat(r_ids, n_x),
                 np.repeat(r_ids, n_u)]
        cols += [mu_x_off[k + 1] + np.arange(n_x),
                 mu_x_off[k] + np.tile(np.arange(n_x), n_x),
                 mu_u_off[k] + np.tile(np.arange(n_u), n_x)]
        vals += [np.ones(n_x), -sys.A[k].ravel(), -sys.B[k].ravel()]
        bs.append(np.zeros(n_x))
        r0 += n_x
    eq = EqBlock(rows=np.concatenate(rows), cols=np.concatenate(cols),
                 vals=np.concatenate(vals), b=np.concatenate(bs))

    # tightened linear rows: a'mu <= b - phi * closed-loop std
    socs = []
    for i, (kind, k, vec_a, b, eps) in enumerate(parsed):
        phi = inv_norm_cdf(1.0 - eps)
        if kind == "state":
            std = float(np.sqrt(max(vec_a @ Sigma[k] @ vec_a, 0.0)))
            off = mu_x_off[k]
        else:
            cov_u = gains[k] @ Sigma[k] @ gains[k].T
            std = float(np.sqrt(max(vec_a @ cov_u @ vec_a, 0.0)))
            off = mu_u_off[k]
        nz = np.nonzero(vec_a)[0]
        socs.append(SOCRow(
            vec_dim=0,
            head_cols=off + nz,
            head_vals=-vec_a[nz],
            head_const=b - phi * std,
            v_rows=np.zeros(0, dtype=np.int64),
            v_cols=np.zeros(0, dtype=np.int64),
            v_vals=np.zeros(0),
            v_const=np.zeros(0),
            label=f"tightened[{i}]",
        ))

    # mean objective in factored form
    from .cost import _psd_sqrt   # shared weight factorisation

    terms = []
    def add_term(W, off, dim, target=None):
        if not np.any(W):
            return
        S = _psd_sqrt(W)
        r, c = np.nonzero(S)
        F = sp.csr_matrix((S[r, c], (r, c + off)), shape=(dim, n_vars))
        g = -S @ target if target is not None else np.zeros(dim)
        terms.append(QuadObjTerm(F=F, g=g))

    for k in range(N):
        add_term(cost.Q[k], mu_x_off[k], n_x)
        add_term(cost.R[k], mu_u_off[k], n_u)
    add_term(cost.Q_N, mu_x_off[N], n_x, cost.x_star)
    for wp in cost.waypoints:
        add_term(wp.weight, mu_x_off[wp.step], n_x, wp.target)

    prog = ConicProgram(n=n_vars, eq=eq, socs=socs, obj_terms=terms)
    raw = solve_raw(prog, options)

    # covariance-induced cost is a constant once the gains are fixed
    trace_cost = float(np.trace(cost.Q_N @ Sigma[N]))
    for k in range(N):
        trace_cost += float(np.trace(cost.Q[k] @ Sigma[k]))
        trace_cost += float(np.trace(cost.R[k] @ gains[k] @ Sigma[k] @ gains[k].T))

    if raw.status is not Status.OPTIMAL:
        return SolveResult(status=raw.status, objective=None, trajectory=None,
                           iterations=raw.iterations, solve_time=raw.solve_time,
                           diagnostics=raw.diagnostics)

    mu_x = [raw.x[mu_x_off[k]:mu_x_off[k] + n_x].copy() for k in range(N + 1)]
    mu_u = [raw.x[mu_u_off[k]:mu_u_off[k] + n_u].copy() for k in range(N)]
    policy = BaselinePolicy(gains=tuple(gains), mu_x=tuple(mu_x),
                            mu_u=tuple(mu_u), Sigma=tuple(Sigma))
    return SolveResult(
        status=Status.OPTIMAL,
        objective=raw.objective + trace_cost,
        trajectory=embed_policy(sys, policy),
        iterations=raw.iterations,
        solve_time=raw.solve_time,
        diagnostics=raw.diagnostics,
    )
