"""Lifted dynamics: forward propagation of the (mean, coefficient) pair and
its compilation into sparse affine equality rows.

The coefficient recursion appends the noise-injection block each step:

    V_x[k+1] = [ A_k V_x[k] + B_k V_u[k]  |  D_k ]
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .ir import DecisionIndex, EqBlock
from .system import LiftedTrajectory, SystemDef, basis_dim, initial_factor, vec


def propagate_mean(sys: SystemDef, mu_x, mu_u, k: int) -> np.ndarray:
    """Mean update A_k @ mu_x + B_k @ mu_u."""
    mu_x = np.asarray(mu_x, dtype=float)
    mu_u = np.asarray(mu_u, dtype=float)
    if mu_x.shape != (sys.n_x,):
        raise ShapeError(f"mu_x has shape {mu_x.shape}, expected {(sys.n_x,)}")
    if mu_u.shape != (sys.n_u,):
        raise ShapeError(f"mu_u has shape {mu_u.shape}, expected {(sys.n_u,)}")
    return sys.A[k] @ mu_x + sys.B[k] @ mu_u


def propagate_basis(sys: SystemDef, V_x, V_u, k: int) -> np.ndarray:
    """Coefficient update [A_k V_x + B_k V_u | D_k]."""
    V_x = np.atleast_2d(np.asarray(V_x, dtype=float))
    V_u = np.atleast_2d(np.asarray(V_u, dtype=float))
    ell = basis_dim(sys, k)
    if V_x.shape != (sys.n_x, ell):
        raise ShapeError(f"V_x has shape {V_x.shape}, expected {(sys.n_x, ell)}")
    if V_u.shape != (sys.n_u, ell):
        raise ShapeError(f"V_u has shape {V_u.shape}, expected {(sys.n_u, ell)}")
    return np.hstack([sys.A[k] @ V_x + sys.B[k] @ V_u, sys.D[k]])


def propagate_trajectory(sys: SystemDef, mu_u_list, V_u_list) -> LiftedTrajectory:
    """Forward-propagation oracle: build the full trajectory induced by a policy."""
    if len(mu_u_list) != sys.N or len(V_u_list) != sys.N:
        raise ShapeError(f"expected {sys.N} control entries")
    mu_x = [sys.mu0.copy()]
    V_x = [initial_factor(sys.Sigma0)]
    for k in range(sys.N):
        mu_x.append(propagate_mean(sys, mu_x[k], mu_u_list[k], k))
        V_x.append(propagate_basis(sys, V_x[k], V_u_list[k], k))
    return LiftedTrajectory(mu_x=mu_x, V_x=V_x, mu_u=mu_u_list, V_u=V_u_list)


def replay_residual(sys: SystemDef, traj: LiftedTrajectory) -> float:
    """Largest absolute deviation of traj from re-propagating its own policy."""
    traj.validate_against(sys, cov_tol=np.inf)
    err = float(np.abs(traj.mu_x[0] - sys.mu0).max(initial=0.0))
    err = max(err, float(np.abs(traj.state_cov(0) - sys.Sigma0).max(initial=0.0)))
    for k in range(sys.N):
        mu_next = propagate_mean(sys, traj.mu_x[k], traj.mu_u[k], k)
        V_next = propagate_basis(sys, traj.V_x[k], traj.V_u[k], k)
        err = max(err, float(np.abs(mu_next - traj.mu_x[k + 1]).max(initial=0.0)))
        err = max(err, float(np.abs(V_next - traj.V_x[k + 1]).max(initial=0.0)))
    return err


def dynamics_equalities(sys: SystemDef, idx: DecisionIndex) -> EqBlock:
    """Equality rows pinning the whole trajectory to the lifted recursion.

    Emits the initial conditions mu_x[0] = mu0 and V_x[0] = initial factor,
    then per step the mean recursion, the propagated block of V_x[k+1], and
    the constant noise-injection block pinned to D_k.
    """
    n_x, n_u = sys.n_x, sys.n_u
    rows, cols, vals, bs = [], [], [], []
    row0 = 0

    def add(r, c, v):
        rows.append(np.asarray(r, dtype=np.int64))
        cols.append(np.asarray(c, dtype=np.int64))
        vals.append(np.asarray(v, dtype=float))

    # initial mean
    add(row0 + np.arange(n_x), idx.mu_x_off[0] + np.arange(n_x), np.ones(n_x))
    bs.append(sys.mu0.copy())
    row0 += n_x

    # initial coefficient matrix
    v0 = vec(initial_factor(sys.Sigma0))
    m = v0.size
    add(row0 + np.arange(m), idx.V_x_off[0] + np.arange(m), np.ones(m))
    bs.append(v0)
    row0 += m

    for k in range(sys.N):
        ell = basis_dim(sys, k)
        A, B, D = sys.A[k], sys.B[k], sys.D[k]

        # mean rows: mu_x[k+1][r] - A[r,:] mu_x[k] - B[r,:] mu_u[k] = 0
        r_ids = row0 + np.arange(n_x)
        add(r_ids, idx.mu_x_off[k + 1] + np.arange(n_x), np.ones(n_x))
        add(np.repeat(r_ids, n_x), idx.mu_x_off[k] + np.tile(np.arange(n_x), n_x),
            -A.ravel())
        add(np.repeat(r_ids, n_u), idx.mu_u_off[k] + np.tile(np.arange(n_u), n_x),
            -B.ravel())
        bs.append(np.zeros(n_x))
        row0 += n_x

        # propagated columns of V_x[k+1]: one row per (column c, row r)
        m = n_x * ell
        r_ids = row0 + np.arange(m)                      # c * n_x + r ordering
        add(r_ids, idx.V_x_off[k + 1] + np.arange(m), np.ones(m))
        # -A[r, :] over column c of V_x[k]
        col_base = idx.V_x_off[k] + np.repeat(np.arange(ell) * n_x, n_x * n_x)
        add(np.repeat(r_ids, n_x), col_base + np.tile(np.arange(n_x), m),
            np.tile(-A.ravel(), ell))
        # -B[r, :] over column c of V_u[k]
        col_base = idx.V_u_off[k] + np.repeat(np.arange(ell) * n_u, n_x * n_u)
        add(np.repeat(r_ids, n_u), col_base + np.tile(np.arange(n_u), m),
            np.tile(-B.ravel(), ell))
        bs.append(np.zeros(m))
        row0 += m

        # noise-injection block pinned to D_k
        m = n_x * sys.n_w
        r_ids = row0 + np.arange(m)
        add(r_ids, idx.V_x_off[k + 1] + ell * n_x + np.arange(m), np.ones(m))
        bs.append(vec(D))
        row0 += m

    return EqBlock(
        rows=np.concatenate(rows),
        cols=np.concatenate(cols),
        vals=np.concatenate(vals),
        b=np.concatenate(bs),
    )
