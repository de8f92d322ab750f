"""Deterministic quadratic objective assembled from the stochastic one.

For a Gaussian x = mu + V xi with xi standard normal,

    E[x' W x] = mu' W mu + Tr(W V V')  =  mu' W mu + vec(V)' (I (x) W) vec(V),

so every stage/terminal weight splits into a mean term and a coefficient
term; waypoint penalties act on means only.  Terms are kept in factored
form ||F z + g||^2 so any conic backend can consume them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NotPSDError, ShapeError
from .ir import DecisionIndex, QuadObjTerm
from .system import LiftedTrajectory, SystemDef

PSD_EIG_TOL = 1e-10


def _check_weight(W, dim: int, name: str) -> np.ndarray:
    """Symmetrise and validate a PSD weight matrix."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape != (dim, dim):
        raise ShapeError(f"{name} has shape {W.shape}, expected {(dim, dim)}")
    W = 0.5 * (W + W.T)
    lam_min = float(np.linalg.eigvalsh(W).min())
    if lam_min < -PSD_EIG_TOL:
        raise NotPSDError(f"{name} has negative eigenvalue {lam_min:g}")
    return W


def _psd_sqrt(W: np.ndarray) -> np.ndarray:
    """Symmetric square root with tiny negative eigenvalues clamped to zero."""
    lam, U = np.linalg.eigh(W)
    lam = np.clip(lam, 0.0, None)
    return (U * np.sqrt(lam)) @ U.T


@dataclass(frozen=True)
class Waypoint:
    step: int
    target: np.ndarray
    weight: np.ndarray


@dataclass(frozen=True)
class CostSpec:
    """Stage weights Q[k], R[k], terminal weight Q_N with goal x_star, and
    soft waypoint penalties on the state mean."""

    Q: tuple[np.ndarray, ...]
    R: tuple[np.ndarray, ...]
    Q_N: np.ndarray
    x_star: np.ndarray
    waypoints: tuple[Waypoint, ...] = ()

    @classmethod
    def create(cls, sys: SystemDef, Q, R, Q_N, x_star=None, waypoints=()) -> "CostSpec":
        """Validate against system dimensions; scalars/ single matrices are
        broadcast over the horizon."""
        def expand(W, count):
            # a per-stage list holds matrix-like entries; anything else is a
            # single weight broadcast over the horizon
            per_stage = (
                isinstance(W, (list, tuple))
                and len(W) > 0
                and np.asarray(W[0], dtype=float).ndim >= 2
            ) or (isinstance(W, np.ndarray) and W.ndim == 3)
            if per_stage:
                if len(W) != count:
                    raise ShapeError(f"expected {count} stage weights, got {len(W)}")
                return list(W)
            return [W] * count

        Qs = tuple(
            _check_weight(W, sys.n_x, f"Q[{k}]")
            for k, W in enumerate(expand(Q, sys.N))
        )
        Rs = tuple(
            _check_weight(W, sys.n_u, f"R[{k}]")
            for k, W in enumerate(expand(R, sys.N))
        )
        QN = _check_weight(Q_N, sys.n_x, "Q_N")
        xs = np.zeros(sys.n_x) if x_star is None else np.asarray(x_star, dtype=float)
        if xs.shape != (sys.n_x,):
            raise ShapeError(f"x_star has shape {xs.shape}, expected {(sys.n_x,)}")
        wps = []
        for i, wp in enumerate(waypoints):
            step, target, weight = wp.step, wp.target, wp.weight
            if not 0 <= step <= sys.N:
                raise ConfigError(f"waypoint {i} step {step} outside 0..{sys.N}")
            target = np.asarray(target, dtype=float)
            if target.shape != (sys.n_x,):
                raise ShapeError(f"waypoint {i} target has shape {target.shape}")
            wps.append(Waypoint(step=int(step), target=target,
                                weight=_check_weight(weight, sys.n_x, f"waypoint {i}")))
        return cls(Q=Qs, R=Rs, Q_N=QN, x_star=xs, waypoints=tuple(wps))


def expected_quadratic(mu, V, W) -> float:
    """E[x' W x] for x = mu + V xi with standard-normal xi."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n = mu.shape[0]
    if W.shape != (n, n):
        raise ShapeError(f"W has shape {W.shape}, expected {(n, n)}")
    if V.shape[0] != n:
        raise ShapeError(f"V has {V.shape[0]} rows, expected {n}")
    return float(mu @ W @ mu + np.einsum("ic,ij,jc->", V, W, V))


def _sqrt_or_none(W: np.ndarray):
    if not np.any(W):
        return None
    return _psd_sqrt(W)


def _mean_term(F_entries, S: np.ndarray, sl: slice, target, label: str) -> QuadObjTerm:
    n = S.shape[0]
    r, c = np.nonzero(S)
    F = sp.csr_matrix((S[r, c], (r, c + sl.start)), shape=(n, F_entries))
    g = -S @ target if target is not None else np.zeros(n)
    return QuadObjTerm(F=F, g=g, label=label)


def _coeff_term(F_entries, S: np.ndarray, sl: slice, ell: int, label: str) -> QuadObjTerm:
    # block-diagonal I_ell (x) S acting on the vectorised coefficient matrix
    n = S.shape[0]
    r, c = np.nonzero(S)
    nnz = r.size
    reps = np.repeat(np.arange(ell) * n, nnz)
    rows = np.tile(r, ell) + reps
    cols = np.tile(c, ell) + reps + sl.start
    vals = np.tile(S[r, c], ell)
    F = sp.csr_matrix((vals, (rows, cols)), shape=(n * ell, F_entries))
    return QuadObjTerm(F=F, g=np.zeros(n * ell), label=label)


def assemble_objective(sys: SystemDef, cost: CostSpec, idx: DecisionIndex) -> list[QuadObjTerm]:
    """Factored quadratic objective over the decision vector."""
    terms: list[QuadObjTerm] = []
    n = idx.total
    for k in range(sys.N):
        SQ = _sqrt_or_none(cost.Q[k])
        if SQ is not None:
            terms.append(_mean_term(n, SQ, idx.mu_x(k), None, f"Q[{k}].mean"))
            terms.append(_coeff_term(n, SQ, idx.V_x(k), idx.ell(k), f"Q[{k}].coeff"))
        SR = _sqrt_or_none(cost.R[k])
        if SR is not None:
            terms.append(_mean_term(n, SR, idx.mu_u(k), None, f"R[{k}].mean"))
            terms.append(_coeff_term(n, SR, idx.V_u(k), idx.ell(k), f"R[{k}].coeff"))
    SN = _sqrt_or_none(cost.Q_N)
    if SN is not None:
        terms.append(_mean_term(n, SN, idx.mu_x(sys.N), cost.x_star, "Q_N.mean"))
        terms.append(_coeff_term(n, SN, idx.V_x(sys.N), idx.ell(sys.N), "Q_N.coeff"))
    for i, wp in enumerate(cost.waypoints):
        SW = _sqrt_or_none(wp.weight)
        if SW is not None:
            terms.append(_mean_term(n, SW, idx.mu_x(wp.step), wp.target, f"wp[{i}]"))
    return terms


def evaluate_cost(sys: SystemDef, cost: CostSpec, traj: LiftedTrajectory) -> float:
    """Objective value of a lifted trajectory (no solver involved)."""
    total = 0.0
    for k in range(sys.N):
        total += expected_quadratic(traj.mu_x[k], traj.V_x[k], cost.Q[k])
        total += expected_quadratic(traj.mu_u[k], traj.V_u[k], cost.R[k])
    total += expected_quadratic(
        traj.mu_x[sys.N] - cost.x_star, traj.V_x[sys.N], cost.Q_N
    )
    for wp in cost.waypoints:
        d = traj.mu_x[wp.step] - wp.target
        total += float(d @ wp.weight @ d)
    return total
