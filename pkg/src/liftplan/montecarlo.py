"""Monte-Carlo verification of planned policies.

Sampling is counter-based: sample i consumes a fixed, private range of the
Philox stream keyed by the seed, and Gaussians come from the inverse-CDF
transform of those uniforms.  Draw j of sample i therefore never depends on
chunking or execution order, which makes reports bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .constraints import MixedLCC, QCCSpec, cc_factor
from .cost import CostSpec
from .dynamics import replay_residual
from .errors import DomainError, ReplayError
from .quantiles import inv_norm_cdf
from .system import LiftedTrajectory, SystemDef, basis_dim

_CHUNK = 65536
_U64_MASK = (1 << 64) - 1


def _philox_uint64(seed: int, block_start: int, n_blocks: int) -> np.ndarray:
    """Raw 64-bit outputs of blocks [block_start, block_start + n_blocks);
    word 0 of the 256-bit counter is the fast-moving one, 4 outputs/block."""
    key = np.array([seed & _U64_MASK, (seed >> 64) & _U64_MASK], dtype=np.uint64)
    counter = np.array([block_start & _U64_MASK, block_start >> 64, 0, 0],
                       dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=counter)
    return bg.random_raw(4 * n_blocks)


def standard_normal_draws(seed: int, start: int, count: int, dim: int) -> np.ndarray:
    """(count, dim) standard normals for samples start..start+count-1.

    Each sample owns ceil(dim / 4) counter blocks, so the value at (i, j) is a
    pure function of (seed, i, j).
    """
    if dim == 0:
        return np.zeros((count, 0))
    blocks_per_sample = (dim + 3) // 4
    raw = _philox_uint64(seed, start * blocks_per_sample, count * blocks_per_sample)
    raw = raw.reshape(count, 4 * blocks_per_sample)[:, :dim]
    # map to the open interval (0, 1): (r >> 11) has 53 bits
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)
    return inv_norm_cdf(u)


@dataclass(frozen=True)
class ConstraintCheck:
    label: str
    rate: float
    stderr: float
    target: float          # required probability 1 - eps


@dataclass(frozen=True)
class MCReport:
    samples: int
    cost_mean: float | None
    cost_stderr: float | None
    checks: tuple[ConstraintCheck, ...]
    terminal_cov: np.ndarray
    step_covs: tuple[np.ndarray, ...] | None = None

    def worst_margin(self) -> float | None:
        """min over checks of rate - (target - 3 stderr); None without checks."""
        if not self.checks:
            return None
        return min(c.rate - (c.target - 3.0 * c.stderr) for c in self.checks)

    def to_dict(self) -> dict:
        out = {
            "samples": self.samples,
            "cost_mean": self.cost_mean,
            "cost_stderr": self.cost_stderr,
            "constraints": [
                {"label": c.label, "rate": c.rate, "stderr": c.stderr,
                 "target": c.target}
                for c in self.checks
            ],
            "terminal_cov": self.terminal_cov.tolist(),
        }
        if self.step_covs is not None:
            out["step_covs"] = [S.tolist() for S in self.step_covs]
        return out


def _binom_stderr(rate: float, n: int) -> float:
    return math.sqrt(max(rate * (1.0 - rate), 0.0) / n)


def rollout(sys: SystemDef, traj: LiftedTrajectory, constraints=(),
            cost: CostSpec | None = None, *, seed: int = 0,
            count: int = 100_000, collect_step_covs: bool = False,
            replay_tol: float = 1e-6) -> MCReport:
    """Simulate the induced affine policy on the true system.

    Draws the basis as independent standard normals, simulates the raw
    dynamics exactly, and scores every supplied constraint and (optionally)
    the stochastic cost per sample.  Deterministic for a fixed seed.
    """
    if count <= 0:
        raise DomainError("sample count must be positive")
    resid = replay_residual(sys, traj)
    if resid > replay_tol:
        raise ReplayError(
            f"trajectory deviates from its own propagation by {resid:g} "
            f"(tol {replay_tol:g}); refusing to roll out an inconsistent plan"
        )

    N, n_x, n_w = sys.N, sys.n_x, sys.n_w
    ell_N = basis_dim(sys, N)
    V0 = traj.V_x[0]

    lccs = [(i, c) for i, c in enumerate(constraints) if isinstance(c, MixedLCC)]
    qccs = [(i, c) for i, c in enumerate(constraints) if isinstance(c, QCCSpec)]
    lcc_hits = np.zeros(len(lccs), dtype=np.int64)
    qcc_hits = np.zeros(len(qccs), dtype=np.int64)
    qcc_white = [solve_triangular(cc_factor(c.Q_cc), np.eye(n_x), lower=True)
                 for _, c in qccs]

    cost_sum = 0.0
    cost_dev_sq = 0.0
    cost_ref = None      # first-chunk mean; keeps the variance sum cancellation-free
    xN_sum = np.zeros(n_x)
    xN_outer = np.zeros((n_x, n_x))
    step_sum = [np.zeros(n_x) for _ in range(N + 1)] if collect_step_covs else None
    step_outer = [np.zeros((n_x, n_x)) for _ in range(N + 1)] if collect_step_covs else None

    done = 0
    while done < count:
        m = min(_CHUNK, count - done)
        Xi = standard_normal_draws(seed, done, m, ell_N)
        X = np.empty((m, N + 1, n_x))
        U = np.empty((m, N, sys.n_u))
        X[:, 0, :] = sys.mu0 + Xi[:, :n_x] @ V0.T
        for k in range(N):
            ell = basis_dim(sys, k)
            U[:, k, :] = traj.mu_u[k] + Xi[:, :ell] @ traj.V_u[k].T
            W = Xi[:, n_x + k * n_w: n_x + (k + 1) * n_w]
            X[:, k + 1, :] = (X[:, k, :] @ sys.A[k].T
                              + U[:, k, :] @ sys.B[k].T
                              + W @ sys.D[k].T)

        if lccs:
            xs = X.reshape(m, -1)
            us = U.reshape(m, -1)
            for j, (_, c) in enumerate(lccs):
                y = xs @ c.a + us @ c.alpha
                lcc_hits[j] += int(np.count_nonzero(y <= c.b))
        for j, (_, c) in enumerate(qccs):
            dev = X[:, c.step, :] - traj.mu_x[c.step]
            z = dev @ qcc_white[j].T
            qcc_hits[j] += int(np.count_nonzero(np.einsum("ij,ij->i", z, z) <= 1.0))

        if cost is not None:
            sample_cost = np.zeros(m)
            for k in range(N):
                sample_cost += np.einsum("ij,jk,ik->i", X[:, k, :], cost.Q[k], X[:, k, :])
                sample_cost += np.einsum("ij,jk,ik->i", U[:, k, :], cost.R[k], U[:, k, :])
            dN = X[:, N, :] - cost.x_star
            sample_cost += np.einsum("ij,jk,ik->i", dN, cost.Q_N, dN)
            if cost_ref is None:
                cost_ref = float(sample_cost.mean())
            cost_sum += float(sample_cost.sum())
            dev = sample_cost - cost_ref
            cost_dev_sq += float(dev @ dev)

        xN_sum += X[:, N, :].sum(axis=0)
        xN_outer += X[:, N, :].T @ X[:, N, :]
        if collect_step_covs:
            for k in range(N + 1):
                step_sum[k] += X[:, k, :].sum(axis=0)
                step_outer[k] += X[:, k, :].T @ X[:, k, :]
        done += m

    checks = []
    for j, (i, c) in enumerate(lccs):
        rate = lcc_hits[j] / count
        checks.append(ConstraintCheck(
            label=f"lcc[{i}]", rate=rate,
            stderr=_binom_stderr(rate, count), target=1.0 - c.eps,
        ))
    for j, (i, c) in enumerate(qccs):
        rate = qcc_hits[j] / count
        checks.append(ConstraintCheck(
            label=f"qcc[{i}]", rate=rate,
            stderr=_binom_stderr(rate, count), target=1.0 - c.eps,
        ))

    def finalize_cov(s, o):
        mean = s / count
        return (o - count * np.outer(mean, mean)) / max(count - 1, 1)

    cost_mean = cost_stderr = None
    if cost is not None:
        # waypoint penalties act on exact means; the sampled part covers the rest
        wp_cost = 0.0
        for wp in cost.waypoints:
            d = traj.mu_x[wp.step] - wp.target
            wp_cost += float(d @ wp.weight @ d)
        raw_mean = cost_sum / count
        cost_mean = wp_cost + raw_mean
        var = max(cost_dev_sq / count - (raw_mean - cost_ref) ** 2, 0.0)
        cost_stderr = math.sqrt(var / count)

    return MCReport(
        samples=count,
        cost_mean=cost_mean,
        cost_stderr=cost_stderr,
        checks=tuple(checks),
        terminal_cov=finalize_cov(xN_sum, xN_outer),
        step_covs=tuple(finalize_cov(s, o) for s, o in zip(step_sum, step_outer))
        if collect_step_covs else None,
    )


def covariance_oracle(sys: SystemDef, traj: LiftedTrajectory,
                      recursion_tol: float = 1e-10) -> list[np.ndarray]:
    """Per-step covariances V_x[k] V_x[k]'.

    For an open-loop trajectory (all V_u zero) the result is also checked
    against the classical recursion Sigma_{k+1} = A Sigma A' + D D'.
    """
    covs = [traj.state_cov(k) for k in range(sys.N + 1)]
    if all(not np.any(v) for v in traj.V_u):
        S = traj.state_cov(0)
        for k in range(sys.N):
            S = sys.A[k] @ S @ sys.A[k].T + sys.D[k] @ sys.D[k].T
            err = float(np.abs(S - covs[k + 1]).max())
            if err > recursion_tol:
                raise ReplayError(
                    f"open-loop covariance recursion mismatch at step {k + 1}: "
                    f"{err:g} exceeds {recursion_tol:g}"
                )
    return covs


def qcc_empirical(L_cc, V, seed: int = 0, count: int = 100_000) -> float:
    """Monte-Carlo estimate of P(||L_cc^{-1} V xi||^2 <= 1), xi standard normal."""
    if count <= 0:
        raise DomainError("sample count must be positive")
    L = np.atleast_2d(np.asarray(L_cc, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    M = solve_triangular(L, V, lower=True) if np.allclose(L, np.tril(L)) \
        else np.linalg.solve(L, V)
    dim = V.shape[1]
    hits = 0
    done = 0
    while done < count:
        m = min(_CHUNK, count - done)
        Xi = standard_normal_draws(seed, done, m, dim)
        z = Xi @ M.T
        hits += int(np.count_nonzero(np.einsum("ij,ij->i", z, z) <= 1.0))
        done += m
    return hits / count
