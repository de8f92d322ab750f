"""Core data model: stochastic LTV system, basis bookkeeping, and the lifted
mean/coefficient representation of state and control trajectories.

Every random state and control is written as

    x_k = mu_x[k] + V_x[k] @ xi_k,      u_k = mu_u[k] + V_u[k] @ xi_k,

where xi_k stacks the initial-state factor with all noise realised up to
step k, so xi_k is standard normal of dimension ell(k) = n_x + k * n_w.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NotPSDError, ShapeError

PSD_EIG_TOL = 1e-10


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _freeze_all(mats: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
    return tuple(_freeze(m) for m in mats)


@dataclass(frozen=True)
class SystemDef:
    """Discrete-time stochastic system x_{k+1} = A_k x_k + B_k u_k + D_k w_k.

    x_0 ~ N(mu0, Sigma0) and w_k ~ N(0, I_{n_w}) are mutually independent.
    """

    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    D: tuple[np.ndarray, ...]
    mu0: np.ndarray
    Sigma0: np.ndarray

    def __init__(self, A, B, D, mu0, Sigma0):
        A = _freeze_all(A)
        B = _freeze_all(B)
        D = _freeze_all(D)
        mu0 = _freeze(np.atleast_1d(np.asarray(mu0, dtype=float)))
        Sigma0 = _freeze(np.atleast_2d(np.asarray(Sigma0, dtype=float)))

        if not (len(A) == len(B) == len(D)) or len(A) == 0:
            raise ShapeError(
                f"matrix lists must share a positive length N, "
                f"got len(A)={len(A)}, len(B)={len(B)}, len(D)={len(D)}"
            )
        n_x = A[0].shape[0]
        n_u = B[0].shape[1]
        n_w = D[0].shape[1]
        for k, (Ak, Bk, Dk) in enumerate(zip(A, B, D)):
            if Ak.shape != (n_x, n_x):
                raise ShapeError(f"A[{k}] has shape {Ak.shape}, expected {(n_x, n_x)}")
            if Bk.shape != (n_x, n_u):
                raise ShapeError(f"B[{k}] has shape {Bk.shape}, expected {(n_x, n_u)}")
            if Dk.shape != (n_x, n_w):
                raise ShapeError(f"D[{k}] has shape {Dk.shape}, expected {(n_x, n_w)}")
        if mu0.shape != (n_x,):
            raise ShapeError(f"mu0 has shape {mu0.shape}, expected {(n_x,)}")
        if Sigma0.shape != (n_x, n_x):
            raise ShapeError(f"Sigma0 has shape {Sigma0.shape}, expected {(n_x, n_x)}")
        if not np.allclose(Sigma0, Sigma0.T, atol=1e-9):
            raise NotPSDError("Sigma0 must be symmetric")
        lam_min = float(np.linalg.eigvalsh(Sigma0).min()) if n_x else 0.0
        if lam_min < -PSD_EIG_TOL:
            raise NotPSDError(f"Sigma0 has negative eigenvalue {lam_min:g}")

        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "Sigma0", Sigma0)

    @property
    def N(self) -> int:
        return len(self.A)

    @property
    def n_x(self) -> int:
        return self.A[0].shape[0]

    @property
    def n_u(self) -> int:
        return self.B[0].shape[1]

    @property
    def n_w(self) -> int:
        return self.D[0].shape[1]

    @classmethod
    def lti(cls, A, B, D, N: int, mu0, Sigma0) -> "SystemDef":
        """Time-invariant convenience constructor: replicates (A, B, D) N times."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return cls([A] * N, [B] * N, [D] * N, mu0, Sigma0)


def basis_dim(sys: SystemDef, k: int) -> int:
    """Dimension ell(k) = n_x + k * n_w of the noise basis available at step k."""
    if not 0 <= k <= sys.N:
        raise IndexError(f"step {k} outside 0..{sys.N}")
    return sys.n_x + k * sys.n_w


@dataclass(frozen=True)
class BasisIndex:
    """Step index together with its basis dimension."""

    k: int
    ell: int

    @classmethod
    def of(cls, sys: SystemDef, k: int) -> "BasisIndex":
        return cls(k=k, ell=basis_dim(sys, k))


def vec(M) -> np.ndarray:
    """Column-major (Fortran order) stacking of a matrix into a vector."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return M.reshape(-1, order="F").copy()


def unvec(v, p: int, q: int) -> np.ndarray:
    """Inverse of :func:`vec`; v must have exactly p*q entries."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != p * q:
        raise ShapeError(f"cannot reshape {v.size} entries into {p}x{q}")
    return v.reshape((p, q), order="F").copy()


def initial_factor(Sigma0) -> np.ndarray:
    """Square factor V0 with V0 @ V0.T == Sigma0.

    Uses Cholesky (lower triangular) when Sigma0 is positive definite and an
    eigenvalue factorisation with clamping otherwise, so that degenerate
    initial distributions are accepted.
    """
    S = np.atleast_2d(np.asarray(Sigma0, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ShapeError(f"Sigma0 must be square, got {S.shape}")
    if not np.allclose(S, S.T, atol=1e-9):
        raise NotPSDError("Sigma0 must be symmetric")
    S = 0.5 * (S + S.T)
    lam, U = np.linalg.eigh(S)
    if lam.min() < -PSD_EIG_TOL:
        raise NotPSDError(f"Sigma0 has negative eigenvalue {lam.min():g}")
    if lam.min() > PSD_EIG_TOL:
        return np.linalg.cholesky(S)
    lam = np.clip(lam, 0.0, None)
    return U @ np.diag(np.sqrt(lam))


@dataclass(frozen=True)
class LiftedTrajectory:
    """Mean vectors and basis-coefficient matrices for states and controls.

    mu_x has N+1 entries of shape (n_x,); V_x[k] has shape (n_x, ell(k)).
    mu_u has N entries of shape (n_u,); V_u[k] has shape (n_u, ell(k)).
    The growing column counts encode causality: step k may only depend on
    noise realised up to step k.
    """

    mu_x: tuple[np.ndarray, ...]
    V_x: tuple[np.ndarray, ...]
    mu_u: tuple[np.ndarray, ...]
    V_u: tuple[np.ndarray, ...]

    def __init__(self, mu_x, V_x, mu_u, V_u):
        mu_x = tuple(_freeze(np.atleast_1d(m)) for m in mu_x)
        V_x = tuple(_freeze(np.atleast_2d(v)) for v in V_x)
        mu_u = tuple(_freeze(np.atleast_1d(m)) for m in mu_u)
        V_u = tuple(_freeze(np.atleast_2d(v)) for v in V_u)

        if len(mu_x) != len(V_x) or len(mu_x) != len(mu_u) + 1 or len(mu_u) != len(V_u):
            raise ShapeError(
                f"expected N+1 state entries and N control entries, got "
                f"{len(mu_x)}/{len(V_x)} states and {len(mu_u)}/{len(V_u)} controls"
            )
        n_x = mu_x[0].shape[0]
        ell0 = V_x[0].shape[1]
        if ell0 != n_x:
            raise ShapeError(f"V_x[0] must have n_x={n_x} columns, got {ell0}")
        n_w = V_x[1].shape[1] - ell0 if len(V_x) > 1 else 0
        if n_w < 0:
            raise ShapeError("basis dimension must be non-decreasing in k")
        for k, (m, v) in enumerate(zip(mu_x, V_x)):
            ell_k = n_x + k * n_w
            if m.shape != (n_x,) or v.shape != (n_x, ell_k):
                raise ShapeError(
                    f"state entry {k}: got mu {m.shape}, V {v.shape}, "
                    f"expected ({n_x},) and ({n_x}, {ell_k})"
                )
        n_u = mu_u[0].shape[0] if mu_u else 0
        for k, (m, v) in enumerate(zip(mu_u, V_u)):
            ell_k = n_x + k * n_w
            if m.shape != (n_u,) or v.shape != (n_u, ell_k):
                raise ShapeError(
                    f"control entry {k}: got mu {m.shape}, V {v.shape}, "
                    f"expected ({n_u},) and ({n_u}, {ell_k})"
                )

        object.__setattr__(self, "mu_x", mu_x)
        object.__setattr__(self, "V_x", V_x)
        object.__setattr__(self, "mu_u", mu_u)
        object.__setattr__(self, "V_u", V_u)

    @property
    def N(self) -> int:
        return len(self.mu_u)

    def state_cov(self, k: int) -> np.ndarray:
        return self.V_x[k] @ self.V_x[k].T

    def control_cov(self, k: int) -> np.ndarray:
        return self.V_u[k] @ self.V_u[k].T

    def validate_against(self, sys: SystemDef, cov_tol: float = 1e-8) -> None:
        """Check shapes against the system and V_x[0] against Sigma0."""
        if self.N != sys.N:
            raise ShapeError(f"trajectory horizon {self.N} != system horizon {sys.N}")
        for k in range(sys.N + 1):
            ell = basis_dim(sys, k)
            if self.V_x[k].shape != (sys.n_x, ell):
                raise ShapeError(
                    f"V_x[{k}] has shape {self.V_x[k].shape}, expected {(sys.n_x, ell)}"
                )
            if k < sys.N and self.V_u[k].shape != (sys.n_u, ell):
                raise ShapeError(
                    f"V_u[{k}] has shape {self.V_u[k].shape}, expected {(sys.n_u, ell)}"
                )
        err = np.linalg.norm(self.state_cov(0) - sys.Sigma0)
        if err > cov_tol:
            raise ShapeError(
                f"V_x[0] V_x[0]^T deviates from Sigma0 by {err:g} (tol {cov_tol:g})"
            )
