"""Chance/covariance constraint compilers.

Linear chance constraints compile exactly to second-order-cone rows; the
terminal covariance bound becomes a Schur-complement PSD block; quadratic
(ellipsoid) chance constraints get three interchangeable surrogates:

  * ``lmi``        chi-square confidence ellipsoid inside the target set,
  * ``quadratic``  trace budget from the hypercube-in-sphere inclusion,
  * ``markov``     first-moment (Markov inequality) trace budget.

All three act on the same whitened coefficient matrix L_cc^{-1} V_x[i].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DomainError, NotPSDError, ShapeError, UnsupportedConstraintError
from .ir import DecisionIndex, PSDBlock, SOCRow
from .quantiles import inv_chi2_cdf, inv_norm_cdf
from .system import SystemDef, basis_dim


@dataclass(frozen=True)
class MixedLCC:
    """P( a' x_{0:N} + alpha' u_{0:N-1} <= b ) >= 1 - eps.

    ``a`` stacks one block of size n_x per step 0..N, ``alpha`` one block of
    size n_u per step 0..N-1; either may be all zero.
    """

    a: np.ndarray
    alpha: np.ndarray
    b: float
    eps: float

    def __init__(self, a, alpha, b, eps):
        a = np.asarray(a, dtype=float).ravel().copy()
        alpha = np.asarray(alpha, dtype=float).ravel().copy()
        eps = float(eps)
        if not 0.0 < eps < 0.5:
            raise DomainError(
                f"risk level out of range: eps={eps:g} must lie in (0, 0.5)"
            )
        a.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "b", float(b))
        object.__setattr__(self, "eps", eps)

    def state_block(self, sys: SystemDef, k: int) -> np.ndarray:
        return self.a[k * sys.n_x:(k + 1) * sys.n_x]

    def control_block(self, sys: SystemDef, k: int) -> np.ndarray:
        return self.alpha[k * sys.n_u:(k + 1) * sys.n_u]

    def touched_state_steps(self, sys: SystemDef):
        return [k for k in range(sys.N + 1) if np.any(self.state_block(sys, k))]

    def touched_control_steps(self, sys: SystemDef):
        return [k for k in range(sys.N) if np.any(self.control_block(sys, k))]


@dataclass(frozen=True)
class TerminalCovSpec:
    """Terminal covariance bound V_x[N] V_x[N]' <= Sigma_f."""

    Sigma_f: np.ndarray

    def __init__(self, Sigma_f):
        S = np.atleast_2d(np.asarray(Sigma_f, dtype=float))
        if S.shape[0] != S.shape[1] or not np.allclose(S, S.T, atol=1e-9):
            raise NotPSDError("Sigma_f must be square symmetric")
        if float(np.linalg.eigvalsh(S).min()) <= 0.0:
            raise NotPSDError("Sigma_f must be positive definite")
        S = 0.5 * (S + S.T)
        S.setflags(write=False)
        object.__setattr__(self, "Sigma_f", S)


class QCCMode(enum.Enum):
    LMI = "lmi"
    QUADRATIC = "quadratic"
    MARKOV = "markov"


@dataclass(frozen=True)
class QCCSpec:
    """P( (x_i - E x_i)' Q_cc^{-1} (x_i - E x_i) <= 1 ) >= 1 - eps at step i."""

    Q_cc: np.ndarray
    eps: float
    step: int
    mode: QCCMode

    def __init__(self, Q_cc, eps, step, mode):
        Q = np.atleast_2d(np.asarray(Q_cc, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, atol=1e-9):
            raise NotPSDError("Q_cc must be square symmetric")
        if float(np.linalg.eigvalsh(Q).min()) <= 0.0:
            raise NotPSDError("Q_cc must be positive definite")
        eps = float(eps)
        if not 0.0 < eps < 1.0:
            raise DomainError(f"risk level out of range: eps={eps:g} must lie in (0, 1)")
        Q = 0.5 * (Q + Q.T)
        Q.setflags(write=False)
        object.__setattr__(self, "Q_cc", Q)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "step", int(step))
        object.__setattr__(self, "mode", QCCMode(mode))


ConstraintSpec = MixedLCC | TerminalCovSpec | QCCSpec


def cc_factor(Q_cc) -> np.ndarray:
    """Lower-triangular L with L L' = Q_cc (Cholesky; must be PD)."""
    Q = np.atleast_2d(np.asarray(Q_cc, dtype=float))
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise NotPSDError("Q_cc must be positive definite") from exc


def build_lcc(sys: SystemDef, idx: DecisionIndex, c: MixedLCC, label: str = "lcc") -> SOCRow:
    """Exact second-order-cone row: (b - y0(x)) >= phi * ||y(x)||.

    y0 collects the mean contributions; y accumulates a'V_x and alpha'V_u per
    step, each padded to the widest basis touched by the constraint.
    """
    if c.a.shape != ((sys.N + 1) * sys.n_x,):
        raise ShapeError(
            f"a has {c.a.size} entries, expected {(sys.N + 1) * sys.n_x}"
        )
    if c.alpha.shape != (sys.N * sys.n_u,):
        raise ShapeError(
            f"alpha has {c.alpha.size} entries, expected {sys.N * sys.n_u}"
        )
    phi = inv_norm_cdf(1.0 - c.eps)

    s_steps = c.touched_state_steps(sys)
    u_steps = c.touched_control_steps(sys)
    if not s_steps and not u_steps:
        raise ShapeError("constraint touches no variable")
    vec_dim = max(
        [basis_dim(sys, k) for k in s_steps]
        + [basis_dim(sys, k) for k in u_steps]
    )

    head_cols, head_vals = [], []
    v_rows, v_cols, v_vals = [], [], []
    for k in s_steps:
        blk = c.state_block(sys, k)
        nz = np.nonzero(blk)[0]
        head_cols.append(idx.mu_x_off[k] + nz)
        head_vals.append(-blk[nz])
        ell = basis_dim(sys, k)
        # y[col] += phi * sum_r blk[r] * V_x[k][r, col]
        v_rows.append(np.repeat(np.arange(ell), nz.size))
        v_cols.append(idx.V_x_off[k]
                      + np.repeat(np.arange(ell) * sys.n_x, nz.size)
                      + np.tile(nz, ell))
        v_vals.append(np.tile(phi * blk[nz], ell))
    for k in u_steps:
        blk = c.control_block(sys, k)
        nz = np.nonzero(blk)[0]
        head_cols.append(idx.mu_u_off[k] + nz)
        head_vals.append(-blk[nz])
        ell = basis_dim(sys, k)
        v_rows.append(np.repeat(np.arange(ell), nz.size))
        v_cols.append(idx.V_u_off[k]
                      + np.repeat(np.arange(ell) * sys.n_u, nz.size)
                      + np.tile(nz, ell))
        v_vals.append(np.tile(phi * blk[nz], ell))

    return SOCRow(
        vec_dim=vec_dim,
        head_cols=np.concatenate(head_cols),
        head_vals=np.concatenate(head_vals),
        head_const=c.b,
        v_rows=np.concatenate(v_rows),
        v_cols=np.concatenate(v_cols),
        v_vals=np.concatenate(v_vals),
        v_const=np.zeros(vec_dim),
        label=label,
    )


def _coeff_psd_block(sys: SystemDef, idx: DecisionIndex, step: int,
                     top_left: np.ndarray, label: str) -> PSDBlock:
    """PSD block [[top_left, V_x[step]], [V_x[step]', I]] over the decision vars."""
    n_x = sys.n_x
    ell = basis_dim(sys, step)
    side = n_x + ell
    const = np.zeros((side, side))
    const[:n_x, :n_x] = top_left
    const[n_x:, n_x:] = np.eye(ell)
    # entry (r, n_x + c) carries variable V_x[step][r, c]
    cs = np.repeat(np.arange(ell), n_x)
    rs = np.tile(np.arange(n_x), ell)
    return PSDBlock(
        side=side,
        const=const,
        e_i=rs,
        e_j=n_x + cs,
        e_cols=idx.V_x_off[step] + cs * n_x + rs,
        e_vals=np.ones(n_x * ell),
        label=label,
    )


def build_terminal_cov(sys: SystemDef, idx: DecisionIndex, c: TerminalCovSpec) -> PSDBlock:
    """Schur-complement form of V_x[N] V_x[N]' <= Sigma_f."""
    if c.Sigma_f.shape != (sys.n_x, sys.n_x):
        raise ShapeError(
            f"Sigma_f has shape {c.Sigma_f.shape}, expected {(sys.n_x, sys.n_x)}"
        )
    return _coeff_psd_block(sys, idx, sys.N, c.Sigma_f, "terminal_cov")


def qcc_lmi(sys: SystemDef, idx: DecisionIndex, c: QCCSpec) -> PSDBlock:
    """Confidence-ellipsoid surrogate [[Q_cc/zeta, V],[V', I]] >= 0 with
    zeta the (1-eps) chi-square quantile in n_x degrees of freedom."""
    if c.Q_cc.shape != (sys.n_x, sys.n_x):
        raise ShapeError(
            f"Q_cc has shape {c.Q_cc.shape}, expected {(sys.n_x, sys.n_x)}"
        )
    zeta = inv_chi2_cdf(1.0 - c.eps, sys.n_x)
    return _coeff_psd_block(sys, idx, c.step, c.Q_cc / zeta, f"qcc_lmi[{c.step}]")


def qcc_quadratic_bound(n: int, eps: float) -> float:
    """Trace budget 1 / Phi^{-1}((1 + (1-eps)^{1/n}) / 2)^2.

    Any centered Gaussian whose whitened covariance trace stays below this
    budget lies in the unit ball with probability at least 1 - eps.
    """
    if n < 1:
        raise DomainError("dimension must be at least 1")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"risk level out of range: eps={eps:g}")
    q = (1.0 + (1.0 - eps) ** (1.0 / n)) / 2.0
    return 1.0 / inv_norm_cdf(q) ** 2


def _whitened_soc(sys: SystemDef, idx: DecisionIndex, c: QCCSpec,
                  budget: float, label: str) -> SOCRow:
    # || (I (x) L^{-1}) vec(V_x[i]) || <= sqrt(budget); L^{-1} is applied via
    # a triangular solve so Q_cc^{-1} is never formed.
    L = cc_factor(c.Q_cc)
    Linv = solve_triangular(L, np.eye(sys.n_x), lower=True)
    n_x = sys.n_x
    ell = basis_dim(sys, c.step)
    r, j = np.nonzero(Linv)
    nnz = r.size
    reps = np.repeat(np.arange(ell), nnz)
    return SOCRow(
        vec_dim=n_x * ell,
        head_cols=np.zeros(0, dtype=np.int64),
        head_vals=np.zeros(0),
        head_const=math.sqrt(budget),
        v_rows=np.tile(r, ell) + reps * n_x,
        v_cols=idx.V_x_off[c.step] + np.tile(j, ell) + reps * n_x,
        v_vals=np.tile(Linv[r, j], ell),
        v_const=np.zeros(n_x * ell),
        label=label,
    )


def build_qcc_quadratic(sys: SystemDef, idx: DecisionIndex, c: QCCSpec) -> SOCRow:
    """Trace-budget surrogate vec(V)'(I (x) Q_cc^{-1})vec(V) <= budget."""
    if c.Q_cc.shape != (sys.n_x, sys.n_x):
        raise ShapeError(
            f"Q_cc has shape {c.Q_cc.shape}, expected {(sys.n_x, sys.n_x)}"
        )
    budget = qcc_quadratic_bound(sys.n_x, c.eps)
    return _whitened_soc(sys, idx, c, budget, f"qcc_quadratic[{c.step}]")


def build_qcc_markov(sys: SystemDef, idx: DecisionIndex, c: QCCSpec) -> SOCRow:
    """Markov-inequality surrogate: whitened trace bounded by eps itself."""
    if c.Q_cc.shape != (sys.n_x, sys.n_x):
        raise ShapeError(
            f"Q_cc has shape {c.Q_cc.shape}, expected {(sys.n_x, sys.n_x)}"
        )
    return _whitened_soc(sys, idx, c, c.eps, f"qcc_markov[{c.step}]")


def build_qcc(sys: SystemDef, idx: DecisionIndex, c: QCCSpec):
    if c.mode is QCCMode.LMI:
        return qcc_lmi(sys, idx, c)
    if c.mode is QCCMode.QUADRATIC:
        return build_qcc_quadratic(sys, idx, c)
    if c.mode is QCCMode.MARKOV:
        return build_qcc_markov(sys, idx, c)
    raise UnsupportedConstraintError(f"unknown QCC mode {c.mode}")


# -- convenience constructors -------------------------------------------------

def state_lcc(sys: SystemDef, k: int, a_k, b: float, eps: float) -> MixedLCC:
    """Single-step state constraint P(a_k' x_k <= b) >= 1 - eps."""
    a_k = np.asarray(a_k, dtype=float).ravel()
    if a_k.shape != (sys.n_x,):
        raise ShapeError(f"a_k has shape {a_k.shape}, expected {(sys.n_x,)}")
    if not 0 <= k <= sys.N:
        raise IndexError(f"step {k} outside 0..{sys.N}")
    a = np.zeros((sys.N + 1) * sys.n_x)
    a[k * sys.n_x:(k + 1) * sys.n_x] = a_k
    return MixedLCC(a=a, alpha=np.zeros(sys.N * sys.n_u), b=b, eps=eps)


def control_lcc(sys: SystemDef, k: int, alpha_k, b: float, eps: float) -> MixedLCC:
    """Single-step control constraint P(alpha_k' u_k <= b) >= 1 - eps."""
    alpha_k = np.asarray(alpha_k, dtype=float).ravel()
    if alpha_k.shape != (sys.n_u,):
        raise ShapeError(f"alpha_k has shape {alpha_k.shape}, expected {(sys.n_u,)}")
    if not 0 <= k < sys.N:
        raise IndexError(f"step {k} outside 0..{sys.N - 1}")
    alpha = np.zeros(sys.N * sys.n_u)
    alpha[k * sys.n_u:(k + 1) * sys.n_u] = alpha_k
    return MixedLCC(a=np.zeros((sys.N + 1) * sys.n_x), alpha=alpha, b=b, eps=eps)


def control_box_lccs(sys: SystemDef, u_max: float, eps: float) -> list[MixedLCC]:
    """|u_k^(j)| <= u_max as two one-sided constraints per component and step."""
    out = []
    for k in range(sys.N):
        for j in range(sys.n_u):
            e = np.zeros(sys.n_u)
            e[j] = 1.0
            out.append(control_lcc(sys, k, e, u_max, eps))
            out.append(control_lcc(sys, k, -e, u_max, eps))
    return out
