"""Interior-point backend adapter (Clarabel).

The IR is lowered to Clarabel's standard form

    min 1/2 x'Px + q'x   s.t.   A x + s = b,  s in K,

with equalities in the zero cone, degenerate SOC rows in the nonnegative
cone, and PSD blocks in scaled-triangle (svec) form: upper triangle,
column-major, off-diagonal entries multiplied by sqrt(2).

The factored objective sum ||F_i x + g_i||^2 is passed through the native
quadratic term, P = 2 F'F and q = 2 F'g.  An SOC-epigraph lowering of the
same terms is also exact, but with the 1e6-scale terminal weights of the
benchmark scenarios it loses several digits of conditioning and the solver
stalls, so the QP form is used for this backend.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

from .ir import ConicProgram
from .system import LiftedTrajectory, unvec


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_LIMIT = "numerical_limit"


@dataclass(frozen=True)
class SolveOptions:
    tolerance: float = 1e-8
    max_iters: int = 200
    verbose: bool = False


@dataclass(frozen=True)
class SolveResult:
    status: Status
    objective: float | None
    trajectory: LiftedTrajectory | None
    iterations: int
    solve_time: float
    diagnostics: str = ""

    def __post_init__(self):
        if (self.trajectory is not None) != (self.status is Status.OPTIMAL):
            raise ValueError("trajectory must be present exactly when OPTIMAL")


@dataclass(frozen=True)
class RawResult:
    status: Status
    x: np.ndarray | None
    objective: float | None
    iterations: int
    solve_time: float
    diagnostics: str = ""


_EQ_RESIDUAL_SCALE = 1e-6


def _lower(p: ConicProgram):
    """Assemble (P, q, A, b, cones) in the backend's standard form."""
    n = p.n
    blocks_A, blocks_b, cones = [], [], []

    # zero cone: equalities
    if p.eq.nrows:
        A_eq = sp.csr_matrix(
            (p.eq.vals, (p.eq.rows, p.eq.cols)), shape=(p.eq.nrows, n)
        )
        blocks_A.append(A_eq)
        blocks_b.append(p.eq.b)
        cones.append(clarabel.ZeroConeT(p.eq.nrows))

    # nonnegative cone: SOC rows whose vector part is empty
    lin_rows = [s for s in p.socs if s.vec_dim == 0]
    if lin_rows:
        r_idx, c_idx, vals, consts = [], [], [], []
        for i, s in enumerate(lin_rows):
            r_idx.append(np.full(s.head_cols.size, i, dtype=np.int64))
            c_idx.append(s.head_cols)
            vals.append(-s.head_vals)
            consts.append(s.head_const)
        blocks_A.append(sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))),
            shape=(len(lin_rows), n),
        ))
        blocks_b.append(np.asarray(consts, dtype=float))
        cones.append(clarabel.NonnegativeConeT(len(lin_rows)))

    # genuine second-order cones
    for s in p.socs:
        if s.vec_dim == 0:
            continue
        dim = 1 + s.vec_dim
        rows = np.concatenate([np.zeros(s.head_cols.size, dtype=np.int64),
                               1 + s.v_rows])
        cols = np.concatenate([s.head_cols, s.v_cols])
        vals = np.concatenate([-s.head_vals, -s.v_vals])
        blocks_A.append(sp.csr_matrix((vals, (rows, cols)), shape=(dim, n)))
        b = np.concatenate([[s.head_const], s.v_const])
        blocks_b.append(b)
        cones.append(clarabel.SecondOrderConeT(dim))

    # PSD blocks in scaled svec form
    rt2 = np.sqrt(2.0)
    for blk in p.psds:
        side = blk.side
        dim = side * (side + 1) // 2
        # upper triangle, column-major: (r, c) with r <= c -> c(c+1)/2 + r
        tri = blk.e_j * (blk.e_j + 1) // 2 + blk.e_i
        scale = np.where(blk.e_i == blk.e_j, 1.0, rt2)
        A_blk = sp.csr_matrix(
            (-blk.e_vals * scale, (tri, blk.e_cols)), shape=(dim, n)
        )
        b_blk = np.zeros(dim)
        iu, ju = np.triu_indices(side)
        b_blk[ju * (ju + 1) // 2 + iu] = blk.const[iu, ju] * np.where(iu == ju, 1.0, rt2)
        blocks_A.append(A_blk)
        blocks_b.append(b_blk)
        cones.append(clarabel.PSDTriangleConeT(side))

    if blocks_A:
        A = sp.vstack(blocks_A, format="csc")
        b = np.concatenate(blocks_b)
    else:
        A = sp.csc_matrix((0, n))
        b = np.zeros(0)

    # native quadratic objective from the factored terms
    q = np.zeros(n)
    if p.obj_lin_cols.size:
        np.add.at(q, p.obj_lin_cols, p.obj_lin_vals)
    if p.obj_terms:
        F = sp.vstack([t.F for t in p.obj_terms], format="csc")
        g = np.concatenate([t.g for t in p.obj_terms])
        P = (2.0 * (F.T @ F)).tocsc()
        q = q + 2.0 * (F.T @ g)
    else:
        P = sp.csc_matrix((n, n))
    return P, q, A, b, cones


_STATUS_MAP = {
    "Solved": Status.OPTIMAL,
    "AlmostSolved": Status.OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
    "AlmostDualInfeasible": Status.UNBOUNDED,
}

_POLISH_MARGIN = 1e-4
_REDUCED_DUAL = 1e-6
_REDUCED_GAP = 1e-6
_REDUCED_CONE = 1e-5


def _passes_reduced_certificate(p: ConicProgram, solution) -> bool:
    """Accept a failed-status iterate when it certifiably solves the problem
    at reduced tolerances.

    The benchmark instances span thirteen decades between the initial
    covariance and the terminal weights, so the 1e-8 feasibility target can
    sit below the attainable floating-point floor; the interior-point run
    then ends in MaxIterations/NumericalError with an essentially converged
    iterate.  Optimality is certified by the solver's dual residual and
    primal-dual gap; feasibility is re-checked independently row by row on
    the original (unscaled) data, so a genuinely infeasible problem cannot
    slip through.
    """
    if solution.r_dual > _REDUCED_DUAL:
        return False
    gap = abs(solution.obj_val - solution.obj_val_dual)
    if gap > _REDUCED_GAP * max(1.0, abs(solution.obj_val)):
        return False
    x = np.asarray(solution.x[:p.n])
    if not np.all(np.isfinite(x)):
        return False
    b_scale = 1.0 + (np.abs(p.eq.b).max() if p.eq.nrows else 0.0)
    if p.eq_residual(x) > _EQ_RESIDUAL_SCALE * b_scale:
        return False
    for s in p.socs:
        if s.margin(x) < -_REDUCED_CONE * (1.0 + abs(s.head_at(x))):
            return False
    for blk in p.psds:
        if blk.min_eig_at(x) < -_REDUCED_CONE * (1.0 + np.abs(blk.const).max()):
            return False
    return True


def _polish_inactive(p: ConicProgram, x: np.ndarray) -> np.ndarray | None:
    """Refine x through the equality-KKT system when no cone is active.

    Interior-point termination leaves an O(tolerance * scale) objective gap;
    when every inequality cone is strictly slack the optimum is the solution
    of an equality-constrained QP, which one sparse linear solve recovers to
    near machine precision.  Returns None whenever polishing does not apply
    or does not verifiably improve the iterate.
    """
    if p.eq.nrows == 0 or not p.obj_terms:
        return None
    for s in p.socs:
        if s.margin(x) < _POLISH_MARGIN * (1.0 + abs(s.head_at(x))):
            return None
    for blk in p.psds:
        if blk.min_eig_at(x) < _POLISH_MARGIN:
            return None

    n = p.n
    F = sp.vstack([t.F for t in p.obj_terms], format="csr")
    g = np.concatenate([t.g for t in p.obj_terms])
    P = 2.0 * (F.T @ F)
    q = 2.0 * (F.T @ g)
    if p.obj_lin_cols.size:
        np.add.at(q, p.obj_lin_cols, p.obj_lin_vals)
    A = p.eq.matrix(n)
    m = p.eq.nrows
    kkt = sp.bmat([[P, A.T], [A, None]], format="csc")
    rhs = np.concatenate([-q, p.eq.b])
    try:
        sol = sp.linalg.spsolve(kkt, rhs)
    except Exception:
        return None
    x_new = np.asarray(sol[:n])
    if not np.all(np.isfinite(x_new)):
        return None
    if p.eq_residual(x_new) > max(1e-9 * (1.0 + np.abs(p.eq.b).max()),
                                  p.eq_residual(x)):
        return None
    for s in p.socs:
        if s.margin(x_new) < 0.0:
            return None
    for blk in p.psds:
        if blk.min_eig_at(x_new) < -1e-9:
            return None
    if p.objective_at(x_new) > p.objective_at(x):
        return None
    return x_new


def solve_raw(p: ConicProgram, options: SolveOptions | None = None) -> RawResult:
    """Solve the IR and return the flat primal point (no extraction).

    A first attempt runs with the backend defaults; if it ends in a raw
    numerical failure, one retry with elevated static regularization usually
    recovers a clean optimum or infeasibility certificate (the benchmark
    instances are poorly scaled enough to break the KKT line search near
    certificates).
    """
    opts = options or SolveOptions()
    P, q, A, b, cones = _lower(p)

    t0 = time.perf_counter()
    name = ""
    for attempt, static_reg in enumerate((None, 1e-7)):
        settings = clarabel.DefaultSettings()
        settings.verbose = opts.verbose
        settings.max_iter = opts.max_iters
        # absolute gap governs: objective comparisons across methods need
        # absolute accuracy even when the objective is large
        settings.tol_gap_abs = opts.tolerance
        settings.tol_gap_rel = min(opts.tolerance, 1e-10)
        settings.tol_feas = opts.tolerance
        if static_reg is not None:
            settings.static_regularization_constant = static_reg

        solution = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()

        attempt_name = str(solution.status)
        if attempt:
            attempt_name += f"+retry(reg={static_reg:g})"
        name = name + " -> " + attempt_name if name else attempt_name
        status = _STATUS_MAP.get(str(solution.status), Status.NUMERICAL_LIMIT)
        if status is Status.NUMERICAL_LIMIT and \
                _passes_reduced_certificate(p, solution):
            status = Status.OPTIMAL
            name += "+reduced-certificate"
        if status is not Status.NUMERICAL_LIMIT:
            break
    elapsed = time.perf_counter() - t0
    iters = int(solution.iterations)

    if status is not Status.OPTIMAL:
        return RawResult(status=status, x=None, objective=None,
                         iterations=iters, solve_time=elapsed,
                         diagnostics=f"backend status {name}")

    x = np.asarray(solution.x[:p.n])
    resid = p.eq_residual(x)
    tol = _EQ_RESIDUAL_SCALE * (1.0 + (np.abs(p.eq.b).max() if p.eq.nrows else 0.0))
    if resid > tol:
        return RawResult(status=Status.NUMERICAL_LIMIT, x=None, objective=None,
                         iterations=iters, solve_time=elapsed,
                         diagnostics=f"equality residual {resid:g} exceeds {tol:g}")
    polished = _polish_inactive(p, x)
    if polished is not None:
        x = polished
        name += "+polish"
    return RawResult(status=Status.OPTIMAL, x=x, objective=p.objective_at(x),
                     iterations=iters, solve_time=elapsed,
                     diagnostics=f"backend status {name}")


def extract_trajectory(p: ConicProgram, x: np.ndarray) -> LiftedTrajectory:
    idx = p.index
    if idx is None:
        raise ValueError("program carries no decision index")
    mu_x = [x[idx.mu_x(k)].copy() for k in range(idx.N + 1)]
    V_x = [unvec(x[idx.V_x(k)], idx.n_x, idx.ell(k)) for k in range(idx.N + 1)]
    mu_u = [x[idx.mu_u(k)].copy() for k in range(idx.N)]
    V_u = [unvec(x[idx.V_u(k)], idx.n_u, idx.ell(k)) for k in range(idx.N)]
    return LiftedTrajectory(mu_x=mu_x, V_x=V_x, mu_u=mu_u, V_u=V_u)


def solve(p: ConicProgram, options: SolveOptions | None = None) -> SolveResult:
    """Solve and extract the lifted trajectory on success."""
    raw = solve_raw(p, options)
    traj = extract_trajectory(p, raw.x) if raw.status is Status.OPTIMAL else None
    return SolveResult(
        status=raw.status,
        objective=raw.objective,
        trajectory=traj,
        iterations=raw.iterations,
        solve_time=raw.solve_time,
        diagnostics=raw.diagnostics,
    )
