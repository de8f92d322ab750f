import numpy as np
import pytest

import liftplan as lp
from liftplan.constraints import build_qcc
from liftplan.errors import DomainError, NotPSDError, ShapeError
from liftplan.ir import DecisionIndex

PHI_95 = 1.6448536269514722


@pytest.fixture
def small(rng):
    sys = lp.SystemDef.lti([[1.0, 0.1], [0.0, 1.0]], [[0.0], [0.1]],
                           [[0.0], [0.2]], N=4, mu0=[0.0, 0.0],
                           Sigma0=0.1 * np.eye(2))
    return sys, DecisionIndex.build(sys)


def point_from_traj(sys, idx, traj):
    x = np.zeros(idx.total)
    for k in range(sys.N + 1):
        x[idx.mu_x(k)] = traj.mu_x[k]
        x[idx.V_x(k)] = lp.vec(traj.V_x[k])
        if k < sys.N:
            x[idx.mu_u(k)] = traj.mu_u[k]
            x[idx.V_u(k)] = lp.vec(traj.V_u[k])
    return x


class TestMixedLCCValidation:
    def test_eps_bounds(self):
        for eps in (0.0, 0.5, 0.7, -0.1):
            with pytest.raises(DomainError, match="risk level out of range"):
                lp.MixedLCC(a=[1.0], alpha=[], b=0.0, eps=eps)

    def test_length_checked_at_build(self, small):
        sys, idx = small
        c = lp.MixedLCC(a=np.ones(3), alpha=np.zeros(sys.N), b=1.0, eps=0.05)
        with pytest.raises(ShapeError):
            lp.build_lcc(sys, idx, c)


class TestBuildLCC:
    def test_deterministic_reduction(self, small):
        sys, idx = small
        row = lp.build_lcc(sys, idx, lp.state_lcc(sys, 2, [1.0, 0.0], 2.0, 0.05))
        # evaluate at a point with V_x[2] = 0 and mu_x[2] = (1.5, 0)
        x = np.zeros(idx.total)
        x[idx.mu_x(2)] = [1.5, 0.0]
        assert row.margin(x) == pytest.approx(0.5)
        x[idx.mu_x(2)] = [2.5, 0.0]
        assert row.margin(x) == pytest.approx(-0.5)

    def test_unit_variance_budget(self, small):
        sys, idx = small
        row = lp.build_lcc(sys, idx, lp.state_lcc(sys, 1, [1.0, 0.0], 2.0, 0.05))
        x = np.zeros(idx.total)
        V = np.zeros((2, lp.basis_dim(sys, 1)))
        V[0, 0] = 1.0
        x[idx.V_x(1)] = lp.vec(V)
        # margin = b - phi * ||[1, 0, ...]|| = 2 - 1.644854
        assert row.margin(x) == pytest.approx(2.0 - PHI_95, abs=1e-9)

    def test_control_row_touches_only_control_vars(self, small):
        sys, idx = small
        row = lp.build_lcc(sys, idx, lp.control_lcc(sys, 1, [1.0], 3.0, 0.1))
        u_slice = idx.mu_u(1)
        vu_slice = idx.V_u(1)
        assert all(u_slice.start <= c < u_slice.stop for c in row.head_cols)
        assert all(vu_slice.start <= c < vu_slice.stop for c in row.v_cols)

    def test_multi_step_accumulation(self, small, rng):
        sys, idx = small
        a = rng.normal(size=(sys.N + 1) * sys.n_x)
        alpha = rng.normal(size=sys.N * sys.n_u)
        c = lp.MixedLCC(a=a, alpha=alpha, b=1.0, eps=0.2)
        row = lp.build_lcc(sys, idx, c)
        mu_u = [rng.normal(size=1) for _ in range(sys.N)]
        V_u = [rng.normal(size=(1, lp.basis_dim(sys, k))) * 0.3
               for k in range(sys.N)]
        traj = lp.propagate_trajectory(sys, mu_u, V_u)
        x = point_from_traj(sys, idx, traj)

        # oracle: accumulate mean and padded coefficient row directly
        y0 = sum(a[k * 2:(k + 1) * 2] @ traj.mu_x[k] for k in range(sys.N + 1))
        y0 += sum(alpha[k] * traj.mu_u[k][0] for k in range(sys.N))
        y = np.zeros(lp.basis_dim(sys, sys.N))
        for k in range(sys.N + 1):
            ell = lp.basis_dim(sys, k)
            y[:ell] += a[k * 2:(k + 1) * 2] @ traj.V_x[k]
        for k in range(sys.N):
            ell = lp.basis_dim(sys, k)
            y[:ell] += alpha[k] * traj.V_u[k][0]
        phi = lp.inv_norm_cdf(0.8)
        assert row.margin(x) == pytest.approx(
            1.0 - y0 - phi * np.linalg.norm(y), rel=1e-10, abs=1e-10
        )


class TestSchurBlocks:
    def test_feasible_identity_case(self, small):
        sys, idx = small
        blk = lp.build_terminal_cov(sys, idx, lp.TerminalCovSpec(2.0 * np.eye(2)))
        x = np.zeros(idx.total)
        V = np.zeros((2, lp.basis_dim(sys, sys.N)))
        V[:2, :2] = np.eye(2)
        x[idx.V_x(sys.N)] = lp.vec(V)
        assert blk.min_eig_at(x) >= -1e-12

    def test_infeasible_case(self, small):
        sys, idx = small
        blk = lp.build_terminal_cov(sys, idx, lp.TerminalCovSpec(np.eye(2)))
        x = np.zeros(idx.total)
        V = np.zeros((2, lp.basis_dim(sys, sys.N)))
        V[:2, :2] = 2.0 * np.eye(2)
        x[idx.V_x(sys.N)] = lp.vec(V)
        assert blk.min_eig_at(x) < -1e-6

    def test_boundary_case(self, small, rng):
        sys, idx = small
        V = rng.normal(size=(2, 4))
        V *= np.sqrt(3.0) / np.linalg.norm(V, 2)
        blk = lp.build_terminal_cov(sys, idx, lp.TerminalCovSpec(3.0 * np.eye(2)))
        x = np.zeros(idx.total)
        Vfull = np.zeros((2, lp.basis_dim(sys, sys.N)))
        Vfull[:, :4] = V
        x[idx.V_x(sys.N)] = lp.vec(Vfull)
        assert abs(blk.min_eig_at(x)) <= 1e-8

    def test_schur_equivalence_random(self, rng):
        # [[S, V], [V', I]] >= 0  iff  V V' <= S
        for _ in range(50):
            n = int(rng.integers(2, 5))
            m = int(rng.integers(1, 6))
            V = rng.normal(size=(n, m))
            G = rng.normal(size=(n, n))
            S = G @ G.T + 1e-6 * np.eye(n)
            block = np.block([[S, V], [V.T, np.eye(m)]])
            lhs = np.linalg.eigvalsh(block).min() >= -1e-10
            rhs = np.linalg.eigvalsh(S - V @ V.T).min() >= -1e-10
            assert lhs == rhs


class TestQccBudgets:
    def test_zeta_chi2(self):
        assert lp.inv_chi2_cdf(0.95, 2) == pytest.approx(5.991464547, abs=1e-6)

    def test_quadratic_bound_n1_matches_two_sided_interval(self):
        assert lp.qcc_quadratic_bound(1, 0.05) == pytest.approx(
            1.0 / lp.inv_norm_cdf(0.975) ** 2, abs=1e-12
        )
        # frozen via scipy.stats.norm.ppf cross-check
        assert lp.qcc_quadratic_bound(1, 0.05) == pytest.approx(
            0.2603177716270057, abs=1e-12
        )

    def test_quadratic_bound_n2_composed(self):
        q = (1.0 + np.sqrt(0.95)) / 2.0
        assert q == pytest.approx(0.9873397172404481, abs=1e-12)
        assert lp.qcc_quadratic_bound(2, 0.05) == pytest.approx(
            1.0 / lp.inv_norm_cdf(q) ** 2, abs=1e-12
        )
        # frozen via scipy.stats.norm.ppf cross-check
        assert lp.qcc_quadratic_bound(2, 0.05) == pytest.approx(
            0.199926915450421, abs=1e-12
        )

    def test_bound_monotone_in_eps(self):
        for n in (1, 2, 4, 8):
            budgets = [lp.qcc_quadratic_bound(n, e)
                       for e in np.linspace(0.01, 0.99, 25)]
            assert np.all(np.diff(budgets) > 0)

    def test_bound_diverges_near_one(self):
        assert lp.qcc_quadratic_bound(2, 1 - 1e-9) > 1e4

    def test_domain(self):
        with pytest.raises(DomainError):
            lp.qcc_quadratic_bound(0, 0.05)
        with pytest.raises(DomainError):
            lp.qcc_quadratic_bound(2, 0.0)


class TestDominanceRegimes:
    def test_isotropic_favours_lmi_anisotropic_favours_quadratic(self):
        # n = 2, eps = 0.05: per-eigenvalue caps of the two surrogates
        lmi_cap = 1.0 / lp.inv_chi2_cdf(0.95, 2)
        trace_budget = lp.qcc_quadratic_bound(2, 0.05)
        assert lmi_cap == pytest.approx(0.16690410034766712, abs=1e-12)
        assert trace_budget / 2.0 == pytest.approx(0.0999634577252105, abs=1e-12)
        # equal spectrum (lam, lam): LMI admits the larger lam
        assert lmi_cap > trace_budget / 2.0
        # spiked spectrum (lam, 0): the trace budget admits the larger lam
        assert trace_budget > lmi_cap

    def test_markov_budget_below_trace_budget_small_eps(self):
        # the first-moment budget is the conservative one for small risk
        for n in range(1, 9):
            for eps in np.arange(0.01, 0.201, 0.01):
                assert eps < lp.qcc_quadratic_bound(n, float(eps))

    def test_markov_vs_trace_budget_reversal_boundary(self):
        # the ordering genuinely reverses for high risk in high dimension
        assert 0.4 > lp.qcc_quadratic_bound(8, 0.4)
        assert 0.4 < lp.qcc_quadratic_bound(4, 0.4)


class TestQccRows:
    def test_lmi_block_scalar_budget(self, rng):
        sys = lp.SystemDef.lti([[1.0]], [[1.0]], [[0.3]], N=2, mu0=[0.0],
                               Sigma0=[[0.01]])
        idx = DecisionIndex.build(sys)
        spec = lp.QCCSpec(Q_cc=[[1.0]], eps=0.05, step=2, mode="lmi")
        blk = lp.qcc_lmi(sys, idx, spec)
        cap = 1.0 / lp.inv_chi2_cdf(0.95, 1)   # 1/3.841459
        for scale, feasible in ((0.9, True), (1.1, False)):
            x = np.zeros(idx.total)
            V = np.zeros((1, lp.basis_dim(sys, 2)))
            V[0, 0] = np.sqrt(scale * cap)
            x[idx.V_x(2)] = lp.vec(V)
            assert (blk.min_eig_at(x) >= -1e-12) == feasible

    def test_quadratic_row_scalar_budget(self):
        sys = lp.SystemDef.lti([[1.0]], [[1.0]], [[0.3]], N=2, mu0=[0.0],
                               Sigma0=[[0.01]])
        idx = DecisionIndex.build(sys)
        spec = lp.QCCSpec(Q_cc=[[1.0]], eps=0.05, step=2, mode="quadratic")
        row = lp.build_qcc_quadratic(sys, idx, spec)
        for scale, feasible in ((0.99, True), (1.01, False)):
            x = np.zeros(idx.total)
            V = np.zeros((1, lp.basis_dim(sys, 2)))
            V[0, 0] = np.sqrt(scale * 0.260309)
            x[idx.V_x(2)] = lp.vec(V)
            assert (row.margin(x) >= 0) == feasible

    def test_quadratic_diag_budget_n2(self, small):
        sys, idx = small
        spec = lp.QCCSpec(Q_cc=np.eye(2), eps=0.05, step=sys.N, mode="quadratic")
        row = lp.build_qcc_quadratic(sys, idx, spec)
        budget = lp.qcc_quadratic_bound(2, 0.05)
        for scale, feasible in ((0.999, True), (1.001, False)):
            s = np.sqrt(scale * budget / 2.0)
            x = np.zeros(idx.total)
            V = np.zeros((2, lp.basis_dim(sys, sys.N)))
            V[0, 0] = V[1, 1] = s
            x[idx.V_x(sys.N)] = lp.vec(V)
            assert (row.margin(x) >= 0) == feasible

    def test_markov_tighter_than_quadratic(self):
        sys = lp.SystemDef.lti([[1.0]], [[1.0]], [[0.3]], N=1, mu0=[0.0],
                               Sigma0=[[0.01]])
        idx = DecisionIndex.build(sys)
        spec = lp.QCCSpec(Q_cc=[[1.0]], eps=0.05, step=1, mode="markov")
        row = lp.build_qcc_markov(sys, idx, spec)
        x = np.zeros(idx.total)
        V = np.zeros((1, lp.basis_dim(sys, 1)))
        V[0, 0] = np.sqrt(0.06)   # above 0.05, below 0.260309
        x[idx.V_x(1)] = lp.vec(V)
        assert row.margin(x) < 0
        quad = lp.build_qcc_quadratic(
            sys, idx, lp.QCCSpec(Q_cc=[[1.0]], eps=0.05, step=1, mode="quadratic")
        )
        assert quad.margin(x) > 0

    def test_zero_coefficients_always_feasible(self, small):
        sys, idx = small
        x = np.zeros(idx.total)
        for mode in ("lmi", "quadratic", "markov"):
            spec = lp.QCCSpec(Q_cc=np.eye(2), eps=0.3, step=1, mode=mode)
            out = build_qcc(sys, idx, spec)
            if hasattr(out, "min_eig_at"):
                assert out.min_eig_at(x) >= -1e-12
            else:
                assert out.margin(x) >= 0

    def test_singular_q_rejected(self):
        with pytest.raises(NotPSDError):
            lp.QCCSpec(Q_cc=[[1.0, 0.0], [0.0, 0.0]], eps=0.05, step=1, mode="lmi")

    def test_whitening_uses_triangular_factor(self, small, rng):
        sys, idx = small
        G = rng.normal(size=(2, 2))
        Q = G @ G.T + 0.5 * np.eye(2)
        spec = lp.QCCSpec(Q_cc=Q, eps=0.05, step=sys.N, mode="quadratic")
        row = lp.build_qcc_quadratic(sys, idx, spec)
        V = rng.normal(size=(2, lp.basis_dim(sys, sys.N))) * 0.1
        x = np.zeros(idx.total)
        x[idx.V_x(sys.N)] = lp.vec(V)
        direct = np.trace(np.linalg.solve(Q, V @ V.T))
        assert np.linalg.norm(row.vec_at(x)) ** 2 == pytest.approx(direct, rel=1e-10)
