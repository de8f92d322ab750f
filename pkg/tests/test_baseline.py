import numpy as np
import pytest

import liftplan as lp
from liftplan.errors import UnsupportedConstraintError


class TestRiccatiGains:
    def test_one_step_hand_value(self):
        sys = lp.SystemDef.lti([[1.0]], [[1.0]], [[0.0]], N=1, mu0=[0.0],
                               Sigma0=[[0.0]])
        cost = lp.CostSpec.create(sys, Q=np.zeros((1, 1)), R=np.eye(1),
                                  Q_N=np.eye(1))
        K = lp.riccati_gains(sys, cost)
        assert K[0][0, 0] == pytest.approx(-0.5)

    def test_no_actuation_means_zero_gain(self):
        sys = lp.SystemDef.lti([[0.9]], [[0.0]], [[1.0]], N=4, mu0=[0.0],
                               Sigma0=[[1.0]])
        cost = lp.CostSpec.create(sys, Q=np.eye(1), R=np.eye(1), Q_N=np.eye(1))
        for K in lp.riccati_gains(sys, cost):
            assert K[0, 0] == 0.0

    def test_stabilises_integrator_chain(self):
        sys = lp.quadrotor_zoh(0.1, 0.05, 0.05)
        cost = lp.CostSpec.create(
            sys,
            Q=np.kron(np.diag([1.0, 0.1, 0.01, 1e-3]), np.eye(2)),
            R=np.eye(2),
            Q_N=1e6 * np.kron(np.diag([50.0, 2.0, 0.5, 0.1]), np.eye(2)),
        )
        gains = lp.riccati_gains(sys, cost)
        # mid-horizon gain should stabilise the time-invariant plant
        K = gains[10]
        rad = max(abs(np.linalg.eigvals(sys.A[0] + sys.B[0] @ K)))
        assert rad < 1.0


class TestClosedLoopCovariances:
    def test_recursion_invariant(self, rng, double_integrator):
        sys = double_integrator
        cost = lp.CostSpec.create(sys, Q=np.eye(2), R=np.eye(1), Q_N=np.eye(2))
        gains = lp.riccati_gains(sys, cost)
        Sigma = lp.closed_loop_covariances(sys, gains)
        for k in range(sys.N):
            Acl = sys.A[k] + sys.B[k] @ gains[k]
            S = Acl @ Sigma[k] @ Acl.T + sys.D[k] @ sys.D[k].T
            assert np.abs(S - Sigma[k + 1]).max() <= 1e-10


class TestSolveBaseline:
    def make(self, sys):
        cost = lp.CostSpec.create(sys, Q=0.5 * np.eye(sys.n_x),
                                  R=np.eye(sys.n_u), Q_N=2 * np.eye(sys.n_x))
        cons = [lp.state_lcc(sys, k, np.eye(sys.n_x)[0], 1.4, 0.05)
                for k in range(sys.N + 1)]
        cons += lp.control_box_lccs(sys, 10.0, 0.05)
        return cost, cons

    def test_no_uncertainty_matches_exact(self):
        sys = lp.SystemDef.lti([[1.0, 0.1], [0.0, 1.0]], [[0.005], [0.1]],
                               [[0.0], [0.0]], N=6, mu0=[1.0, 0.0],
                               Sigma0=np.zeros((2, 2)))
        cost, cons = self.make(sys)
        rb = lp.solve_baseline(sys, cost, cons)
        re = lp.solve(lp.compile_program(sys, cost, cons))
        assert rb.status is lp.Status.OPTIMAL
        assert rb.objective == pytest.approx(re.objective, rel=1e-6)

    def test_embedding_matches_propagated_covariance(self, double_integrator):
        sys = double_integrator
        cost, cons = self.make(sys)
        res = lp.solve_baseline(sys, cost, cons)
        assert res.status is lp.Status.OPTIMAL
        gains = lp.riccati_gains(sys, cost)
        Sigma = lp.closed_loop_covariances(sys, gains)
        for k in range(sys.N + 1):
            assert np.abs(res.trajectory.state_cov(k) - Sigma[k]).max() <= 1e-8

    def test_baseline_point_feasible_for_exact_program(self, double_integrator):
        sys = double_integrator
        cost, cons = self.make(sys)
        res = lp.solve_baseline(sys, cost, cons)
        prog = lp.compile_program(sys, cost, cons)
        idx = prog.index
        x = np.zeros(idx.total)
        t = res.trajectory
        for k in range(sys.N + 1):
            x[idx.mu_x(k)] = t.mu_x[k]
            x[idx.V_x(k)] = lp.vec(t.V_x[k])
            if k < sys.N:
                x[idx.mu_u(k)] = t.mu_u[k]
                x[idx.V_u(k)] = lp.vec(t.V_u[k])
        assert prog.eq_residual(x) <= 1e-8
        for row in prog.socs:
            assert row.margin(x) >= -1e-7

    def test_exact_dominates_baseline(self, double_integrator):
        sys = double_integrator
        cost, cons = self.make(sys)
        rb = lp.solve_baseline(sys, cost, cons)
        re = lp.solve(lp.compile_program(sys, cost, cons))
        assert re.objective <= rb.objective + 1e-6

    def test_reported_cost_is_full_stochastic_cost(self, double_integrator):
        sys = double_integrator
        cost, cons = self.make(sys)
        res = lp.solve_baseline(sys, cost, cons)
        assert res.objective == pytest.approx(
            lp.evaluate_cost(sys, cost, res.trajectory), rel=1e-6
        )

    def test_multi_step_constraint_rejected(self, double_integrator):
        sys = double_integrator
        cost, _ = self.make(sys)
        a = np.zeros((sys.N + 1) * sys.n_x)
        a[0] = a[sys.n_x] = 1.0   # touches steps 0 and 1
        multi = lp.MixedLCC(a=a, alpha=np.zeros(sys.N * sys.n_u), b=1.0, eps=0.05)
        with pytest.raises(UnsupportedConstraintError):
            lp.solve_baseline(sys, cost, [multi])

    def test_covariance_style_constraints_rejected(self, double_integrator):
        sys = double_integrator
        cost, _ = self.make(sys)
        with pytest.raises(UnsupportedConstraintError):
            lp.solve_baseline(sys, cost, [lp.TerminalCovSpec(np.eye(2))])
        with pytest.raises(UnsupportedConstraintError):
            lp.solve_baseline(
                sys, cost,
                [lp.QCCSpec(Q_cc=np.eye(2), eps=0.05, step=sys.N, mode="lmi")],
            )
