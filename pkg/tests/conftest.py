import numpy as np
import pytest

import liftplan as lp


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def scalar_sys():
    """A = B = D = 1, Sigma0 = 0, horizon 3."""
    return lp.SystemDef.lti([[1.0]], [[1.0]], [[1.0]], N=3,
                            mu0=[0.0], Sigma0=[[0.0]])


@pytest.fixture
def double_integrator():
    A = [[1.0, 0.1], [0.0, 1.0]]
    B = [[0.005], [0.1]]
    D = [[0.0], [0.05]]
    return lp.SystemDef.lti(A, B, D, N=6, mu0=[1.0, 0.0], Sigma0=0.01 * np.eye(2))


def random_system(rng, n_x=None, n_u=None, n_w=None, N=None, singular_sigma0=False):
    """Random well-scaled LTV system for property tests."""
    n_x = n_x or int(rng.integers(1, 5))
    n_u = n_u or int(rng.integers(1, 3))
    n_w = n_w or int(rng.integers(1, 3))
    N = N or int(rng.integers(2, 11))
    As, Bs, Ds = [], [], []
    for _ in range(N):
        A = rng.normal(size=(n_x, n_x))
        rad = max(abs(np.linalg.eigvals(A)))
        As.append(A / max(rad, 1.0) * 0.95)
        Bs.append(rng.normal(size=(n_x, n_u)) * 0.5)
        Ds.append(rng.normal(size=(n_x, n_w)) * 0.3)
    if singular_sigma0:
        G = rng.normal(size=(n_x, max(n_x - 1, 1)))
    else:
        G = rng.normal(size=(n_x, n_x))
    Sigma0 = G @ G.T * 0.1
    mu0 = rng.normal(size=n_x)
    return lp.SystemDef(As, Bs, Ds, mu0=mu0, Sigma0=Sigma0)


def random_policy(rng, sys, scale=0.3):
    mu_u = [rng.normal(size=sys.n_u) * scale for _ in range(sys.N)]
    V_u = [rng.normal(size=(sys.n_u, lp.basis_dim(sys, k))) * scale
           for k in range(sys.N)]
    return mu_u, V_u


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    """Show the acceptance PASS/FAIL tally even when stdout is captured."""
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
