import numpy as np
import pytest

from tensor_split import (OneFormField, SolveOptions, builtin_spec, kernel_basis, l2_inner,
                          make_grid, sample_metric)

SPECTRAL = SolveOptions(rel_tol=1e-10, preconditioner="spectral")


def metric_for(name, n=2, N=32, order=4):
    return sample_metric(builtin_spec(name, n), make_grid(n, [N] * n, [1.0] * n), order)


def project_off(op, theta, opts=SPECTRAL):
    """Remove the kernel component of ``theta`` (W-pairing Gram solve)."""
    m = op.metric
    B = kernel_basis(op, opts.kernel)
    if not B:
        return theta
    G = np.array([[l2_inner(a, b, m) for b in B] for a in B])
    c = np.linalg.solve(G, [l2_inner(b, theta, m) for b in B])
    d = theta.data.copy()
    for ci, b in zip(c, B):
        d -= ci * b.data
    return OneFormField(theta.grid, d)


def slope(ladder, errors):
    x = np.log2(np.asarray(ladder, float))
    y = np.log2(np.asarray(errors, float))
    return -np.polyfit(x, y, 1)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def conformal2():
    return metric_for("conformal", 2, 32)


@pytest.fixture(scope="session")
def flat2():
    return metric_for("flat", 2, 32)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
