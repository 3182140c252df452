import numpy as np
import pytest

from conftest import SPECTRAL, metric_for
from tensor_split import (ConfigError, InconsistentRHSError, KernelOptions, OneFormField, SolveOptions,
                          SolverError, ahlfors_operator, dds_operator, kernel_basis, l2_inner, l2_norm,
                          solve_spsd)
from tensor_split.operators import sampson_operator
from tensor_split.samples import random_smooth


@pytest.mark.parametrize("name, n, op, dim", [
    ("flat", 2, dds_operator, 2), ("flat", 3, dds_operator, 3), ("conformal", 2, dds_operator, 0),
    ("flat", 3, ahlfors_operator, 3), ("conformal", 3, dds_operator, 2), ("conformal", 3, ahlfors_operator, 3),
])
def test_kernel_dimensions(name, n, op, dim):
    m = metric_for(name, n, 16)
    B = kernel_basis(op(m))
    assert len(B) == dim
    G = np.array([[l2_inner(a, b, m) for b in B] for a in B]).reshape(dim, dim)
    assert np.allclose(G, np.eye(dim), atol=1e-10)
    for b in B:
        assert l2_norm(op(m).apply(b), m) < 1e-6


def test_flat_kernel_is_constants():
    m = metric_for("flat", 2, 16)
    for b in kernel_basis(dds_operator(m)):
        assert np.ptp(b.data, axis=(1, 2)).max() < 1e-10


def test_kernel_basis_is_deterministic():
    a = kernel_basis(dds_operator(metric_for("flat", 3, 8)))
    b = kernel_basis(dds_operator(metric_for("flat", 3, 8)))
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))


@pytest.mark.parametrize("pre", ["none", "diagonal", "spectral"])
def test_solve_recovers_manufactured_solution(pre, conformal2):
    m = conformal2
    op = dds_operator(m)
    th = random_smooth(OneFormField, m.grid, np.random.default_rng(2), kmax=2)
    x, stats = solve_spsd(op, op.apply(th), SolveOptions(rel_tol=1e-11, preconditioner=pre))
    assert stats.converged and stats.kernel_dim_deflated == 0
    assert l2_norm(x - th, m) < 1e-8 * l2_norm(th, m)


def test_solution_independent_of_initial_guess(flat2, rng):
    op = dds_operator(flat2)
    rhs = op.apply(random_smooth(OneFormField, flat2.grid, rng))
    a, _ = solve_spsd(op, rhs, SPECTRAL)
    b, _ = solve_spsd(op, rhs, SPECTRAL, x0=OneFormField(flat2.grid, rng.normal(size=(2, 32, 32))))
    assert l2_norm(a - b, flat2) < 1e-8 * l2_norm(a, flat2)
    for k in kernel_basis(op):
        assert abs(l2_inner(k, a, flat2)) < 1e-12 * l2_norm(a, flat2)


def test_inconsistent_rhs_without_deflation(flat2):
    op = dds_operator(flat2)
    const = OneFormField(flat2.grid, np.ones((2, 32, 32)))
    with pytest.raises(InconsistentRHSError):
        solve_spsd(op, const, SolveOptions(deflate_kernel=False))
    x, stats = solve_spsd(op, const, SolveOptions())
    assert np.abs(x.data).max() < 1e-12 and stats.converged


def test_zero_rhs_short_circuits(conformal2):
    x, stats = solve_spsd(dds_operator(conformal2), OneFormField.zeros(conformal2.grid))
    assert stats.iterations == 0 and not x.data.any()


def test_iteration_cap_reports_nonconvergence(conformal2, rng):
    op = dds_operator(conformal2)
    rhs = op.apply(random_smooth(OneFormField, conformal2.grid, rng))
    _, stats = solve_spsd(op, rhs, SolveOptions(max_iter=2))
    assert not stats.converged and stats.iterations == 2


def test_non_symmetric_operator_rejected(flat2):
    with pytest.raises(SolverError):
        solve_spsd(sampson_operator(flat2), OneFormField.zeros(flat2.grid))


@pytest.mark.parametrize("kw", [{"rel_tol": 0.5}, {"max_iter": 0}, {"preconditioner": "ilu"}])
def test_bad_solve_options(kw):
    with pytest.raises(ConfigError):
        SolveOptions(**kw)


def test_bad_kernel_options(flat2):
    with pytest.raises(ConfigError):
        kernel_basis(dds_operator(flat2), KernelOptions(max_dim=3, probes=2))
