import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

import oracles
from conftest import metric_for, slope
from tensor_split import (MismatchError, OneFormField, ScalarField, SymTensorField, TwoFormField,
                          ahlfors_laplacian, builtin_spec, cauchy_ahlfors, cauchy_ahlfors_adjoint,
                          codifferential, curvature, divergence_sym, exterior_derivative, hodge_laplacian,
                          killing_op, l2_inner, l2_norm, sampson_laplacian, trace_and_traceless, trace_g,
                          weitzenboeck_residual)
from tensor_split.samples import random_smooth

METRICS = [("flat", 2), ("conformal", 2), ("diagonal_periodic", 2), ("conformal", 3), ("product", 3)]


def _metric(name, n):
    return metric_for(name, n, 16 if n == 2 else 8)


def _rand(cls, m, rng):
    return cls(m.grid, rng.normal(size=(cls.ncomp(m.n), *m.grid.dims)))


@pytest.mark.parametrize("name, n", METRICS)
def test_killing_divergence_adjoint(name, n, rng):
    m = _metric(name, n)
    th, phi = _rand(OneFormField, m, rng), _rand(SymTensorField, m, rng)
    lhs = l2_inner(killing_op(th, m), phi, m)
    rhs = l2_inner(th, divergence_sym(phi, m), m)
    assert abs(lhs - rhs) <= 1e-13 * abs(lhs) + 1e-13


@pytest.mark.parametrize("name, n", METRICS)
def test_ahlfors_adjoint(name, n, rng):
    m = _metric(name, n)
    th, phi = _rand(OneFormField, m, rng), _rand(SymTensorField, m, rng)
    lhs = l2_inner(cauchy_ahlfors(th, m), phi, m)
    rhs = l2_inner(th, cauchy_ahlfors_adjoint(phi, m), m)
    assert abs(lhs - rhs) <= 1e-13 * abs(lhs) + 1e-13


@pytest.mark.parametrize("name, n", METRICS)
def test_d_codifferential_adjoint(name, n, rng):
    m = _metric(name, n)
    f, th, om = _rand(ScalarField, m, rng), _rand(OneFormField, m, rng), _rand(TwoFormField, m, rng)
    a = l2_inner(exterior_derivative(f, m), th, m)
    assert abs(a - l2_inner(f, codifferential(th, m), m)) <= 1e-13 * abs(a) + 1e-13
    b = l2_inner(exterior_derivative(th, m), om, m)
    assert abs(b - l2_inner(th, codifferential(om, m), m)) <= 1e-13 * abs(b) + 1e-13


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), which=st.sampled_from(range(len(METRICS))))
def test_laplacians_are_positive_semidefinite(seed, which):
    m = _metric(*METRICS[which])
    th = _rand(OneFormField, m, np.random.default_rng(seed))
    for op in (ahlfors_laplacian, hodge_laplacian):
        assert l2_inner(th, op(th, m), m) >= -1e-12 * l2_norm(th, m) ** 2
    dds = l2_inner(th, divergence_sym(killing_op(th, m), m), m)
    assert dds == pytest.approx(l2_norm(killing_op(th, m), m) ** 2, rel=1e-12)


@pytest.mark.parametrize("name, n", METRICS)
def test_cauchy_ahlfors_is_traceless(name, n, rng):
    m = _metric(name, n)
    S = cauchy_ahlfors(_rand(OneFormField, m, rng), m)
    assert np.abs(trace_g(S, m).values).max() <= 1e-12 * np.abs(S.data).max()


@pytest.mark.parametrize("name, n", METRICS)
def test_metric_is_divergence_free(name, n):
    m = _metric(name, n)
    assert np.abs(divergence_sym(m.g, m).data).max() < 1e-12


@pytest.mark.parametrize("name, n", METRICS)
def test_d_squared_vanishes(name, n, rng):
    m = _metric(name, n)
    f = _rand(ScalarField, m, rng)
    assert np.abs(exterior_derivative(exterior_derivative(f, m), m).data).max() < 1e-11
    om = _rand(TwoFormField, m, rng)
    assert np.abs(codifferential(codifferential(om, m), m).data).max() < 1e-9


def test_killing_of_constant_form_on_flat_torus_is_zero():
    m = _metric("flat", 3)
    th = OneFormField(m.grid, np.broadcast_to(np.array([1.0, -2.0, 0.5])[:, None, None, None], (3, 8, 8, 8)))
    assert not killing_op(th, m).data.any()


@pytest.mark.parametrize("name, n", METRICS)
def test_trace_split_is_exact(name, n, rng):
    m = _metric(name, n)
    phi = _rand(SymTensorField, m, rng)
    tr, phi0 = trace_and_traceless(phi, m)
    pure = (tr.values / n)[None] * m.g.data
    # bit-exact except where the parts cancel far below their own ulp
    bound = np.spacing(np.maximum(np.abs(pure), np.abs(phi0.data)))
    assert np.all(np.abs(phi0.data + pure - phi.data) <= bound)


@pytest.mark.parametrize("name, n", METRICS)
def test_sampson_is_two_dds_minus_d_delta(name, n, rng):
    m = _metric(name, n)
    th = _rand(OneFormField, m, rng)
    ref = 2 * divergence_sym(killing_op(th, m), m).data - exterior_derivative(codifferential(th, m), m).data
    got = sampson_laplacian(th, m).data
    assert np.abs(got - ref).max() <= 1e-12 * np.abs(ref).max()


def test_sampson_approaches_hodge_on_flat_torus():
    errs = []
    for N in (16, 32, 64):
        m = metric_for("flat", 2, N)
        th = random_smooth(OneFormField, m.grid, np.random.default_rng(7), kmax=2)
        a, b = sampson_laplacian(th, m).data, hodge_laplacian(th, m).data
        errs.append(np.abs(a - b).max() / np.abs(b).max())
    assert errs[-1] < 1e-5 and slope([16, 32, 64], errs) > 3.5


def test_weitzenboeck_converges(rng):
    errs = []
    for N in (16, 32, 64):
        m = metric_for("conformal", 2, N)
        th = random_smooth(OneFormField, m.grid, np.random.default_rng(3), kmax=1)
        errs.append(l2_norm(weitzenboeck_residual(th, m), m) / l2_norm(th, m))
    assert errs[-1] < 1e-4
    assert slope([16, 32, 64], errs) > 3.5


def test_kind_checks(conformal2, rng):
    th = _rand(OneFormField, conformal2, rng)
    with pytest.raises(MismatchError):
        divergence_sym(th, conformal2)
    with pytest.raises(MismatchError):
        killing_op(_rand(SymTensorField, conformal2, rng), conformal2)


def _sym_theta(x):
    return [sp.sin(2 * sp.pi * x[1]), sp.cos(2 * sp.pi * x[0]) + sp.sin(2 * sp.pi * (x[0] + x[1]))]


def _conformal_sym(x):
    t = builtin_spec("conformal", 2).params["terms"]
    u = sum(a["amp"] * sp.Mul(*[sp.sin(2 * sp.pi * a["k"][i] * x[i] + a["phase"][i]) for i in range(2)]) for a in t)
    return sp.exp(2 * u) * sp.eye(2)


@pytest.mark.parametrize("N", [64])
def test_operators_match_symbolic_oracle(N):
    m = metric_for("conformal", 2, N)
    x = oracles.coords(2)
    g = _conformal_sym(x)
    th_s = _sym_theta(x)
    pts = m.grid.coords()
    th = OneFormField(m.grid, np.stack([sp.lambdify(x, c, "numpy")(*pts) * np.ones(m.grid.dims) for c in th_s]))

    K = oracles.killing(th_s, g, x)
    ks = killing_op(th, m)
    for a, (i, j) in enumerate([(0, 0), (0, 1), (1, 1)]):
        ref = sp.lambdify(x, K[i, j], "numpy")(*pts)
        assert np.abs(ks.data[a] - ref).max() < 1e-5 * np.abs(ref).max() + 1e-8

    ref = sp.lambdify(x, oracles.codiff_one(th_s, g, x), "numpy")(*pts)
    assert np.abs(codifferential(th, m).values - ref).max() < 1e-5 * np.abs(ref).max()

    phi_s = sp.Matrix([[sp.sin(2 * sp.pi * x[0]), sp.cos(2 * sp.pi * x[1])],
                       [sp.cos(2 * sp.pi * x[1]), sp.sin(2 * sp.pi * (x[0] - x[1]))]])
    phi = SymTensorField.from_full(m.grid, np.array(
        [[sp.lambdify(x, phi_s[i, j], "numpy")(*pts) * np.ones(m.grid.dims) for j in range(2)] for i in range(2)]))
    div = divergence_sym(phi, m)
    for j, c in enumerate(oracles.div_sym(phi_s, g, x)):
        ref = sp.lambdify(x, c, "numpy")(*pts)
        assert np.abs(div.data[j] - ref).max() < 1e-4 * np.abs(ref).max()


def test_curvature_matches_symbolic_ricci_on_diagonal_metric():
    m = metric_for("diagonal_periodic", 2, 64)
    spec = m.spec
    x = oracles.coords(2)
    p = spec.params
    g = sp.diag(*[p["base"][i] * (1 + p["amp"][i] * sp.Mul(*[sp.sin(2 * sp.pi * p["k"][i][j] * x[j] + p["phase"][i][j])
                                                             for j in range(2)])) for i in range(2)])
    ref = sp.lambdify(x, oracles.scalar(g, x), "numpy")(*m.grid.coords())
    assert np.abs(curvature(m).scalar.values - ref).max() < 1e-4 * np.abs(ref).max()
