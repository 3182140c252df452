import math

import numpy as np
import pytest
import sympy as sp

import oracles
from conftest import metric_for, slope
from tensor_split import (MetricError, MetricField, MetricSpec, OneFormField, ScalarField, SymTensorField,
                          analytic_curvature, builtin_spec, curvature, flat, l2_inner,
                          make_grid, pointwise_inner, sample_metric, sharp, trace_g)
from tensor_split.metric import integrate, mean_and_stddev
from tensor_split.specs import BUILTIN_NAMES


def test_indefinite_metric_rejected():
    g = make_grid(2, [8, 8], [1.0, 1.0])
    data = np.zeros((3, 8, 8))
    data[0] = 1.0
    data[2] = -1.0
    with pytest.raises(MetricError, match="indefinite"):
        MetricField(SymTensorField(g, data))


def test_spec_validation():
    with pytest.raises(MetricError):
        MetricSpec("diagonal_periodic", {"base": [1, 1], "amp": [1.2, 0.1], "k": [[1, 1], [1, 1]]})
    with pytest.raises(MetricError):
        MetricSpec("hyperbolic", {})
    with pytest.raises(MetricError):
        sample_metric(builtin_spec("flat", 3), make_grid(2, [8, 8], [1, 1]))


def test_sharp_of_constant_diagonal_metric():
    g = make_grid(2, [8, 8], [1.0, 1.0])
    m = sample_metric(MetricSpec("flat_diagonal", {"diag": [4.0, 1.0]}), g)
    th = OneFormField(g, np.stack([np.ones((8, 8)), np.zeros((8, 8))]))
    xi = sharp(th, m)
    assert np.all(xi.data[0] == 0.25) and not xi.data[1].any()


@pytest.mark.parametrize("name", ["flat", "conformal", "diagonal_periodic"])
def test_sharp_flat_roundtrip(name, rng):
    m = metric_for(name, 2, 16)
    th = OneFormField(m.grid, rng.normal(size=(2, 16, 16)))
    back = flat(sharp(th, m), m)
    assert np.abs(back.data - th.data).max() <= 1e-13 * np.abs(th.data).max()


def test_pairing_is_bitwise_symmetric(rng, conformal2):
    m = conformal2
    a = SymTensorField(m.grid, rng.normal(size=(3, 32, 32)))
    b = SymTensorField(m.grid, rng.normal(size=(3, 32, 32)))
    assert l2_inner(a, b, m) == l2_inner(b, a, m)
    u = OneFormField(m.grid, rng.normal(size=(2, 32, 32)))
    v = OneFormField(m.grid, rng.normal(size=(2, 32, 32)))
    assert l2_inner(u, v, m) == l2_inner(v, u, m)
    assert np.array_equal(pointwise_inner(u, v, m), pointwise_inner(v, u, m))


def test_volume_and_stddev():
    m = metric_for("flat", 2, 16)
    assert integrate(np.ones((16, 16)), m) == pytest.approx(1.0, abs=1e-15)
    x = m.grid.coords()
    f = ScalarField(m.grid, np.sin(2 * np.pi * x[0])[None])
    mean, sd = mean_and_stddev(f, m)
    assert abs(mean) < 1e-15 and sd == pytest.approx(math.sqrt(0.5), rel=1e-14)


@pytest.mark.parametrize("name, n", [("flat", 2), ("flat", 3), ("product", 3)])
def test_flat_curvature_is_exactly_zero(name, n):
    c = curvature(metric_for(name, n, 16))
    assert not c.ricci.data.any() and not c.scalar.data.any() and not c.christoffel.any()


@pytest.mark.parametrize("name, n", [(b, n) for n in (2, 3) for b in BUILTIN_NAMES if not (b == "product" and n == 2)])
def test_trace_of_ricci_is_scalar(name, n):
    m = metric_for(name, n, 16)
    c = curvature(m)
    s = c.scalar.values
    assert np.abs(trace_g(c.ricci, m).values - s).max() <= 1e-12 * (1 + np.abs(s).max())


def _sympy_metric(spec, n):
    x = oracles.coords(n)
    if spec.family == "conformal_flat":
        u = sum(t["amp"] * sp.Mul(*[sp.sin(2 * sp.pi * t["k"][i] * x[i] + t["phase"][i]) for i in range(n)])
                for t in spec.params["terms"])
        return x, sp.exp(2 * u) * sp.eye(n)
    p = spec.params
    diag = [p["base"][i] * (1 + p["amp"][i] * sp.Mul(*[sp.sin(2 * sp.pi * p["k"][i][j] * x[j] + p["phase"][i][j])
                                                       for j in range(n)])) for i in range(n)]
    return x, sp.diag(*diag)


@pytest.mark.parametrize("name, n", [("conformal", 2), ("diagonal_periodic", 2), ("conformal", 3)])
def test_analytic_curvature_matches_symbolic_oracle(name, n):
    spec = builtin_spec(name, n)
    x, g = _sympy_metric(spec, n)
    R = oracles.ricci(g, x)
    s = oracles.scalar(g, x)
    pts = np.random.default_rng(5).uniform(0, 1, size=(n, 4))
    fR = sp.lambdify(x, R, "numpy")
    fs = sp.lambdify(x, s, "numpy")
    Ra, sa = analytic_curvature(spec, pts, (1.0,) * n)
    for q in range(pts.shape[1]):
        assert np.allclose(np.array(fR(*pts[:, q]), float), Ra[..., q], rtol=1e-11, atol=1e-11)
        assert fs(*pts[:, q]) == pytest.approx(sa[q], rel=1e-11, abs=1e-11)


def test_conformal_scalar_closed_form():
    # s = -2 exp(-2u) lap u for g = exp(2u) delta on a surface
    g = make_grid(2, [16, 16], [1, 1])
    x = g.coords()
    u = 0.1 * np.sin(2 * np.pi * x[0]) * np.sin(2 * np.pi * x[1])
    s = -2 * np.exp(-2 * u) * (-8 * np.pi**2 * u)
    _, sa = analytic_curvature(builtin_spec("conformal", 2), x, g.lengths)
    assert np.abs(sa - s).max() < 1e-12


@pytest.mark.parametrize("order, expected", [(2, 1.8), (4, 3.5)])
def test_curvature_converges(order, expected):
    spec = builtin_spec("conformal", 2)
    errs = []
    for N in (16, 32, 64):
        m = metric_for("conformal", 2, N, order)
        _, sa = analytic_curvature(spec, m.grid.coords(), m.grid.lengths)
        errs.append(np.abs(curvature(m).scalar.values - sa).max())
    assert slope([16, 32, 64], errs) >= expected
