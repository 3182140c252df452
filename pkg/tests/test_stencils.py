import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tensor_split.stencils import Differ, biased_first, central_first, central_second


@pytest.mark.parametrize("st_, expected", [
    (central_first(2), 2), (central_first(4), 4), (central_second(2), 2), (central_second(4), 4),
    (biased_first(2), 3), (biased_first(4), 5),
])
def test_truncation_order(st_, expected):
    errs = []
    for N in (32, 64, 128):
        h = 1.0 / N
        x = np.arange(N) * h
        f = np.sin(2 * np.pi * x)
        exact = (2 * np.pi * np.cos(2 * np.pi * x) if st_.derivative == 1
                 else -(2 * np.pi) ** 2 * np.sin(2 * np.pi * x))
        errs.append(np.abs(st_.apply(f, 0, h) - exact).max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates.min() > expected - 0.2


@pytest.mark.parametrize("order", [2, 4])
def test_biased_symbol_vanishes_only_at_zero(order):
    theta = np.linspace(0, 2 * np.pi, 1001)[1:-1]
    assert np.abs(biased_first(order).symbol(theta)).min() > 1e-3
    assert abs(biased_first(order).symbol(np.array([0.0]))[0]) < 1e-15


@pytest.mark.parametrize("order", [2, 4])
def test_exactly_zero_on_constants(order):
    D = Differ((0.1, 0.1), order)
    f = np.full((10, 12), 0.7312)
    for k in range(2):
        assert not D.db(f, k).any()
        assert not D.db_t(f, k).any()
        assert not D.d1(f, k).any()
        assert not D.d2(f, k, k).any()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), order=st.sampled_from([2, 4]), axis=st.integers(0, 1))
def test_transpose_is_adjoint(seed, order, axis):
    rng = np.random.default_rng(seed)
    D = Differ((0.05, 0.1), order)
    a, b = rng.normal(size=(2, 16, 10))
    lhs = np.sum(D.db(a, axis) * b)
    rhs = np.sum(a * D.db_t(b, axis))
    assert abs(lhs - rhs) <= 1e-12 * np.abs(D.db(a, axis)).sum() * np.abs(b).max()


def test_component_axes_are_leading():
    D = Differ((0.125, 0.125), 4)
    x = np.arange(8) * 0.125
    f = np.stack([np.sin(2 * np.pi * x)[:, None] * np.ones(8), np.ones((8, 8))])
    out = D.d1(f, 0)
    assert out.shape == (2, 8, 8)
    assert not out[1].any()
