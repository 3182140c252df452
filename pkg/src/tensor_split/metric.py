"""Metric fields on a grid, their curvature, and the weighted L2 pairing.

All pointwise linear algebra is done on dense ``(n, n, *dims)`` arrays; the
public field types keep only independent components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError, MismatchError
from .grid import (Field, Grid, OneFormField, ScalarField, SymTensorField, TwoFormField,
                   VectorField, sym_pairs)
from .specs import MetricSpec
from .stencils import Differ

INVERSE_TOL = 1e-13


class MetricField:
    """Pointwise positive-definite metric with cached inverse and volume weight.

    Parameters
    ----------
    g : SymTensorField
        Metric components.
    order : int
        Stencil order (2 or 4) used by every operator built on this metric.
    spec : MetricSpec, optional
        The analytic spec this metric was sampled from, if any.
    """

    def __init__(self, g: SymTensorField, order: int = 4, spec: MetricSpec | None = None):
        if not isinstance(g, SymTensorField):
            raise MismatchError(f"kind-mismatch: metric must be symtensor, got {g.kind}")
        if order not in (2, 4):
            raise MetricError(f"stencil order must be 2 or 4, got {order}")
        self.g = g
        self.grid: Grid = g.grid
        self.order = order
        self.spec = spec
        self.differ = Differ(self.grid.spacing, order)
        self._cache: dict = {}

        n = self.grid.n
        G = g.full()
        Gp = np.moveaxis(G, (0, 1), (-2, -1))
        eig = np.linalg.eigvalsh(Gp)
        lo = eig[..., 0]
        if not np.all(lo > 0):
            idx = np.unravel_index(int(np.argmin(lo)), lo.shape)
            raise MetricError(f"indefinite-metric: smallest eigenvalue {lo[idx]:.3e} at point {idx}")
        inv = np.linalg.inv(Gp)
        inv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
        resid = np.abs(inv @ Gp - np.eye(n)).max(axis=(-2, -1))
        cond = eig[..., -1] / lo
        if np.any(resid > INVERSE_TOL * np.maximum(cond, 1.0)):
            raise MetricError("metric inverse inaccurate beyond round-off; metric is too ill-conditioned")
        det = np.linalg.det(Gp)

        self.matrix = _frozen(G)
        self.inverse = _frozen(np.moveaxis(inv, (-2, -1), (0, 1)))
        self.g_inv = SymTensorField.from_full(self.grid, self.inverse)
        self.det_g = ScalarField(self.grid, det[None])
        self.sqrt_det_g = ScalarField(self.grid, np.sqrt(det)[None])
        # quadrature weight of each grid point
        self.weight = _frozen(self.sqrt_det_g.values * self.grid.cell_volume)

    @property
    def n(self) -> int:
        return self.grid.n

    def cached(self, key, build):
        """Memoize a derived quantity on this (immutable) metric."""
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def with_order(self, order: int) -> "MetricField":
        if order == self.order:
            return self
        return MetricField(self.g, order, self.spec)

    def __repr__(self):
        return f"MetricField(dims={self.grid.dims}, order={self.order})"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def sample_metric(spec: MetricSpec, grid: Grid, order: int = 4) -> MetricField:
    """Evaluate ``spec`` at the grid points.

    Raises
    ------
    MetricError
        If the MetricSpec dimension differs from the grid's, or the sampled metric
        is not positive-definite everywhere.
    """
    if spec.n != grid.n:
        raise MetricError(f"spec is {spec.n}-dimensional, grid is {grid.n}-dimensional")
    G, _, _ = spec.evaluate(grid.coords(), grid.lengths)
    return MetricField(SymTensorField.from_full(grid, G), order, spec)


def _require_grid(metric: MetricField, *fields: Field):
    for f in fields:
        if f.grid != metric.grid:
            raise MismatchError("grid-mismatch")


# ---------------------------------------------------------------------------
# Christoffel symbols and curvature


def christoffel_from(G: np.ndarray, Gi: np.ndarray, deriv) -> np.ndarray:
    """``Gamma[k, i, j]`` from metric arrays and a first-derivative ``deriv(f, axis)``.

    Symmetric in ``(i, j)`` structurally: only ``i <= j`` is computed.
    """
    n = G.shape[0]
    dg = _metric_gradient(G, deriv)
    Gam = np.empty((n, n, n, *G.shape[2:]))
    for i, j in sym_pairs(n):
        T = [dg[i][l][j] + dg[j][l][i] - dg[l][i][j] for l in range(n)]
        for k in range(n):
            acc = Gi[k, 0] * T[0]
            for l in range(1, n):
                acc = acc + Gi[k, l] * T[l]
            Gam[k, i, j] = Gam[k, j, i] = 0.5 * acc
    return Gam


def _metric_gradient(G, deriv):
    """Nested lists ``dg[k][i][j] = d_k g_ij`` sharing arrays across ``(i, j)``."""
    n = G.shape[0]
    dg = [[[None] * n for _ in range(n)] for _ in range(n)]
    for k in range(n):
        for i, j in sym_pairs(n):
            dg[k][i][j] = dg[k][j][i] = deriv(G[i, j], k)
    return dg


def _ricci(G, Gi, D: Differ):
    """Ricci tensor from second derivatives of the metric.

    Uses ``d_a Gamma^k_ij = 1/2 (d_a g^kl) T_ilj + 1/2 g^kl d_a T_ilj`` with
    ``T_ilj = d_i g_lj + d_j g_li - d_l g_ij`` so that no derivative of a
    differentiated quantity is ever taken (mixed partials excepted).
    """
    n = G.shape[0]
    dims = G.shape[2:]
    dg = _metric_gradient(G, D.d1)

    def T(i, l, j):
        return dg[i][l][j] + dg[j][l][i] - dg[l][i][j]

    Gam = np.empty((n, n, n, *dims))
    for i, j in sym_pairs(n):
        Tij = [T(i, l, j) for l in range(n)]
        for k in range(n):
            Gam[k, i, j] = Gam[k, j, i] = 0.5 * sum(Gi[k, l] * Tij[l] for l in range(n))

    # ddg[a][b][i][j] = d_a d_b g_ij
    ddg = [[[[None] * n for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for a, b in sym_pairs(n):
        for i, j in sym_pairs(n):
            v = D.d2(G[i, j], a, b)
            for p, q in {(a, b), (b, a)}:
                ddg[p][q][i][j] = ddg[p][q][j][i] = v

    # dgi[c][k][l] = d_c g^kl = -g^ka g^lb d_c g_ab
    dgi = [[[None] * n for _ in range(n)] for _ in range(n)]
    for c in range(n):
        for k, l in sym_pairs(n):
            acc = np.zeros(dims)
            for a in range(n):
                for b in range(n):
                    acc -= Gi[k, a] * Gi[l, b] * dg[c][a][b]
            dgi[c][k][l] = dgi[c][l][k] = acc

    R = np.empty((n, n, *dims))
    for i, j in sym_pairs(n):
        t1 = np.zeros(dims)
        t2 = np.zeros(dims)
        t3 = np.zeros(dims)
        for k in range(n):
            for l in range(n):
                # d_k Gamma^k_ij
                t1 += 0.5 * dgi[k][k][l] * T(i, l, j)
                t1 += 0.5 * Gi[k, l] * (ddg[k][i][l][j] + ddg[k][j][l][i] - ddg[k][l][i][j])
                # d_j Gamma^k_ik, with the two terms that cancel by symmetry of g^kl dropped
                t2 += 0.5 * dgi[j][k][l] * T(i, l, k)
                t2 += 0.5 * Gi[k, l] * ddg[j][i][l][k]
                t3 += Gam[k, k, l] * Gam[l, i, j] - Gam[k, j, l] * Gam[l, i, k]
        R[i, j] = R[j, i] = t1 - t2 + t3
    return Gam, R


@dataclass(frozen=True)
class CurvatureBundle:
    """Christoffel symbols ``christoffel[k, i, j]``, Ricci tensor and scalar curvature."""

    christoffel: np.ndarray
    ricci: SymTensorField
    scalar: ScalarField
    order: int


def curvature(metric: MetricField, order: int | None = None) -> CurvatureBundle:
    """Curvature of ``metric`` with central stencils of the given order.

    Christoffels come from first derivatives of ``g``; Ricci from its second
    derivatives plus the quadratic Christoffel terms; the scalar curvature is
    the trace ``g^ij R_ij``.  Truncation error is ``O(h^order)``.
    """
    order = metric.order if order is None else order

    def build():
        D = metric.differ if order == metric.order else Differ(metric.grid.spacing, order)
        Gam, R = _ricci(metric.matrix, metric.inverse, D)
        ric = SymTensorField.from_full(metric.grid, R)
        s = _trace_full(metric.inverse, R)
        Gam.flags.writeable = False
        return CurvatureBundle(Gam, ric, ScalarField(metric.grid, s[None]), order)

    return metric.cached(("curvature", order), build)


def _trace_full(Gi, A):
    n = Gi.shape[0]
    acc = np.zeros(A.shape[2:])
    for i in range(n):
        acc += Gi[i, i] * A[i, i]
        for j in range(i + 1, n):
            acc += 2.0 * (Gi[i, j] * A[i, j])
    return acc


def trace_g(phi: SymTensorField, metric: MetricField) -> ScalarField:
    _require_grid(metric, phi)
    return ScalarField(metric.grid, _trace_full(metric.inverse, phi.full())[None])


# ---------------------------------------------------------------------------
# L2 pairing


def _pair_vec(M, a, b):
    """``sum_ij M_ij a_i b_j``, bitwise symmetric under swapping ``a`` and ``b``."""
    n = M.shape[0]
    acc = M[0, 0] * (a[0] * b[0])
    for i in range(1, n):
        acc = acc + M[i, i] * (a[i] * b[i])
    for i in range(n):
        for j in range(i + 1, n):
            acc = acc + M[i, j] * (a[i] * b[j] + a[j] * b[i])
    return acc


def _raise_both(Gi, A):
    return np.einsum("ik...,jl...,kl...->ij...", Gi, Gi, A, optimize=True)


def pointwise_inner(a: Field, b: Field, metric: MetricField) -> np.ndarray:
    """Pointwise ``g(a, b)``; symmetric in ``a`` and ``b`` bit for bit."""
    if type(a) is not type(b):
        raise MismatchError(f"kind-mismatch: {a.kind} vs {b.kind}")
    _require_grid(metric, a, b)
    if isinstance(a, ScalarField):
        return a.values * b.values
    if isinstance(a, OneFormField):
        return _pair_vec(metric.inverse, a.data, b.data)
    if isinstance(a, VectorField):
        return _pair_vec(metric.matrix, a.data, b.data)
    A, B = a.full(), b.full()
    cab = np.sum(_raise_both(metric.inverse, A) * B, axis=(0, 1))
    cba = np.sum(_raise_both(metric.inverse, B) * A, axis=(0, 1))
    c = 0.5 * (cab + cba)
    if isinstance(a, TwoFormField):
        c = 0.5 * c
    return c


def integrate(values: np.ndarray, metric: MetricField) -> float:
    """Riemann sum of a pointwise density against the volume weight.

    The reduction is numpy's pairwise summation over the row-major ravel,
    so the result depends only on the values, never on how they were made.
    """
    return float(np.add.reduce((values * metric.weight).ravel()))


def l2_inner(a: Field, b: Field, metric: MetricField) -> float:
    """Weighted L2 inner product ``sum g(a, b) sqrt(det g) prod h``.

    Two-forms use the convention ``g(a, b) = 1/2 a_ij b^ij``.
    """
    return integrate(pointwise_inner(a, b, metric), metric)


def l2_norm(a: Field, metric: MetricField) -> float:
    return float(np.sqrt(max(l2_inner(a, a, metric), 0.0)))


def sharp(theta: OneFormField, metric: MetricField) -> VectorField:
    _require_grid(metric, theta)
    return VectorField(metric.grid, np.einsum("ij...,j...->i...", metric.inverse, theta.data))


def flat(xi: VectorField, metric: MetricField) -> OneFormField:
    _require_grid(metric, xi)
    return OneFormField(metric.grid, np.einsum("ij...,j...->i...", metric.matrix, xi.data))


def directional_derivative(xi: VectorField, f: ScalarField, metric: MetricField | None = None,
                           order: int = 4) -> ScalarField:
    """``xi(f) = sum_i xi^i d_i f``.

    Uses the same biased first-derivative stencil as the exterior derivative,
    so that ``integrate(xi(f)) == <df, xi_flat>`` discretely.
    """
    if xi.grid != f.grid:
        raise MismatchError("grid-mismatch")
    D = metric.differ if metric is not None else Differ(f.grid.spacing, order)
    out = np.zeros(f.grid.dims)
    for i in range(f.grid.n):
        out += xi.data[i] * D.db(f.values, i)
    return ScalarField(f.grid, out[None])


def mean_and_stddev(f: ScalarField, metric: MetricField) -> tuple[float, float]:
    """Volume-weighted mean and standard deviation of a scalar field."""
    _require_grid(metric, f)
    vol = integrate(np.ones(f.grid.dims), metric)
    mean = integrate(f.values, metric) / vol
    var = integrate((f.values - mean) ** 2, metric) / vol
    return mean, float(np.sqrt(max(var, 0.0)))
