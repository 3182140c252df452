"""First- and second-order operators on one-forms and symmetric tensors.

Every operator is built from the forward-biased first-derivative stencil
``D`` and its exact transpose, so each adjoint pair is an exact matrix
transpose with respect to :func:`tensor_split.metric.l2_inner`.

Building blocks, with ``w`` the quadrature weight and ``xi = g^-1 theta``:

* ``N theta = sym(D theta) - Gamma theta``, a discrete covariant symmetric gradient;
* ``P`` the pointwise traceless projection (self-adjoint);
* ``d f = D f`` and ``delta theta = (1/w) sum_j D_j^T (w xi^j)``.

The Killing operator is ``delta* theta = P N theta - (1/n)(delta theta) g``.
In the continuum this is just ``N theta``; the discrete form makes
``trace(delta* theta) = -delta theta``, ``delta g = 0`` and
``delta(f g) = -df`` hold to round-off rather than to truncation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MismatchError
from .grid import OneFormField, ScalarField, SymTensorField, TwoFormField, antisym_pairs, sym_pairs
from .metric import MetricField, christoffel_from, curvature
from .numerics import exact_remainder
from .stencils import Differ


class _Kernel:
    """Array-level operators bound to one metric (cached on it)."""

    def __init__(self, metric: MetricField):
        self.metric = metric
        self.n = n = metric.n
        self.D: Differ = metric.differ
        self.G = metric.matrix
        self.Gi = metric.inverse
        self.w = metric.weight
        self.pairs = sym_pairs(n)
        self.apairs = antisym_pairs(n)
        self.gcomp = metric.g.data
        self.Gam = christoffel_from(self.G, self.Gi, self.D.db)
        self.comp = [[self.pairs.index((min(i, j), max(i, j))) for j in range(n)] for i in range(n)]
        # pointwise-diagonal metrics skip the dense index contractions
        self.diagonal = all(not np.any(self.G[i, j]) for i, j in self.apairs)
        self.gi_diag = [self.Gi[i, i] for i in range(n)]
        self.g_diag = [self.G[i, i] for i in range(n)]
        live = [[[bool(np.any(self.Gam[k, i, j])) for j in range(n)] for i in range(n)] for k in range(n)]
        self.live = live

    # index gymnastics -----------------------------------------------------
    def raise_one(self, th):
        if self.diagonal:
            return np.stack([self.gi_diag[i] * th[i] for i in range(self.n)])
        return np.einsum("ij...,j...->i...", self.Gi, th)

    def lower_one(self, v):
        if self.diagonal:
            return np.stack([self.g_diag[i] * v[i] for i in range(self.n)])
        return np.einsum("ij...,j...->i...", self.G, v)

    def raise_sym(self, phi):
        """Upper-triangle components of ``Phi^ij = g^ik g^jl phi_kl``."""
        if self.diagonal:
            gi = self.gi_diag
            return np.stack([gi[i] * gi[j] * phi[c] for c, (i, j) in enumerate(self.pairs)])
        n = self.n
        full = np.empty((n, n, *phi.shape[1:]))
        for c, (i, j) in enumerate(self.pairs):
            full[i, j] = full[j, i] = phi[c]
        up = np.einsum("ik...,jl...,kl...->ij...", self.Gi, self.Gi, full, optimize=True)
        return np.stack([up[i, j] for i, j in self.pairs])

    def trace(self, phi):
        acc = np.zeros(phi.shape[1:])
        for c, (i, j) in enumerate(self.pairs):
            if i == j:
                acc += self.Gi[i, i] * phi[c]
            elif not self.diagonal:
                acc += 2.0 * (self.Gi[i, j] * phi[c])
        return acc

    def proj(self, phi):
        return phi - (self.trace(phi) / self.n)[None] * self.gcomp

    # first-order pieces ---------------------------------------------------
    def N(self, th):
        D = self.D
        dth = [[D.db(th[j], i) for j in range(self.n)] for i in range(self.n)]
        out = np.empty((len(self.pairs), *th.shape[1:]))
        for c, (i, j) in enumerate(self.pairs):
            acc = 0.5 * (dth[i][j] + dth[j][i])
            for k in range(self.n):
                if self.live[k][i][j]:
                    acc -= self.Gam[k, i, j] * th[k]
            out[c] = acc
        return out

    def N_adj(self, phi):
        n, D, comp = self.n, self.D, self.comp
        wPhi = self.raise_sym(phi) * self.w
        V = np.zeros((n, *phi.shape[1:]))
        for j in range(n):
            for i in range(n):
                V[j] += D.db_t(wPhi[comp[i][j]], i)
                for k in range(n):
                    if self.live[j][i][k]:
                        V[j] -= wPhi[comp[i][k]] * self.Gam[j, i, k]
        return self.lower_one(V) / self.w

    def d0(self, f):
        return np.stack([self.D.db(f, k) for k in range(self.n)])

    def cod1(self, th):
        wxi = self.raise_one(th) * self.w
        acc = np.zeros(th.shape[1:])
        for j in range(self.n):
            acc += self.D.db_t(wxi[j], j)
        return acc / self.w

    def d1(self, th):
        D = self.D
        return np.stack([D.db(th[j], i) - D.db(th[i], j) for i, j in self.apairs])

    def cod2(self, om):
        n, D = self.n, self.D
        full = np.zeros((n, n, *om.shape[1:]))
        for c, (i, j) in enumerate(self.apairs):
            full[i, j] = om[c]
            full[j, i] = -om[c]
        wOm = np.einsum("ik...,jl...,kl...->ij...", self.Gi, self.Gi, full, optimize=True) * self.w
        U = np.zeros((n, *om.shape[1:]))
        for j in range(n):
            for i in range(n):
                if i != j:
                    U[j] += D.db_t(wOm[i, j], i)
        return self.lower_one(U) / self.w

    # composites -----------------------------------------------------------
    def S(self, th):
        return self.proj(self.N(th))

    def S_adj(self, phi):
        return self.N_adj(self.proj(phi))

    def killing(self, th):
        return self.S(th) - (self.cod1(th) / self.n)[None] * self.gcomp

    def div(self, phi):
        return self.S_adj(phi) - self.d0(self.trace(phi)) / self.n

    def dds(self, th):
        return self.div(self.killing(th))

    def ahlfors(self, th):
        return self.S_adj(self.S(th))

    def sampson(self, th):
        return 2.0 * self.dds(th) - self.d0(self.cod1(th))

    def hodge(self, th):
        return self.cod2(self.d1(th)) + self.d0(self.cod1(th))


def kernel_for(metric: MetricField) -> _Kernel:
    return metric.cached("operator-kernel", lambda: _Kernel(metric))


def _need(metric: MetricField, *fields):
    for f in fields:
        if f.grid != metric.grid:
            raise MismatchError("grid-mismatch")


def _expect(obj, cls):
    if not isinstance(obj, cls):
        raise MismatchError(f"kind-mismatch: expected {cls.kind}, got {getattr(obj, 'kind', type(obj).__name__)}")


# ---------------------------------------------------------------------------
# public field-level API


def killing_op(theta: OneFormField, metric: MetricField) -> SymTensorField:
    """``delta* theta``, the symmetrized covariant derivative ``1/2 L_xi g``."""
    _expect(theta, OneFormField)
    _need(metric, theta)
    return SymTensorField(metric.grid, kernel_for(metric).killing(theta.data))


def divergence_sym(phi: SymTensorField, metric: MetricField) -> OneFormField:
    """``delta phi``, the exact discrete adjoint of :func:`killing_op` (``= -div``)."""
    _expect(phi, SymTensorField)
    _need(metric, phi)
    return OneFormField(metric.grid, kernel_for(metric).div(phi.data))


def trace_and_traceless(phi: SymTensorField, metric: MetricField):
    """Return ``(trace_g phi, phi - (trace/n) g)``.

    The traceless part is adjusted in the last bit where needed so that
    ``traceless + (trace/n) g`` reproduces ``phi`` exactly.
    """
    _expect(phi, SymTensorField)
    _need(metric, phi)
    K = kernel_for(metric)
    tr = K.trace(phi.data)
    pure = (tr / metric.n)[None] * K.gcomp
    return ScalarField(metric.grid, tr[None]), SymTensorField(metric.grid, exact_remainder(phi.data, pure))


def exterior_derivative(x, metric: MetricField | None = None, order: int = 4):
    """``d`` on scalars (giving one-forms) and one-forms (giving two-forms).

    No metric enters; ``metric`` only supplies the stencil order when given.
    """
    D = metric.differ if metric is not None else Differ(x.grid.spacing, order)
    if metric is not None:
        _need(metric, x)
    if isinstance(x, ScalarField):
        return OneFormField(x.grid, np.stack([D.db(x.values, k) for k in range(x.grid.n)]))
    if isinstance(x, OneFormField):
        th = x.data
        return TwoFormField(x.grid, np.stack([D.db(th[j], i) - D.db(th[i], j)
                                              for i, j in antisym_pairs(x.grid.n)]))
    raise MismatchError(f"kind-mismatch: d is defined on scalar and oneform, got {x.kind}")


def codifferential(x, metric: MetricField):
    """``delta``: exact adjoint of :func:`exterior_derivative`; ``delta theta = -div xi``."""
    _need(metric, x)
    K = kernel_for(metric)
    if isinstance(x, OneFormField):
        return ScalarField(metric.grid, K.cod1(x.data)[None])
    if isinstance(x, TwoFormField):
        return OneFormField(metric.grid, K.cod2(x.data))
    raise MismatchError(f"kind-mismatch: codifferential takes oneform or twoform, got {x.kind}")


def cauchy_ahlfors(theta: OneFormField, metric: MetricField) -> SymTensorField:
    """``S theta = delta* theta + (1/n)(delta theta) g``, the traceless part of ``delta*``."""
    _expect(theta, OneFormField)
    _need(metric, theta)
    return SymTensorField(metric.grid, kernel_for(metric).S(theta.data))


def cauchy_ahlfors_adjoint(phi: SymTensorField, metric: MetricField) -> OneFormField:
    """Exact adjoint of :func:`cauchy_ahlfors` (``delta`` of the traceless part)."""
    _expect(phi, SymTensorField)
    _need(metric, phi)
    return OneFormField(metric.grid, kernel_for(metric).S_adj(phi.data))


def ahlfors_laplacian(theta: OneFormField, metric: MetricField) -> OneFormField:
    _expect(theta, OneFormField)
    _need(metric, theta)
    return OneFormField(metric.grid, kernel_for(metric).ahlfors(theta.data))


def sampson_laplacian(theta: OneFormField, metric: MetricField) -> OneFormField:
    """``2 delta delta* theta - d delta theta``."""
    _expect(theta, OneFormField)
    _need(metric, theta)
    return OneFormField(metric.grid, kernel_for(metric).sampson(theta.data))


def hodge_laplacian(theta: OneFormField, metric: MetricField) -> OneFormField:
    """``(delta d + d delta) theta``."""
    _expect(theta, OneFormField)
    _need(metric, theta)
    return OneFormField(metric.grid, kernel_for(metric).hodge(theta.data))


def ricci_contract(ric: SymTensorField, theta: OneFormField, metric: MetricField) -> OneFormField:
    """``Ric(xi, .)`` with ``xi`` the metric dual of ``theta``."""
    _need(metric, ric, theta)
    xi = kernel_for(metric).raise_one(theta.data)
    return OneFormField(metric.grid, np.einsum("ij...,j...->i...", ric.full(), xi))


def weitzenboeck_residual(theta: OneFormField, metric: MetricField, curv=None) -> OneFormField:
    """``S*S theta - [1/2 delta d theta + ((n-1)/n) d delta theta - Ric(xi, .)]``.

    The bracket is the Weitzenboeck form of the Ahlfors Laplacian; the
    residual vanishes in the continuum and decays at stencil order here.
    """
    _expect(theta, OneFormField)
    _need(metric, theta)
    curv = curvature(metric) if curv is None else curv
    K = kernel_for(metric)
    n = metric.n
    th = theta.data
    bracket = 0.5 * K.cod2(K.d1(th)) + ((n - 1) / n) * K.d0(K.cod1(th))
    bracket = bracket - ricci_contract(curv.ricci, theta, metric).data
    return OneFormField(metric.grid, K.ahlfors(th) - bracket)


# ---------------------------------------------------------------------------
# solvable operator objects


@dataclass(frozen=True)
class OperatorHandle:
    """Linear map on one-forms, usable by the solver.

    ``apply_array`` acts on raw ``(n, *dims)`` component arrays; ``apply``
    wraps it for fields.
    """

    name: str
    metric: MetricField
    apply_array: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    symmetry: str = "self-adjoint-psd"
    kernel_hint: str = ""

    def apply(self, theta: OneFormField) -> OneFormField:
        _expect(theta, OneFormField)
        _need(self.metric, theta)
        return OneFormField(self.metric.grid, self.apply_array(theta.data))

    __call__ = apply


def dds_operator(metric: MetricField) -> OperatorHandle:
    """``delta delta*``; kernel = discrete Killing one-forms."""
    return OperatorHandle("delta_delta_star", metric, kernel_for(metric).dds,
                          kernel_hint="Killing one-forms (translations on a flat torus)")


def ahlfors_operator(metric: MetricField) -> OperatorHandle:
    """``S* S``; kernel = discrete conformal Killing one-forms."""
    return OperatorHandle("ahlfors", metric, kernel_for(metric).ahlfors,
                          kernel_hint="conformal Killing one-forms")


def sampson_operator(metric: MetricField) -> OperatorHandle:
    return OperatorHandle("sampson", metric, kernel_for(metric).sampson, symmetry="general",
                          kernel_hint="infinitesimal harmonic transformations")


def hodge_operator(metric: MetricField) -> OperatorHandle:
    return OperatorHandle("hodge", metric, kernel_for(metric).hodge,
                          kernel_hint="harmonic one-forms (constants on a flat torus)")



OPERATOR_FACTORIES = {
    "delta_delta_star": dds_operator,
    "ahlfors": ahlfors_operator,
    "sampson": sampson_operator,
    "hodge": hodge_operator,
}
