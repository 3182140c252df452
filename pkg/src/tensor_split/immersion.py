"""Graph hypersurfaces in flat ``T^n x R`` and smooth maps between tori.

Hypersurfaces are graphs of a periodic height ``F``; their second
fundamental form is a Codazzi tensor for the induced metric, which gives
``delta phi = -d(trace_g phi)`` and, through the two splittings,

* ``int xi(trace_g phi) dv = -|delta* theta|^2`` (Berger-Ebin of ``phi``),
* ``S*S theta = -(n-1) dH`` with ``H = trace_g(phi)/n`` (York of ``phi``).

Maps are ``f(x) = A x + p(x)`` with an integer winding matrix ``A`` and a
periodic perturbation ``p``; the target metric is an analytic
:class:`~tensor_split.specs.MetricSpec` evaluated at the mapped points.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .decomposition import BergerEbinResult, YorkResult, berger_ebin, york
from .errors import MismatchError
from .grid import Grid, OneFormField, ScalarField, SymTensorField, sym_pairs
from .metric import (MetricField, curvature, integrate, l2_inner, l2_norm, mean_and_stddev, trace_g)
from .ricci import lie_integral
from .operators import (ahlfors_laplacian, codifferential, divergence_sym, exterior_derivative,
                        sampson_laplacian)
from .solver import SolveOptions
from .specs import MetricSpec
from .stencils import Differ

DEFAULT_TOL = 1e-6


def _sup(a) -> float:
    return float(np.max(np.abs(a)))


# ---------------------------------------------------------------------------
# graph hypersurfaces


@dataclass(frozen=True)
class GraphHypersurface:
    """Second-order data of the graph of ``F`` over the flat torus."""

    height: ScalarField
    induced_metric: MetricField
    normal_scale: ScalarField
    second_form: SymTensorField
    shape_operator: np.ndarray = field(repr=False)
    mean_curvature: ScalarField = field(repr=False)

    @property
    def n(self) -> int:
        return self.height.grid.n


def graph_hypersurface(F: ScalarField, order: int = 4) -> GraphHypersurface:
    """Induced metric ``delta + dF dF``, ``phi = Hess F / W`` and ``H = trace_g(phi) / n``.

    ``W = sqrt(1 + |grad F|^2)`` with the flat base metric.  Derivatives of
    ``F`` use central stencils of the given order.
    """
    grid = F.grid
    n = grid.n
    D = Differ(grid.spacing, order)
    f = F.values
    dF = [D.d1(f, i) for i in range(n)]
    W = np.sqrt(1.0 + sum(d * d for d in dF))
    g = np.empty((len(sym_pairs(n)), *grid.dims))
    phi = np.empty_like(g)
    for c, (i, j) in enumerate(sym_pairs(n)):
        g[c] = dF[i] * dF[j] + (1.0 if i == j else 0.0)
        hess = D.d2(f, i, j)
        phi[c] = hess / W
    metric = MetricField(SymTensorField(grid, g), order)
    phi = SymTensorField(grid, phi)
    A = np.einsum("ik...,kj...->ij...", metric.inverse, phi.full())
    H = ScalarField(grid, trace_g(phi, metric).values[None] / n)
    return GraphHypersurface(F, metric, ScalarField(grid, W[None]), phi, A, H)


def codazzi_divergence_check(hyp: GraphHypersurface) -> float:
    """``|delta phi + d(trace_g phi)| / (1 + |d trace_g phi|)`` on the induced metric."""
    m = hyp.induced_metric
    dtr = exterior_derivative(trace_g(hyp.second_form, m), m)
    res = OneFormField(m.grid, divergence_sym(hyp.second_form, m).data + dtr.data)
    return l2_norm(res, m) / (1.0 + l2_norm(dtr, m))


@dataclass(frozen=True)
class HypersurfaceReport:
    """Berger-Ebin and York of the second fundamental form.

    ``lie_integral`` is ``int xi(trace_g phi) dv`` for the Berger-Ebin
    ``theta``; the derived law is ``lie_integral = -|delta* theta|^2``.
    ``ahlfors_constant`` is the least-squares ``c`` in ``S*S theta = c dH``.
    """

    phi_norm: float
    codazzi_residual: float
    h_stddev: float
    h_mean: float
    killing_norm: float
    lie_integral: float
    killing_sq_norm: float
    identity_residual: float
    identity_relative: float
    h_constant: bool
    xi_killing: bool
    integral_zero: bool
    umbilic_split_residual: float | None
    tt_norm: float
    minimal: bool
    ahlfors_constant: float | None
    ahlfors_parallel_residual: float | None
    derived_ahlfors_constant: float
    reference_ahlfors_constant: float
    derived_identity_constant: float
    tol: float
    outside_hypothesis: bool

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return self.h_constant, self.xi_killing, self.integral_zero

    @property
    def flags_agree(self) -> bool:
        return len(set(self.flags)) == 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags_agree"] = self.flags_agree
        return d


def hypersurface_decomposition_report(hyp: GraphHypersurface, opts: SolveOptions = SolveOptions(),
                                      tol: float = DEFAULT_TOL
                                      ) -> tuple[BergerEbinResult, YorkResult, HypersurfaceReport]:
    """Run both splittings on ``phi`` and evaluate the constant-H / Killing / integral triple.

    When ``H`` is constant within ``tol`` the umbilic split residual
    ``|phi - H g - phiTT|`` is reported; otherwise it is ``None``.
    """
    m = hyp.induced_metric
    phi, H = hyp.second_form, hyp.mean_curvature
    n = m.n
    be = berger_ebin(phi, m, opts)
    yk = york(phi, m, opts)
    phi_norm = l2_norm(phi, m)
    h_mean, h_std = mean_and_stddev(H, m)
    k_norm = l2_norm(be.killing, m)
    k_sq = l2_inner(be.killing, be.killing, m)
    tr = trace_g(phi, m)
    I = lie_integral(be.theta, tr, m)
    ident = abs(I + k_sq)
    h_const = h_std <= tol * (1.0 + _sup(H.values))
    umb = None
    if h_const:
        res = phi.data - H.data * m.g.data - yk.phiTT.data
        umb = l2_norm(SymTensorField(m.grid, res), m)
    dH = exterior_derivative(H, m)
    dH_sq = l2_inner(dH, dH, m)
    c = par = None
    if dH_sq > 0:
        ss = ahlfors_laplacian(yk.theta, m)
        c = l2_inner(ss, dH, m) / dH_sq
        par = l2_norm(OneFormField(m.grid, ss.data - c * dH.data), m) / (1.0 + l2_norm(ss, m))
    tt = l2_norm(yk.phiTT, m)
    report = HypersurfaceReport(
        phi_norm=phi_norm, codazzi_residual=codazzi_divergence_check(hyp), h_stddev=h_std, h_mean=h_mean,
        killing_norm=k_norm, lie_integral=I, killing_sq_norm=k_sq, identity_residual=ident,
        identity_relative=ident / (1.0 + k_sq), h_constant=h_const,
        xi_killing=k_norm <= tol * (1.0 + phi_norm), integral_zero=abs(I) <= tol * (1.0 + phi_norm**2),
        umbilic_split_residual=umb, tt_norm=tt,
        minimal=h_const and abs(h_mean) <= tol * (1.0 + phi_norm),
        ahlfors_constant=c, ahlfors_parallel_residual=par,
        derived_ahlfors_constant=-(n - 1.0), reference_ahlfors_constant=-1.0 / n,
        derived_identity_constant=-1.0, tol=tol, outside_hypothesis=n < 3)
    return be, yk, report


# ---------------------------------------------------------------------------
# torus maps


@dataclass(frozen=True)
class TorusMap:
    """``f(x)^a = sum_i A_ai (Lbar_a / L_i) x_i + p^a(x)`` from the source grid into ``T^m``.

    The length ratio keeps ``f`` well defined for any integer winding matrix.
    """

    winding: np.ndarray
    perturbation: np.ndarray
    source: MetricField
    target: MetricSpec
    target_lengths: tuple[float, ...]
    order: int = 4

    def __post_init__(self):
        A = np.asarray(self.winding)
        m, n = A.shape
        if n != self.source.n or m != self.target.n or len(self.target_lengths) != m:
            raise MismatchError("winding matrix must be (target dim) x (source dim)")
        if not np.array_equal(A, np.round(A)):
            raise MismatchError("winding matrix must be integer")
        if self.perturbation.shape != (m, *self.source.grid.dims):
            raise MismatchError("perturbation must have shape (m, *dims)")

    @property
    def grid(self) -> Grid:
        return self.source.grid

    @property
    def m(self) -> int:
        return len(self.target_lengths)

    def linear_part(self) -> np.ndarray:
        L = self.grid.lengths
        return np.asarray(self.winding, float) * (np.asarray(self.target_lengths)[:, None] / np.asarray(L)[None])

    def points(self) -> np.ndarray:
        """Mapped points ``f(x)``, shape ``(m, *dims)``."""
        x = self.grid.coords()
        return np.einsum("ai,i...->a...", self.linear_part(), x) + self.perturbation

    def differential(self) -> np.ndarray:
        """``f_*[a, i] = Abar_ai + d_i p^a``."""
        D = Differ(self.grid.spacing, self.order)
        B = self.linear_part()
        out = np.empty((self.m, self.grid.n, *self.grid.dims))
        for a in range(self.m):
            for i in range(self.grid.n):
                out[a, i] = B[a, i] + D.d1(self.perturbation[a], i)
        return out

    def hessian(self) -> np.ndarray:
        """``d_i d_j f^a = d_i d_j p^a``, shape ``(m, n, n, *dims)``."""
        D = Differ(self.grid.spacing, self.order)
        n = self.grid.n
        out = np.empty((self.m, n, n, *self.grid.dims))
        for a in range(self.m):
            for i, j in sym_pairs(n):
                p = self.perturbation[a]
                out[a, i, j] = out[a, j, i] = D.d2(p, i, j)
        return out

    def target_metric(self):
        """``gbar``, ``d gbar`` at the mapped points."""
        G, dG, _ = self.target.evaluate(self.points(), self.target_lengths)
        return G, dG


def torus_map(source: MetricField, winding, target: MetricSpec | None = None,
              perturbation=None, target_lengths=None, order: int | None = None) -> TorusMap:
    A = np.atleast_2d(np.asarray(winding, dtype=float))
    m = A.shape[0]
    target = target if target is not None else MetricSpec("flat_diagonal", {"diag": [1.0] * m})
    lengths = tuple(target_lengths) if target_lengths is not None else (1.0,) * m
    p = np.zeros((m, *source.grid.dims)) if perturbation is None else np.asarray(perturbation, float)
    return TorusMap(A, p, source, target, lengths, source.order if order is None else order)


def pullback_metric(fmap: TorusMap) -> SymTensorField:
    """``g*_ij = gbar_ab(f) f*^a_i f*^b_j``."""
    F = fmap.differential()
    G, _ = fmap.target_metric()
    full = np.einsum("ai...,ab...,bj...->ij...", F, G, F, optimize=True)
    full = 0.5 * (full + np.swapaxes(full, 0, 1))
    return SymTensorField.from_full(fmap.grid, full)


def _target_christoffel(G, dG):
    Gi = np.linalg.inv(np.moveaxis(G, (0, 1), (-2, -1)))
    Gi = np.moveaxis(Gi, (-2, -1), (0, 1))
    # T[d, b, c] = d_b g_dc + d_c g_db - d_d g_bc
    T = np.einsum("bdc...->dbc...", dG) + np.einsum("cdb...->dbc...", dG) - dG
    return 0.5 * np.einsum("ad...,dbc...->abc...", Gi, T, optimize=True)


def tension_field(fmap: TorusMap) -> np.ndarray:
    """``tau^a = g^ij (d_i d_j f^a - Gamma^k_ij d_k f^a + Gammabar^a_bc(f) d_i f^b d_j f^c)``.

    Returned as a target-indexed array of shape ``(m, *dims)``.
    """
    metric = fmap.source
    Gi = metric.inverse
    F = fmap.differential()
    Hf = fmap.hessian()
    Gam = curvature(metric).christoffel
    G, dG = fmap.target_metric()
    Gbar = _target_christoffel(G, dG)
    Df = Hf - np.einsum("kij...,ak...->aij...", Gam, F, optimize=True)
    Df = Df + np.einsum("abc...,bi...,cj...->aij...", Gbar, F, F, optimize=True)
    return np.einsum("ij...,aij...->a...", Gi, Df, optimize=True)


def _target_norm(fmap: TorusMap, tau: np.ndarray) -> float:
    G, _ = fmap.target_metric()
    dens = np.einsum("a...,ab...,b...->...", tau, G, tau)
    return float(np.sqrt(max(integrate(dens, fmap.source), 0.0)))


def energy(fmap: TorusMap) -> float:
    """``E(f) = 1/2 int trace_g(f* gbar) dv_g``."""
    return 0.5 * integrate(trace_g(pullback_metric(fmap), fmap.source).values, fmap.source)


@dataclass(frozen=True)
class MapReport:
    """Energy, tension and the harmonic / Sampson-kernel / divergence verdicts of a map.

    ``c_estimate`` is ``mean(div xi - trace_g g*)``; ``divergence_stddev`` is
    the spread of the same quantity.  ``energy_density`` is the mean of
    ``1/2 trace_g g*`` and ``energy_density_stddev`` its spread; for a
    harmonic map with Sampson-harmonic ``theta`` the energy equals
    ``energy_density * Vol``.
    """

    energy: float
    volume: float
    tension_norm: float
    balance_residual: float
    balance_relative: float
    sampson_norm: float
    divergence_stddev: float
    c_estimate: float
    harmonic: bool
    sampson_harmonic: bool
    divergence_affine: bool
    consistent: bool
    min_singular_value: float
    rank_ok: bool
    energy_density: float
    energy_density_stddev: float
    energy_per_volume: float
    tol: float

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return self.harmonic, self.sampson_harmonic, self.divergence_affine

    def to_dict(self) -> dict:
        return asdict(self)


def balance_residual(fmap: TorusMap) -> tuple[float, float]:
    """Both sides of ``delta(g* - 1/2 trace_g(g*) g) = -gbar(tau, f_* .)``.

    Returns the L2 residual and the residual divided by ``1 + |rhs|``.
    """
    m = fmap.source
    gs = pullback_metric(fmap)
    tr = trace_g(gs, m)
    lhs = divergence_sym(SymTensorField(m.grid, gs.data - 0.5 * tr.data * m.g.data), m).data
    tau = tension_field(fmap)
    G, _ = fmap.target_metric()
    F = fmap.differential()
    rhs = -np.einsum("a...,ab...,bj...->j...", tau, G, F, optimize=True)
    r = l2_norm(OneFormField(m.grid, lhs - rhs), m)
    return r, r / (1.0 + l2_norm(OneFormField(m.grid, rhs), m))


def harmonic_balance_check(fmap: TorusMap, opts: SolveOptions = SolveOptions(),
                           tol: float = DEFAULT_TOL) -> tuple[BergerEbinResult, MapReport]:
    """Berger-Ebin of the pullback metric and the three map verdicts.

    (i) ``|tau| <= tol (1 + |g*|)``; (ii) ``|Sampson(theta)| <= tol (1 + |g*|)``;
    (iii) ``stddev(div xi - trace_g g*) <= tol (1 + sup|trace_g g*|)`` with
    ``div xi = -delta theta``.  ``consistent`` holds unless exactly two of the
    three verdicts are true.
    """
    m = fmap.source
    gs = pullback_metric(fmap)
    be = berger_ebin(gs, m, opts)
    gs_norm = l2_norm(gs, m)
    tau_norm = _target_norm(fmap, tension_field(fmap))
    bal, bal_rel = balance_residual(fmap)
    samp = l2_norm(sampson_laplacian(be.theta, m), m)
    tr = trace_g(gs, m)
    div_xi = -codifferential(be.theta, m).values
    c_mean, c_std = mean_and_stddev(ScalarField(m.grid, (div_xi - tr.values)[None]), m)
    flags = (tau_norm <= tol * (1.0 + gs_norm), samp <= tol * (1.0 + gs_norm),
             c_std <= tol * (1.0 + _sup(tr.values)))
    sv = np.linalg.svd(np.moveaxis(fmap.differential(), (0, 1), (-2, -1)), compute_uv=False)
    min_sv = float(sv[..., -1].min())
    dens = ScalarField(m.grid, 0.5 * tr.data)
    e_mean, e_std = mean_and_stddev(dens, m)
    E = 0.5 * integrate(tr.values, m)
    vol = integrate(np.ones(m.grid.dims), m)
    report = MapReport(
        energy=E, volume=vol, tension_norm=tau_norm, balance_residual=bal, balance_relative=bal_rel,
        sampson_norm=samp, divergence_stddev=c_std, c_estimate=c_mean,
        harmonic=flags[0], sampson_harmonic=flags[1], divergence_affine=flags[2],
        consistent=sum(flags) != 2, min_singular_value=min_sv,
        rank_ok=min_sv > 1e-12 * (1.0 + gs_norm), energy_density=e_mean, energy_density_stddev=e_std,
        energy_per_volume=E / vol, tol=tol)
    return be, report
