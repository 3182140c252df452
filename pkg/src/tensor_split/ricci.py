"""Both splittings applied to the Ricci tensor, plus almost-soliton residuals.

Identities checked here, under the operator normalization of
:mod:`tensor_split.operators` (``S* = delta`` on traceless tensors):

* contracted Bianchi ``delta Ric = -1/2 ds``;
* Berger-Ebin of Ric: ``delta delta* theta = -1/2 ds`` and hence
  ``int xi(s) dv = <theta, ds> = -2 |delta* theta|^2``;
* York of Ric: ``S*S theta = -((n-2)/(2n)) ds``,
  ``int xi(s) dv = -(2n/(n-2)) |S theta|^2`` and
  ``Sampson(theta) = -(n-2) d lam``.

Reports carry both the derived constants (the tested ones) and the
constants as printed in the reference derivation, which assume ``S* = 2 delta``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .decomposition import BergerEbinResult, YorkResult, berger_ebin, york
from .errors import MismatchError
from .grid import OneFormField, ScalarField, SymTensorField, VectorField
from .metric import (MetricField, curvature, directional_derivative, flat, integrate, l2_inner,
                     l2_norm, mean_and_stddev, pointwise_inner, sharp)
from .operators import (ahlfors_laplacian, cauchy_ahlfors, codifferential, divergence_sym,
                        exterior_derivative, killing_op, sampson_laplacian)
from .solver import SolveOptions

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6


def lie_integral(theta: OneFormField, f: ScalarField, metric: MetricField) -> float:
    """``int xi(f) dv`` with ``xi`` the metric dual of ``theta``."""
    return integrate(directional_derivative(sharp(theta, metric), f, metric).values, metric)


def _sup(f) -> float:
    return float(np.max(np.abs(f.data))) if f.data.size else 0.0


@dataclass(frozen=True)
class Theorem1Report:
    """Berger-Ebin of Ric: constant ``s`` / Killing ``xi`` / zero Lie integral."""

    scalar_curvature_stddev: float
    scalar_curvature_sup: float
    ricci_norm: float
    killing_part_norm: float
    killing_residual: float
    lie_integral: float
    identity_residual: float
    identity_relative: float
    bianchi_residual: float
    bianchi_relative: float
    s_constant: bool
    xi_killing: bool
    integral_zero: bool
    tol: float
    derived_identity_constant: float = -2.0
    reference_identity_constant: float = -1.0
    notes: tuple = ()

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return self.s_constant, self.xi_killing, self.integral_zero

    @property
    def flags_agree(self) -> bool:
        return len(set(self.flags)) == 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        d["flags_agree"] = self.flags_agree
        return d


@dataclass(frozen=True)
class Theorem2Report:
    """York of Ric: constant ``s`` / trivial split / zero Lie integral, plus Einstein check."""

    s_stddev: float
    conformal_killing_residual: float
    lie_integral: float
    identity_residual: float
    lambda_minus_s_over_n: float
    ahlfors_identity_residual: float
    sampson_identity_residual: float
    einstein_residual: float
    tt_norm: float
    s_constant: bool
    trivial_decomposition: bool
    integral_zero: bool
    einstein: bool
    outside_hypothesis: bool
    tol: float
    derived_ahlfors_constant: float = 0.0
    reference_ahlfors_constant: float = 0.0
    derived_identity_constant: float = 0.0
    notes: tuple = ()

    @property
    def flags(self) -> tuple[bool, bool, bool]:
        return self.s_constant, self.trivial_decomposition, self.integral_zero

    @property
    def flags_agree(self) -> bool:
        return len(set(self.flags)) == 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        d["flags_agree"] = self.flags_agree
        return d


def bianchi_residual(metric: MetricField) -> tuple[float, float]:
    """``|delta Ric + 1/2 ds|`` and the same divided by ``1 + |ds|``."""
    curv = curvature(metric)
    ds = exterior_derivative(curv.scalar, metric)
    res = divergence_sym(curv.ricci, metric).data + 0.5 * ds.data
    r = l2_norm(OneFormField(metric.grid, res), metric)
    return r, r / (1.0 + l2_norm(ds, metric))


def ricci_berger_ebin(metric: MetricField, opts: SolveOptions = SolveOptions(),
                      tol: float = DEFAULT_TOL) -> tuple[BergerEbinResult, Theorem1Report]:
    """Berger-Ebin split of Ric with the constant-s / Killing / integral verdicts.

    Thresholds: ``stddev(s) <= tol (1 + sup|s|)``,
    ``|delta* theta| <= tol (1 + |Ric|)`` and ``|int xi(s)| <= tol (1 + |Ric|^2)``.
    """
    curv = curvature(metric)
    s, ric = curv.scalar, curv.ricci
    res = berger_ebin(ric, metric, opts)
    _, s_std = mean_and_stddev(s, metric)
    s_sup = _sup(s)
    ric_norm = l2_norm(ric, metric)
    k_norm = l2_norm(res.killing, metric)
    th_norm = l2_norm(res.theta, metric)
    killing_residual = k_norm / th_norm if th_norm > 1e-12 * (1.0 + ric_norm) else k_norm
    I = lie_integral(res.theta, s, metric)
    k_sq = l2_inner(res.killing, res.killing, metric)
    ident = abs(I + 2.0 * k_sq)
    b_abs, b_rel = bianchi_residual(metric)
    notes = []
    s_const = s_std <= tol * (1.0 + s_sup)
    if s_const:
        notes.append("constant scalar curvature: the metric is its own Yamabe representative; "
                     "no conformal-factor solve is performed")
    report = Theorem1Report(
        scalar_curvature_stddev=s_std, scalar_curvature_sup=s_sup, ricci_norm=ric_norm,
        killing_part_norm=k_norm, killing_residual=killing_residual, lie_integral=I,
        identity_residual=ident, identity_relative=ident / (1.0 + k_sq),
        bianchi_residual=b_abs, bianchi_relative=b_rel,
        s_constant=s_const, xi_killing=k_norm <= tol * (1.0 + ric_norm),
        integral_zero=abs(I) <= tol * (1.0 + ric_norm**2), tol=tol, notes=tuple(notes))
    return res, report


@dataclass(frozen=True)
class SampsonCheck:
    """``|Sampson(theta) + (n-2) d lam| / (1 + |d lam|)`` and the two intermediate identities.

    ``scalar_identity``: ``ds + d delta theta - n d lam`` (from the trace).
    ``divergence_identity``: ``ds + 2 delta delta* theta - 2 d lam``.
    """

    residual: float
    scalar_identity: float
    divergence_identity: float
    dlam_norm: float

    def to_dict(self) -> dict:
        return asdict(self)


def sampson_identity_check(metric: MetricField, york_result: YorkResult) -> SampsonCheck:
    n = metric.n
    theta, lam = york_result.theta, york_result.lam
    s = curvature(metric).scalar
    dlam = exterior_derivative(lam, metric).data
    ds = exterior_derivative(s, metric).data
    ddth = exterior_derivative(codifferential(theta, metric), metric).data
    dds = divergence_sym(killing_op(theta, metric), metric).data
    g = metric.grid

    def norm(a):
        return l2_norm(OneFormField(g, a), metric)

    main = sampson_laplacian(theta, metric).data + (n - 2) * dlam
    dl = norm(dlam)
    return SampsonCheck(norm(main) / (1.0 + dl), norm(ds + ddth - n * dlam),
                        norm(ds + 2.0 * dds - 2.0 * dlam), dl)


def ricci_york(metric: MetricField, opts: SolveOptions = SolveOptions(),
               tol: float = DEFAULT_TOL) -> tuple[YorkResult, Theorem2Report]:
    """York split of Ric with the constant-s / trivial / integral verdicts.

    ``trivial_decomposition`` means ``|S theta| <= tol (1 + |Ric|)``; the
    Einstein verdict additionally needs ``|phiTT|`` below the same threshold.
    On surfaces the traceless Ricci tensor vanishes identically, so the split
    is trivial whatever ``s`` does; the report is flagged ``outside_hypothesis``.
    """
    n = metric.n
    curv = curvature(metric)
    s, ric = curv.scalar, curv.ricci
    res = york(ric, metric, opts)
    g = metric.grid
    _, s_std = mean_and_stddev(s, metric)
    s_sup = _sup(s)
    ric_norm = l2_norm(ric, metric)
    thr = tol * (1.0 + ric_norm)
    S = cauchy_ahlfors(res.theta, metric)
    s_norm = l2_norm(S, metric)
    I = lie_integral(res.theta, s, metric)
    ds = exterior_derivative(s, metric).data
    c_derived = (n - 2) / (2 * n)
    ahl = ahlfors_laplacian(res.theta, metric).data + c_derived * ds
    samp = sampson_laplacian(res.theta, metric).data + (n - 2) * exterior_derivative(res.lam, metric).data
    ein = ric.data - (s.values / n)[None] * metric.g.data
    tt_norm = l2_norm(res.phiTT, metric)
    lam_dev = float(np.max(np.abs(res.lam.values - s.values / n)))
    # derived integral law for n >= 3; no analogue on surfaces
    if n > 2:
        ident_const = -2.0 * n / (n - 2)
        ident = abs(I - ident_const * s_norm**2)
    else:
        ident_const, ident = 0.0, abs(I)
    s_const = s_std <= tol * (1.0 + s_sup)
    _, lam_std = mean_and_stddev(res.lam, metric)
    trivial = s_norm <= thr
    einstein = trivial and tt_norm <= thr and lam_std <= tol * (1.0 + _sup(res.lam))
    notes = []
    if n < 3:
        notes.append("n = 2: traceless Ricci vanishes identically; outside the n >= 3 setting")
    if s_const:
        notes.append("constant scalar curvature: York split of Ric expected trivial with lam = s/n")
    report = Theorem2Report(
        s_stddev=s_std, conformal_killing_residual=s_norm, lie_integral=I, identity_residual=ident,
        lambda_minus_s_over_n=lam_dev,
        ahlfors_identity_residual=l2_norm(OneFormField(g, ahl), metric),
        sampson_identity_residual=l2_norm(OneFormField(g, samp), metric),
        einstein_residual=l2_norm(SymTensorField(g, ein), metric), tt_norm=tt_norm,
        s_constant=s_const, trivial_decomposition=trivial,
        integral_zero=abs(I) <= tol * (1.0 + ric_norm**2), einstein=einstein,
        outside_hypothesis=n < 3, tol=tol,
        derived_ahlfors_constant=-c_derived, reference_ahlfors_constant=-(n - 2) / n,
        derived_identity_constant=ident_const, notes=tuple(notes))
    return res, report


@dataclass(frozen=True)
class SolitonReport:
    """Residual of ``Ric = 1/2 L_xi g + lam g`` for given ``xi`` and ``lam``."""

    residual_field: ScalarField = field(repr=False)
    residual_sup: float
    residual_l2: float
    lam_stddev: float
    killing_norm: float
    sampson_theta_residual: float
    is_soliton: bool
    is_trivial: bool
    tol: float
    notes: tuple = ()

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "residual_field"}
        d["notes"] = list(self.notes)
        return d


def soliton_residual(metric: MetricField, xi: VectorField, lam: ScalarField,
                     tol: float = DEFAULT_TOL) -> SolitonReport:
    """Almost-soliton residual ``Ric - delta* theta - lam g`` with ``theta`` dual to ``xi``.

    ``is_soliton``: ``stddev(lam) <= tol (1 + sup|lam|)``.
    ``is_trivial``: ``|delta* theta| <= tol (1 + |Ric|)``.
    The Sampson Laplacian of ``theta`` is reported: it vanishes exactly when
    ``xi`` is an infinitesimal harmonic transformation.
    """
    for f in (xi, lam):
        if f.grid != metric.grid:
            raise MismatchError("grid-mismatch")
    ric = curvature(metric).ricci
    theta = flat(xi, metric)
    K = killing_op(theta, metric)
    res = SymTensorField(metric.grid, ric.data - (K.data + lam.data * metric.g.data))
    pw = ScalarField(metric.grid, np.sqrt(np.maximum(pointwise_inner(res, res, metric), 0.0))[None])
    ric_norm = l2_norm(ric, metric)
    k_norm = l2_norm(K, metric)
    _, lam_std = mean_and_stddev(lam, metric)
    return SolitonReport(
        residual_field=pw, residual_sup=_sup(pw), residual_l2=l2_norm(res, metric), lam_stddev=lam_std,
        killing_norm=k_norm, sampson_theta_residual=l2_norm(sampson_laplacian(theta, metric), metric),
        is_soliton=lam_std <= tol * (1.0 + _sup(lam)), is_trivial=k_norm <= tol * (1.0 + ric_norm),
        tol=tol, notes=("sphere classification not checked",))
