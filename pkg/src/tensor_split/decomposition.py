"""L2-orthogonal splittings of symmetric 2-tensors.

* Berger-Ebin: ``phi = delta* theta + phi0`` with ``delta phi0 = 0``.
* York: ``phi = (delta* theta + lam g) + phiTT`` with ``phiTT`` trace-free and
  divergence-free, computed through the traceless part
  ``phi - (tr phi / n) g = S theta + phiTT``.

Remainders are defined by subtraction (adjusted in the last bit where a
representable value exists) so the parts add back to the input; all
approximation error shows up in the constraint norms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import MismatchError
from .grid import OneFormField, ScalarField, SymTensorField
from .metric import MetricField, l2_inner, l2_norm, trace_g
from .numerics import exact_remainder, reconstruction_mismatches
from .operators import (ahlfors_operator, cauchy_ahlfors, cauchy_ahlfors_adjoint, codifferential,
                        dds_operator, divergence_sym, killing_op, trace_and_traceless)
from .solver import SolveOptions, SolveStats, solve_spsd

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrthoDiagnostics:
    """Pairwise inner products and constraint norms of a set of parts.

    ``inner`` maps ``"a|b"`` to ``<a, b>``; ``relative`` holds the same numbers
    divided by ``|phi|^2`` and the constraint norms divided by ``|phi|``.
    """

    phi_norm: float
    sq_norms: dict
    inner: dict
    constraints: dict
    relative: dict

    def max_relative_inner(self, pairs=None) -> float:
        keys = self.inner.keys() if pairs is None else [f"{a}|{b}" for a, b in pairs]
        return max((abs(self.relative[k]) for k in keys), default=0.0)

    def to_dict(self) -> dict:
        return {"phi_norm": self.phi_norm, "sq_norms": dict(self.sq_norms), "inner": dict(self.inner),
                "constraints": dict(self.constraints), "relative": dict(self.relative)}


def orthogonality_report(parts: dict, metric: MetricField, phi: SymTensorField | None = None,
                         pairs=None) -> OrthoDiagnostics:
    """Recompute pairwise ``l2_inner`` values and constraint norms of ``parts``.

    Constraint norms depend on the part name: ``phi0`` gets its divergence,
    ``phiTT`` its divergence and trace.  ``pairs`` restricts which pairs are
    tabulated (default: all distinct pairs in insertion order).
    """
    names = list(parts)
    for f in parts.values():
        if f.grid != metric.grid:
            raise MismatchError("grid-mismatch")
    if pairs is None:
        pairs = [(a, b) for i, a in enumerate(names) for b in names[i + 1:]]
    phi_norm = l2_norm(phi, metric) if phi is not None else 0.0
    sq = {k: l2_inner(v, v, metric) for k, v in parts.items()}
    inner = {f"{a}|{b}": l2_inner(parts[a], parts[b], metric) for a, b in pairs}
    cons = {}
    for name, f in parts.items():
        if name in ("phi0", "phiTT"):
            cons[f"div_{name}"] = l2_norm(divergence_sym(f, metric), metric)
        if name == "phiTT":
            cons["trace_phiTT"] = l2_norm(trace_g(f, metric), metric)
    scale = phi_norm if phi_norm > 0 else 1.0
    rel = {k: v / scale**2 for k, v in inner.items()}
    rel.update({k: v / scale for k, v in cons.items()})
    return OrthoDiagnostics(phi_norm, sq, inner, cons, rel)


@dataclass(frozen=True)
class BergerEbinResult:
    theta: OneFormField
    killing: SymTensorField
    phi0: SymTensorField
    stats: SolveStats
    diagnostics: OrthoDiagnostics
    mismatches: int

    @property
    def reconstruction_exact(self) -> bool:
        return self.mismatches == 0


@dataclass(frozen=True)
class YorkResult:
    theta: OneFormField
    killing: SymTensorField
    lam: ScalarField
    phiTT: SymTensorField
    stats: SolveStats
    diagnostics: OrthoDiagnostics
    mismatches: int
    outside_hypothesis: bool

    @property
    def reconstruction_exact(self) -> bool:
        return self.mismatches == 0


def _check(phi, metric):
    if not isinstance(phi, SymTensorField):
        raise MismatchError(f"kind-mismatch: expected symtensor, got {phi.kind}")
    if phi.grid != metric.grid:
        raise MismatchError("grid-mismatch")


def berger_ebin(phi: SymTensorField, metric: MetricField, opts: SolveOptions = SolveOptions(),
                x0: OneFormField | None = None) -> BergerEbinResult:
    """Split ``phi`` into the image of ``delta*`` and the kernel of ``delta``.

    Solves ``delta delta* theta = delta phi`` with the Killing kernel deflated;
    ``theta`` is the kernel-orthogonal representative.
    """
    _check(phi, metric)
    theta, stats = solve_spsd(dds_operator(metric), divergence_sym(phi, metric), opts, x0=x0)
    K = killing_op(theta, metric)
    phi0 = SymTensorField(metric.grid, exact_remainder(phi.data, K.data))
    diag = orthogonality_report({"killing": K, "phi0": phi0}, metric, phi)
    return BergerEbinResult(theta, K, phi0, stats, diag,
                            reconstruction_mismatches(phi.data, K.data, phi0.data))


def york(phi: SymTensorField, metric: MetricField, opts: SolveOptions = SolveOptions(),
         x0: OneFormField | None = None) -> YorkResult:
    """Split ``phi`` into ``delta* theta + lam g`` and a transverse-traceless part.

    Solves ``S*S theta = S* phi_tl`` (conformal Killing kernel deflated) for the
    traceless part ``phi_tl``; then ``lam = (tr phi + delta theta) / n``.  On
    surfaces (``n = 2``) the split still runs but is flagged as outside the
    usual ``n >= 3`` setting.
    """
    _check(phi, metric)
    n = metric.n
    if n < 3:
        log.warning("York split on a %d-dimensional torus: outside the n >= 3 setting", n)
    tr, phi_tl = trace_and_traceless(phi, metric)
    theta, stats = solve_spsd(ahlfors_operator(metric), cauchy_ahlfors_adjoint(phi_tl, metric), opts, x0=x0)
    lam = ScalarField(metric.grid, (tr.values + codifferential(theta, metric).values)[None] / n)
    K = killing_op(theta, metric)
    longitudinal = K.data + lam.data * metric.g.data
    phiTT = SymTensorField(metric.grid, exact_remainder(phi.data, longitudinal))

    # mutually orthogonal triple S theta, (tr/n) g, phiTT, plus the two-factor split
    S = cauchy_ahlfors(theta, metric)
    pure = SymTensorField(metric.grid, (tr.values / n)[None] * metric.g.data)
    lam_g = SymTensorField(metric.grid, lam.data * metric.g.data)
    parts = {"S_theta": S, "pure_trace": pure, "phiTT": phiTT,
             "longitudinal": SymTensorField(metric.grid, longitudinal), "killing": K, "lam_g": lam_g}
    pairs = [("S_theta", "pure_trace"), ("S_theta", "phiTT"), ("pure_trace", "phiTT"),
             ("longitudinal", "phiTT"), ("killing", "phiTT"), ("lam_g", "phiTT"), ("killing", "lam_g")]
    diag = orthogonality_report(parts, metric, phi, pairs)
    return YorkResult(theta, K, lam, phiTT, stats, diag,
                      reconstruction_mismatches(phi.data, K.data, lam.data * metric.g.data, phiTT.data),
                      outside_hypothesis=n < 3)


# pairs asserted orthogonal for York; killing|lam_g is informational only
YORK_ORTHOGONAL_PAIRS = ("S_theta|pure_trace", "S_theta|phiTT", "pure_trace|phiTT",
                         "longitudinal|phiTT", "killing|phiTT", "lam_g|phiTT")
