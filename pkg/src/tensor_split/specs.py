"""Analytic metric families on the torus.

A :class:`MetricSpec` can be evaluated at arbitrary points (not just grid
points) together with its first and second partial derivatives.  Target
metrics of torus maps rely on this: they are evaluated at mapped points
without interpolation.

Periodic building block: a trig product term
``amp * prod_i sin(2 pi k_i x_i / L_i + phase_i)``.  A zero wavenumber with
phase pi/2 contributes a constant factor 1, so terms may depend on any
subset of the coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MetricError

FAMILIES = ("flat_diagonal", "conformal_flat", "diagonal_periodic", "product")


@dataclass(frozen=True)
class TrigTerm:
    amp: float
    k: tuple[int, ...]
    phase: tuple[float, ...]

    @classmethod
    def from_dict(cls, d: dict, n: int) -> "TrigTerm":
        k = tuple(int(v) for v in d["k"])
        phase = tuple(float(v) for v in d.get("phase", [0.0] * n))
        if len(k) != n or len(phase) != n:
            raise MetricError(f"trig term needs {n} wavenumbers and phases")
        return cls(float(d["amp"]), k, phase)

    def to_dict(self) -> dict:
        return {"amp": self.amp, "k": list(self.k), "phase": list(self.phase)}

    def evaluate(self, x: np.ndarray, lengths):
        """Value, gradient ``(n, ...)`` and Hessian ``(n, n, ...)`` at points ``x``."""
        n = len(self.k)
        a = [2.0 * math.pi * self.k[i] / lengths[i] for i in range(n)]
        s = [np.sin(a[i] * x[i] + self.phase[i]) for i in range(n)]
        c = [np.cos(a[i] * x[i] + self.phase[i]) for i in range(n)]

        def prod(skip):
            out = np.full(x.shape[1:], self.amp)
            for i in range(n):
                if i not in skip:
                    out = out * s[i]
            return out

        val = prod(())
        grad = np.empty((n, *x.shape[1:]))
        hess = np.empty((n, n, *x.shape[1:]))
        for i in range(n):
            grad[i] = a[i] * c[i] * prod((i,))
            hess[i, i] = -a[i] ** 2 * val
            for j in range(i + 1, n):
                hess[i, j] = hess[j, i] = a[i] * a[j] * c[i] * c[j] * prod((i, j))
        return val, grad, hess


def _trig_sum(terms, x, lengths, n):
    val = np.zeros(x.shape[1:])
    grad = np.zeros((n, *x.shape[1:]))
    hess = np.zeros((n, n, *x.shape[1:]))
    for t in terms:
        v, g, h = t.evaluate(x, lengths)
        val += v
        grad += g
        hess += h
    return val, grad, hess


@dataclass(frozen=True)
class MetricSpec:
    """Analytic metric: ``family`` plus family-specific ``params``.

    Families and their params:

    ``flat_diagonal``
        ``{"diag": [a_1, ..., a_n]}`` with every ``a_i > 0``.
    ``conformal_flat``
        ``{"terms": [trig terms], "scale": c}``; ``g = c exp(2u) delta`` with
        ``u`` the sum of the trig terms.
    ``diagonal_periodic``
        ``{"base": [c_i], "amp": [alpha_i], "k": [[k_ij]], "phase": [[p_ij]]}``;
        ``g_ii = c_i (1 + alpha_i prod_j sin(2 pi k_ij x_j / L_j + p_ij))``,
        positive-definite whenever ``|alpha_i| < 1``.
    ``product``
        ``{"factors": [spec, spec, ...]}``; block-diagonal sum, each factor
        acting on its own consecutive block of coordinates.
    """

    family: str
    params: dict = field(default_factory=dict, hash=False, compare=True)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise MetricError(f"unknown metric family {self.family!r}")
        self.validate()

    @property
    def n(self) -> int:
        p = self.params
        if self.family == "flat_diagonal":
            return len(p["diag"])
        if self.family == "conformal_flat":
            return int(p["n"])
        if self.family == "diagonal_periodic":
            return len(p["base"])
        return sum(f.n for f in self.factors)

    @property
    def factors(self) -> list["MetricSpec"]:
        return [f if isinstance(f, MetricSpec) else MetricSpec.from_dict(f) for f in self.params["factors"]]

    def _terms(self):
        return [TrigTerm.from_dict(t, self.n) for t in self.params.get("terms", [])]

    def validate(self):
        p = self.params
        try:
            if self.family == "flat_diagonal":
                if not p["diag"] or any(float(a) <= 0 for a in p["diag"]):
                    raise MetricError("flat_diagonal entries must be positive")
            elif self.family == "conformal_flat":
                if int(p["n"]) < 1 or float(p.get("scale", 1.0)) <= 0:
                    raise MetricError("conformal_flat needs n >= 1 and positive scale")
                self._terms()
            elif self.family == "diagonal_periodic":
                n = len(p["base"])
                if any(float(c) <= 0 for c in p["base"]):
                    raise MetricError("diagonal_periodic base entries must be positive")
                if len(p["amp"]) != n or any(abs(float(a)) >= 1 for a in p["amp"]):
                    raise MetricError("diagonal_periodic needs |alpha_i| < 1 for each axis")
                if len(p["k"]) != n or any(len(row) != n for row in p["k"]):
                    raise MetricError("diagonal_periodic wavenumbers must be n x n")
            else:
                if not p["factors"]:
                    raise MetricError("product needs at least one factor")
                self.factors
        except KeyError as exc:
            raise MetricError(f"{self.family} spec is missing parameter {exc}") from None

    def to_dict(self) -> dict:
        params = dict(self.params)
        if self.family == "product":
            params["factors"] = [f.to_dict() for f in self.factors]
        return {"family": self.family, "params": params}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSpec":
        return cls(d["family"], dict(d.get("params", {})))

    def evaluate(self, x: np.ndarray, lengths):
        """Metric and derivatives at points ``x`` of shape ``(n, ...)``.

        Returns ``g[i, j]``, ``dg[k, i, j] = d_k g_ij`` and
        ``ddg[a, b, i, j] = d_a d_b g_ij``, each with the point shape trailing.
        """
        x = np.asarray(x, dtype=float)
        n = self.n
        if x.shape[0] != n or len(lengths) != n:
            raise MetricError(f"spec has dimension {n}, points have {x.shape[0]}")
        pts = x.shape[1:]
        g = np.zeros((n, n, *pts))
        dg = np.zeros((n, n, n, *pts))
        ddg = np.zeros((n, n, n, n, *pts))
        p = self.params
        if self.family == "flat_diagonal":
            for i, a in enumerate(p["diag"]):
                g[i, i] = float(a)
        elif self.family == "conformal_flat":
            u, du, ddu = _trig_sum(self._terms(), x, lengths, n)
            f = float(p.get("scale", 1.0)) * np.exp(2.0 * u)
            for i in range(n):
                g[i, i] = f
                for k in range(n):
                    dg[k, i, i] = 2.0 * du[k] * f
                    for m in range(n):
                        ddg[k, m, i, i] = (4.0 * du[k] * du[m] + 2.0 * ddu[k, m]) * f
        elif self.family == "diagonal_periodic":
            for i in range(n):
                term = TrigTerm(float(p["amp"][i]), tuple(int(v) for v in p["k"][i]),
                                tuple(float(v) for v in p.get("phase", [[0.0] * n] * n)[i]))
                v, gr, he = term.evaluate(x, lengths)
                c = float(p["base"][i])
                g[i, i] = c * (1.0 + v)
                dg[:, i, i] = c * gr
                ddg[:, :, i, i] = c * he
        else:
            lo = 0
            for fac in self.factors:
                hi = lo + fac.n
                fg, fdg, fddg = fac.evaluate(x[lo:hi], lengths[lo:hi])
                g[lo:hi, lo:hi] = fg
                dg[lo:hi, lo:hi, lo:hi] = fdg
                ddg[lo:hi, lo:hi, lo:hi, lo:hi] = fddg
                lo = hi
        return g, dg, ddg


def builtin_spec(name: str, n: int) -> MetricSpec:
    """Named test metrics used by the CLI and the acceptance suite.

    ``conformal`` is ``u = 0.1 sin(2 pi x1) sin(2 pi x2)`` on T^2 and
    ``u = 0.1 sin(2 pi x1)`` on T^3; ``product`` is a flat T^2 x T^1 with
    unequal axis scales; ``diagonal_periodic`` has no continuous isometries.
    """
    half_pi = math.pi / 2
    if name == "flat":
        return MetricSpec("flat_diagonal", {"diag": [1.0] * n})
    if name == "conformal":
        if n == 2:
            terms = [{"amp": 0.1, "k": [1, 1], "phase": [0.0, 0.0]}]
        else:
            terms = [{"amp": 0.1, "k": [1] + [0] * (n - 1), "phase": [0.0] + [half_pi] * (n - 1)}]
        return MetricSpec("conformal_flat", {"n": n, "terms": terms})
    if name == "diagonal_periodic":
        amps = [0.2, 0.15, 0.1][:n]
        ks = [[1] * n for _ in range(n)]
        phases = [[0.3, 0.7, 1.3][:n], [1.1, 0.2, 0.5][:n], [0.9, 1.7, 0.4][:n]][:n]
        return MetricSpec("diagonal_periodic",
                          {"base": [1.0] * n, "amp": amps, "k": ks, "phase": phases})
    if name == "product":
        if n != 3:
            raise MetricError("builtin product metric is T^2 x T^1 (n = 3)")
        return MetricSpec("product", {"factors": [
            {"family": "flat_diagonal", "params": {"diag": [1.0, 2.0]}},
            {"family": "flat_diagonal", "params": {"diag": [0.5]}},
        ]})
    raise MetricError(f"unknown builtin metric {name!r}")


BUILTIN_NAMES = ("flat", "conformal", "diagonal_periodic", "product")


def analytic_curvature(spec: MetricSpec, x: np.ndarray, lengths):
    """Ricci tensor ``R[i, j]`` and scalar curvature from the exact derivatives of a MetricSpec.

    Uses ``d_m g^ab = -g^ac d_m g_cd g^db`` and the coordinate formula
    ``R_ij = d_k G^k_ij - d_j G^k_ik + G^k_kl G^l_ij - G^k_jl G^l_ik``.
    """
    g, dg, ddg = spec.evaluate(x, lengths)
    gm = np.moveaxis(g, (0, 1), (-2, -1))
    gi = np.moveaxis(np.linalg.inv(gm), (-2, -1), (0, 1))
    # T[l, i, j] = d_i g_lj + d_j g_li - d_l g_ij and its derivative along m
    T = np.einsum("ilj...->lij...", dg) + np.einsum("jli...->lij...", dg) - dg
    dT = (np.einsum("imlj...->mlij...", ddg) + np.einsum("jmli...->mlij...", ddg)
          - np.einsum("lmij...->mlij...", ddg))
    Gam = 0.5 * np.einsum("kl...,lij...->kij...", gi, T)
    dgi = -np.einsum("ac...,mcd...,db...->mab...", gi, dg, gi)
    dGam = 0.5 * (np.einsum("mkl...,lij...->mkij...", dgi, T) + np.einsum("kl...,mlij...->mkij...", gi, dT))
    R = (np.einsum("kkij...->ij...", dGam) - np.einsum("jkik...->ij...", dGam)
         + np.einsum("kkl...,lij...->ij...", Gam, Gam) - np.einsum("kjl...,lik...->ij...", Gam, Gam))
    R = 0.5 * (R + np.swapaxes(R, 0, 1))
    s = np.einsum("ij...,ij...->...", gi, R)
    return R, s
