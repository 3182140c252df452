"""Deflated conjugate gradients and kernel detection for one-form operators.

All iterations work in the weighted pairing ``<a, b>_W = sum w g^ij a_i b_j``
in which the operators of :mod:`tensor_split.operators` are self-adjoint.
With ``W1 = w g^-1`` applied pointwise, the Euclidean matrix ``W1 A`` is
symmetric; preconditioners are Euclidean-symmetric ``B`` used as
``z = B (W1 r)``, which keeps ``B W1`` self-adjoint in the weighted pairing.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from .errors import ConfigError, InconsistentRHSError, SolverError
from .grid import OneFormField, SymTensorField
from .metric import MetricField, integrate
from .operators import OperatorHandle

log = logging.getLogger(__name__)

PRECONDITIONERS = ("none", "diagonal", "spectral")


@dataclass(frozen=True)
class KernelOptions:
    """Settings for :func:`kernel_basis`.

    ``eig_tol`` is relative to the power-iteration estimate of the largest
    eigenvalue.  ``probes`` defaults to ``max_dim + 2``.
    """

    max_dim: int | None = None
    eig_tol: float = 1e-8
    probes: int | None = None
    seed: int = 0
    power_iters: int = 20
    max_iter: int = 200

    def resolved(self, n: int) -> "KernelOptions":
        max_dim = n + 2 if self.max_dim is None else self.max_dim
        probes = max_dim + 2 if self.probes is None else self.probes
        if max_dim < 1:
            raise ConfigError("max_dim must be >= 1")
        if probes < max_dim:
            raise ConfigError("probes must be >= max_dim")
        if not (0 < self.eig_tol < 1):
            raise ConfigError("eig_tol must lie in (0, 1)")
        return KernelOptions(max_dim, self.eig_tol, probes, self.seed, self.power_iters, self.max_iter)


@dataclass(frozen=True)
class SolveOptions:
    rel_tol: float = 1e-10
    max_iter: int | None = None
    deflate_kernel: bool = True
    preconditioner: str = "none"
    kernel: KernelOptions = field(default_factory=KernelOptions)

    def __post_init__(self):
        if not (0 < self.rel_tol < 1e-2):
            raise ConfigError(f"rel_tol must lie in (0, 1e-2), got {self.rel_tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigError(f"preconditioner must be one of {PRECONDITIONERS}")

    def iteration_cap(self, npoints: int) -> int:
        return self.max_iter if self.max_iter is not None else int(20 * math.sqrt(npoints))


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    final_rel_residual: float
    kernel_dim_deflated: int
    converged: bool

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "final_rel_residual": self.final_rel_residual,
                "kernel_dim_deflated": self.kernel_dim_deflated, "converged": self.converged}


# ---------------------------------------------------------------------------
# weighted pairing on raw arrays


class _Space:
    def __init__(self, metric: MetricField):
        self.metric = metric
        self.n = metric.n
        self.shape = (metric.n, *metric.grid.dims)
        # W1 = w g^-1 pointwise
        self.W1 = metric.inverse * metric.weight

    def inner(self, a, b):
        Gi = self.metric.inverse
        acc = Gi[0, 0] * (a[0] * b[0])
        for i in range(1, self.n):
            acc = acc + Gi[i, i] * (a[i] * b[i])
        for i in range(self.n):
            for j in range(i + 1, self.n):
                acc = acc + Gi[i, j] * (a[i] * b[j] + a[j] * b[i])
        return integrate(acc, self.metric)

    def norm(self, a):
        return math.sqrt(max(self.inner(a, a), 0.0))

    def to_euclid(self, r):
        return np.einsum("ij...,j...->i...", self.W1, r)

    def project(self, x, basis):
        for _ in range(2):
            for v in basis:
                x = x - self.inner(v, x) * v
        return x

    def orthonormalize(self, vecs):
        out = []
        for v in vecs:
            v = self.project(v, out)
            nv = self.norm(v)
            if nv > 0:
                out.append(v / nv)
        return out


# ---------------------------------------------------------------------------
# preconditioners


class _Spectral:
    """Exact inverse of the shifted operator on the grid-mean constant metric.

    The constant-coefficient operator is circulant, so its symbol is read off
    from impulse responses and inverted one wavevector at a time.
    """

    def __init__(self, op: OperatorHandle, sigma_frac: float = 0.1):
        from .operators import OPERATOR_FACTORIES

        metric = op.metric
        n, dims = metric.n, metric.grid.dims
        mean = metric.g.data.reshape(metric.g.data.shape[0], -1).mean(axis=1)
        gconst = SymTensorField(metric.grid, np.broadcast_to(mean[:, None], (mean.size, metric.grid.size)))
        cmetric = MetricField(gconst, metric.order)
        cop = OPERATOR_FACTORIES[op.name](cmetric)
        axes = tuple(range(1, n + 1))
        sym = np.empty((n, n, *np.fft.rfftn(np.zeros(dims)).shape), dtype=complex)
        for c in range(n):
            e = np.zeros((n, *dims))
            e[(c,) + (0,) * n] = 1.0
            sym[:, c] = np.fft.rfftn(cop.apply_array(e), axes=axes)
        Ak = np.moveaxis(sym, (0, 1), (-2, -1))
        ev = np.linalg.eigvals(Ak).real
        nonzero = ev[ev > 1e-8 * ev.max()]
        self.lambda1 = float(nonzero.min()) if nonzero.size else 1.0
        self.lambda_max = float(ev.max())
        self.sigma = sigma_frac * self.lambda1
        W1c = cmetric.inverse[(slice(None), slice(None)) + (0,) * n] * cmetric.weight[(0,) * n]
        self.inv = np.linalg.inv(Ak + self.sigma * np.eye(n)) @ np.linalg.inv(W1c)
        self.n, self.dims, self.axes = n, dims, axes

    def __call__(self, euclid_r):
        rk = np.fft.rfftn(euclid_r, axes=self.axes)
        zk = np.einsum("...ij,j...->i...", self.inv, rk)
        return np.fft.irfftn(zk, s=self.dims, axes=self.axes)


def spectral_preconditioner(op: OperatorHandle) -> _Spectral:
    return op.metric.cached(("spectral", op.name), lambda: _Spectral(op))


class _Jacobi:
    """Inverse diagonal of ``W1 A``, probed with colored unit vectors.

    Costs ``P**n * n`` operator applications, where ``P`` is the coloring
    period; practical in 2D and on small 3D grids.
    """

    def __init__(self, op: OperatorHandle):
        sp = _Space(op.metric)
        n, dims = sp.n, op.metric.grid.dims
        radius = 6  # a biased stencil composed with a transposed one spans offsets -5..5
        period = [next((p for p in range(2 * radius + 1, N + 1) if N % p == 0), N) for N in dims]
        diag = np.zeros((n, *dims))
        idx = np.indices(dims)
        for color in np.ndindex(*period):
            mask = np.ones(dims, dtype=bool)
            for a in range(n):
                mask &= (idx[a] % period[a]) == color[a]
            for c in range(n):
                e = np.zeros((n, *dims))
                e[c][mask] = 1.0
                diag[c][mask] = sp.to_euclid(op.apply_array(e))[c][mask]
        if np.any(diag <= 0):
            raise SolverError("diagonal preconditioner needs a positive diagonal")
        self.inv = 1.0 / diag

    def __call__(self, euclid_r):
        return self.inv * euclid_r


def _preconditioner(op: OperatorHandle, kind: str, sp: _Space):
    if kind == "none":
        return lambda r: r
    if kind == "spectral":
        M = spectral_preconditioner(op)
    else:
        M = op.metric.cached(("jacobi", op.name), lambda: _Jacobi(op))
    return lambda r: M(sp.to_euclid(r))


# ---------------------------------------------------------------------------
# conjugate gradients


def _pcg(apply, b, sp: _Space, precond, basis, rel_tol, max_iter, x0=None):
    """Deflated PCG on ``apply x = b``; returns ``(x, iterations, rel_residual, converged)``."""
    bn = sp.norm(b)
    x = np.zeros_like(b) if x0 is None else sp.project(np.array(x0, dtype=float), basis)
    if bn == 0.0:
        return np.zeros_like(b), 0, 0.0, True
    r = sp.project(b - apply(x), basis) if x0 is not None else b.copy()
    it = 0
    rel = sp.norm(r) / bn
    while it < max_iter and rel > rel_tol:
        z = sp.project(precond(r), basis)
        p = z
        rz = sp.inner(r, z)
        while it < max_iter:
            Ap = apply(p)
            pAp = sp.inner(p, Ap)
            if not pAp > 0:
                break
            alpha = rz / pAp
            x = x + alpha * p
            r = sp.project(r - alpha * Ap, basis)
            it += 1
            if sp.norm(r) <= rel_tol * bn:
                break
            z = sp.project(precond(r), basis)
            rz_new = sp.inner(r, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        # recompute the true residual; restart from it if recurrence drifted
        x = sp.project(x, basis)
        r = sp.project(b - apply(x), basis)
        rel = sp.norm(r) / bn
        if not pAp > 0:
            break
    return x, it, rel, rel <= rel_tol


def solve_spsd(op: OperatorHandle, rhs: OneFormField, opts: SolveOptions = SolveOptions(),
               x0: OneFormField | None = None) -> tuple[OneFormField, SolveStats]:
    """Solve ``op theta = rhs`` for a self-adjoint positive-semidefinite operator.

    With ``deflate_kernel`` the kernel of ``op`` is projected out of the
    right-hand side, every iterate and the solution, which is therefore the
    kernel-orthogonal representative.

    Raises
    ------
    InconsistentRHSError
        When deflation is disabled but the right-hand side has a kernel
        component larger than ``1e-6`` of its norm.
    """
    if op.symmetry != "self-adjoint-psd":
        raise SolverError(f"operator {op.name} is not tagged self-adjoint-psd")
    if rhs.grid != op.metric.grid:
        from .errors import MismatchError
        raise MismatchError("grid-mismatch")
    sp = _Space(op.metric)
    b = rhs.data.copy()
    if not np.any(b):
        basis = kernel_basis(op, opts.kernel) if opts.deflate_kernel else []
        return OneFormField(rhs.grid, b), SolveStats(0, 0.0, len(basis), True)
    basis = [v.data for v in kernel_basis(op, opts.kernel)]
    bp = sp.project(b, basis)
    if not opts.deflate_kernel:
        removed = sp.norm(b - bp)
        if removed > 1e-6 * sp.norm(b):
            raise InconsistentRHSError(
                f"inconsistent-rhs: kernel component is {removed / sp.norm(b):.3e} of the rhs norm")
        basis = []
        bp = b
    precond = _preconditioner(op, opts.preconditioner, sp)
    x, it, rel, ok = _pcg(op.apply_array, bp, sp, precond, basis, opts.rel_tol,
                          opts.iteration_cap(op.metric.grid.size),
                          None if x0 is None else x0.data)
    if not ok:
        log.warning("%s solve stopped after %d iterations at relative residual %.3e", op.name, it, rel)
    return OneFormField(rhs.grid, x), SolveStats(it, rel, len(basis), ok)


# ---------------------------------------------------------------------------
# kernel detection


def largest_eigenvalue(op: OperatorHandle, iters: int = 20, seed: int = 0) -> float:
    """Power-iteration estimate of the top of the spectrum (a lower bound)."""
    def build():
        sp = _Space(op.metric)
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(sp.shape)
        v /= sp.norm(v)
        est = 0.0
        for _ in range(iters):
            Av = op.apply_array(v)
            est = max(est, sp.inner(v, Av))
            v = Av / sp.norm(Av)
        return est
    return op.metric.cached(("lambda_max", op.name, iters, seed), build)


@dataclass(frozen=True)
class KernelResult:
    basis: list
    ritz_values: list
    lambda_max: float
    threshold: float
    iterations: int


def kernel_spectrum(op: OperatorHandle, opts: KernelOptions = KernelOptions()) -> KernelResult:
    """Smallest eigenpairs of ``op`` and the kernel they span.

    A block of ``probes`` seeded random one-forms is refined by LOBPCG in
    the weighted pairing, preconditioned by the constant-metric inverse.
    Ritz vectors whose Ritz value is at most ``eig_tol * lambda_max`` form the
    basis, which is orthonormal in :func:`~tensor_split.metric.l2_inner`.
    """
    opts = opts.resolved(op.metric.n)
    key = ("kernel", op.name, opts)
    return op.metric.cached(key, lambda: _kernel_spectrum(op, opts))


def _kernel_spectrum(op, opts: KernelOptions) -> KernelResult:
    if op.symmetry != "self-adjoint-psd":
        raise SolverError(f"operator {op.name} is not tagged self-adjoint-psd")
    sp = _Space(op.metric)
    shape, size = sp.shape, int(np.prod(sp.shape))
    lam_max = largest_eigenvalue(op, opts.power_iters, opts.seed)
    threshold = opts.eig_tol * lam_max
    M = spectral_preconditioner(op)

    def E(X):
        X = np.asarray(X).reshape(size, -1)
        out = np.empty_like(X)
        for c in range(X.shape[1]):
            out[:, c] = sp.to_euclid(op.apply_array(X[:, c].reshape(shape))).ravel()
        return out

    def Bm(X):
        X = np.asarray(X).reshape(size, -1)
        return np.stack([sp.to_euclid(X[:, c].reshape(shape)).ravel() for c in range(X.shape[1])], axis=1)

    def Mm(X):
        X = np.asarray(X).reshape(size, -1)
        return np.stack([M(X[:, c].reshape(shape)).ravel() for c in range(X.shape[1])], axis=1)

    rng = np.random.default_rng(opts.seed)
    X = rng.standard_normal((size, opts.probes))
    lin = dict(shape=(size, size), dtype=float)
    ops = dict(B=LinearOperator(matvec=Bm, matmat=Bm, **lin),
               M=LinearOperator(matvec=Mm, matmat=Mm, **lin))
    Elin = LinearOperator(matvec=E, matmat=E, **lin)
    iterations = 0
    while True:
        chunk = min(_CHUNK, opts.max_iter - iterations)
        with warnings.catch_warnings():
            # lobpcg warns whenever it stops at maxiter; convergence is judged below
            warnings.simplefilter("ignore", UserWarning)
            _, X, hist = lobpcg(Elin, X, largest=False, tol=1e-14 * math.sqrt(lam_max),
                                maxiter=chunk, retLambdaHistory=True, verbosityLevel=0, **ops)
        iterations += len(hist)
        ritz, vecs, resid = _rayleigh_ritz(op, sp, [X[:, c].reshape(shape) for c in range(X.shape[1])])
        keep = [c for c in range(len(ritz)) if ritz[c] <= threshold][: opts.max_dim]
        rest = [c for c in range(len(ritz)) if c not in keep]
        gap = ritz[rest[0]] if rest else lam_max
        # eigenvector error is about resid / gap
        floor = max(1e-7 * gap, 1e-13 * lam_max)
        done = all(resid[c] <= floor for c in keep)
        # the first rejected Ritz value must be certifiably above the threshold
        if rest:
            done = done and ritz[rest[0]] - resid[rest[0]] > threshold
        log.debug("kernel chunk: it=%d ritz=%s resid=%s", iterations, ritz, resid)
        if done or iterations >= opts.max_iter:
            break
        X = np.stack([v.ravel() for v in vecs], axis=1)

    basis = sp.orthonormalize([_canonical_sign(vecs[c]) for c in keep])
    for v in basis:
        res = sp.norm(op.apply_array(v))
        if res > 10 * threshold:
            raise SolverError(f"kernel-not-converged: residual {res:.3e} exceeds {10 * threshold:.3e}")
    if not done:
        log.warning("%s kernel search stopped after %d iterations before full certification",
                    op.name, iterations)
    fields = [OneFormField(op.metric.grid, v) for v in basis]
    return KernelResult(fields, [float(x) for x in ritz], float(lam_max), float(threshold), iterations)


_CHUNK = 4


def _rayleigh_ritz(op, sp: _Space, vecs):
    """Ritz values, W-orthonormal Ritz vectors and their residual norms."""
    vecs = sp.orthonormalize(vecs)
    AV = [op.apply_array(v) for v in vecs]
    H = np.array([[sp.inner(v, a) for a in AV] for v in vecs])
    ritz, Q = np.linalg.eigh(0.5 * (H + H.T))
    m = len(vecs)
    rv = [sum(Q[j, c] * vecs[j] for j in range(m)) for c in range(m)]
    rav = [sum(Q[j, c] * AV[j] for j in range(m)) for c in range(m)]
    resid = [sp.norm(rav[c] - ritz[c] * rv[c]) for c in range(m)]
    return [float(x) for x in ritz], rv, resid


def _canonical_sign(v):
    """Flip sign so the largest-magnitude entry is positive (deterministic output)."""
    flat = v.ravel()
    return v if flat[np.argmax(np.abs(flat))] >= 0 else -v


def kernel_basis(op: OperatorHandle, opts: KernelOptions = KernelOptions()) -> list[OneFormField]:
    return kernel_spectrum(op, opts).basis
