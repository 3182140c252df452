"""Run configuration, command dispatch and JSON reports.

A report is deterministic given its config and seed: everything except the
``timing`` block is a pure function of the resolved config.  Each check
record carries the measured value, its threshold and a verdict; only
``enabled`` checks decide the exit status.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decomposition import YORK_ORTHOGONAL_PAIRS, berger_ebin, york
from .errors import ConfigError, GridError, MetricError, MismatchError, SolverError, TensorSplitError
from .grid import (Field, OneFormField, ScalarField, SymTensorField, VectorField, make_grid,
                   read_field, write_field)
from .immersion import (balance_residual, codazzi_divergence_check, graph_hypersurface,
                        harmonic_balance_check, hypersurface_decomposition_report, torus_map)
from .metric import MetricField, curvature, l2_norm, sample_metric, sharp, trace_g
from .operators import OPERATOR_FACTORIES, weitzenboeck_residual
from .ricci import (bianchi_residual, ricci_berger_ebin, ricci_york, sampson_identity_check,
                    soliton_residual)
from .samples import expression, random_smooth
from .solver import KernelOptions, SolveOptions, kernel_spectrum
from .specs import BUILTIN_NAMES, MetricSpec, analytic_curvature, builtin_spec

log = logging.getLogger(__name__)

SCHEMA = "tensor-split-report"
SCHEMA_VERSION = 1
COMMANDS = ("decompose", "curvature", "ricci", "soliton", "hypersurface", "map", "kernel", "convergence")
CONVERGENCE_CHECKS = ("curvature", "bianchi", "sampson", "weitzenboeck", "codazzi", "balance")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_FAILED = 0, 1, 2, 3

DEFAULTS = {
    "n": 2,
    "N": 32,
    "lengths": None,
    "order": 4,
    "metric": "flat",
    "seed": 0,
    "verdict_tol": 1e-6,
    "identity_tol": 1e-4,
    "solve": {"rel_tol": 1e-10, "max_iter": None, "deflate_kernel": True, "preconditioner": "spectral"},
    "kernel": {"max_dim": None, "eig_tol": 1e-8, "probes": None, "power_iters": 20, "max_iter": 200},
    "out": None,
    "dump_fields": None,
}


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(doc: dict, overrides: dict | None = None) -> dict:
    """Defaults, then the config document, then command-line overrides."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, doc)
    cfg = _merge(cfg, {k: v for k, v in (overrides or {}).items() if v is not None})
    if cfg.get("command") not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.get('command')!r}; expected one of {', '.join(COMMANDS)}")
    if cfg["order"] not in (2, 4):
        raise ConfigError(f"order must be 2 or 4, got {cfg['order']}")
    if cfg["lengths"] is None:
        cfg["lengths"] = [1.0] * int(cfg["n"])
    return cfg


def load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"unreadable config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None


def _metric_spec(entry, n: int) -> MetricSpec:
    if isinstance(entry, str):
        if entry not in BUILTIN_NAMES:
            raise ConfigError(f"unknown builtin metric {entry!r}")
        return builtin_spec(entry, n)
    if isinstance(entry, dict):
        if "builtin" in entry:
            return _metric_spec(entry["builtin"], n)
        try:
            return MetricSpec.from_dict(entry)
        except KeyError as exc:
            raise ConfigError(f"metric spec is missing {exc}") from None
    raise ConfigError(f"cannot interpret metric entry {entry!r}")


def _grid(cfg, N=None):
    n = int(cfg["n"])
    N = int(cfg["N"] if N is None else N)
    return make_grid(n, [N] * n, cfg["lengths"])


def _metric(cfg, N=None, key="metric") -> MetricField:
    grid = _grid(cfg, N)
    spec = _metric_spec(cfg[key], grid.n)
    return sample_metric(spec, grid, cfg["order"])


def _solve_opts(cfg) -> SolveOptions:
    s, k = cfg["solve"], cfg["kernel"]
    try:
        kern = KernelOptions(max_dim=k["max_dim"], eig_tol=float(k["eig_tol"]), probes=k["probes"],
                             seed=int(cfg["seed"]), power_iters=int(k["power_iters"]), max_iter=int(k["max_iter"]))
        return SolveOptions(rel_tol=float(s["rel_tol"]), max_iter=s["max_iter"],
                            deflate_kernel=bool(s["deflate_kernel"]), preconditioner=s["preconditioner"],
                            kernel=kern)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver options: {exc}") from None


# ---------------------------------------------------------------------------
# report assembly


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


@dataclass
class Report:
    config: dict
    checks: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    solver: list = field(default_factory=list)
    wall_time: float = 0.0

    def check(self, name: str, value, threshold, passed: bool, reference: str = "", enabled: bool = True,
              relation: str = "<="):
        self.checks.append({"name": name, "value": value, "threshold": threshold, "relation": relation,
                            "verdict": "pass" if passed else "fail", "enabled": enabled, "reference": reference})

    def expect(self, name, value, threshold, reference="", enabled=True, relation="<="):
        if relation == "<=":
            ok = value is not None and value <= threshold
        elif relation == ">=":
            ok = value is not None and value >= threshold
        elif relation == "==":
            ok = value == threshold
        else:
            raise ValueError(relation)
        self.check(name, value, threshold, bool(ok), reference, enabled, relation)

    @property
    def passed(self) -> bool:
        return all(c["verdict"] == "pass" for c in self.checks if c["enabled"])

    @property
    def converged(self) -> bool:
        return all(s.get("converged", True) for s in self.solver)

    def to_dict(self) -> dict:
        return _clean({
            "schema": SCHEMA, "schema_version": SCHEMA_VERSION, "config": self.config,
            "checks": self.checks, "results": self.results, "fields": self.fields, "solver": self.solver,
            "passed": self.passed, "timing": {"wall_time_s": self.wall_time},
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def deterministic_part(doc: dict) -> dict:
    """Report content minus the timing block."""
    return {k: v for k, v in doc.items() if k != "timing"}


def _dump(report: Report, cfg, name: str, f: Field):
    d = cfg.get("dump_fields")
    if not d:
        return
    path = Path(d) / f"{name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_field(path, f)
    report.fields[name] = str(path)


def observed_order(ladder, errors, floor: float = 1e-13):
    """Least-squares slope of ``-log2(error)`` against ``log2(N)``; ``"exact"`` at round-off."""
    errs = [abs(float(e)) for e in errors]
    if max(errs) <= floor:
        return "exact", []
    pairs = [math.log2(a / b) if a > 0 and b > 0 else float("inf") for a, b in zip(errs, errs[1:])]
    lx = np.log2(np.asarray(ladder, float))
    ly = np.log2(np.maximum(np.asarray(errs), 1e-300))
    slope = -np.polyfit(lx, ly, 1)[0]
    return float(slope), pairs


# ---------------------------------------------------------------------------
# commands


def _is_flat(spec: MetricSpec) -> bool:
    if spec.family == "product":
        return all(_is_flat(f) for f in spec.factors)
    return spec.family == "flat_diagonal"


def _cmd_curvature(cfg, rep: Report):
    m = _metric(cfg)
    c = curvature(m)
    s = c.scalar.values
    tr = trace_g(c.ricci, m).values
    rep.results.update({"ricci_sup": c.ricci.sup_norm(), "scalar_sup": float(np.abs(s).max()),
                        "christoffel_sup": float(np.abs(c.christoffel).max())})
    rep.expect("trace_consistency", float(np.abs(tr - s).max()), 1e-12 * (1.0 + float(np.abs(s).max())),
               "scalar curvature is the trace of Ricci")
    _, s_exact = analytic_curvature(m.spec, m.grid.coords(), m.grid.lengths)
    rep.results["scalar_error_sup"] = float(np.abs(s - s_exact).max())
    if _is_flat(m.spec):
        rep.expect("flat_ricci_zero", rep.results["ricci_sup"], 0.0, "flat metrics have zero curvature")
        rep.expect("flat_scalar_zero", rep.results["scalar_sup"], 0.0, "flat metrics have zero curvature")
    b_abs, b_rel = bianchi_residual(m)
    rep.results.update({"bianchi_residual": b_abs, "bianchi_relative": b_rel})
    _dump(rep, cfg, "ricci", c.ricci)
    _dump(rep, cfg, "scalar", c.scalar)


def _input_field(cfg, m: MetricField) -> SymTensorField:
    src = cfg.get("input", "random")
    if src == "random":
        return random_smooth(SymTensorField, m.grid, np.random.default_rng(int(cfg["seed"])))
    if src == "metric":
        return SymTensorField(m.grid, m.g.data.copy())
    try:
        f = read_field(src)
    except OSError as exc:
        raise ConfigError(f"cannot read input field {src}: {exc}") from None
    if not isinstance(f, SymTensorField):
        raise ConfigError(f"input field must be a symtensor, got {f.kind}")
    if f.grid != m.grid:
        raise ConfigError("input field grid differs from the configured grid")
    return f


def _cmd_decompose(cfg, rep: Report):
    m = _metric(cfg)
    phi = _input_field(cfg, m)
    opts = _solve_opts(cfg)
    kind = cfg.get("kind", "berger_ebin")
    tol = 100.0 * opts.rel_tol
    if kind == "berger_ebin":
        r = berger_ebin(phi, m, opts)
        parts = {"theta": r.theta, "killing": r.killing, "phi0": r.phi0}
        pairs = ["killing|phi0"]
        cons = {"div_phi0": r.diagnostics.relative["div_phi0"]}
    elif kind == "york":
        r = york(phi, m, opts)
        parts = {"theta": r.theta, "killing": r.killing, "lam": r.lam, "phiTT": r.phiTT}
        pairs = list(YORK_ORTHOGONAL_PAIRS)
        cons = {k: r.diagnostics.relative[k] for k in ("div_phiTT", "trace_phiTT")}
        rep.results.update({"lam_mean": float(np.mean(r.lam.values)), "tt_norm": l2_norm(r.phiTT, m),
                            "outside_hypothesis": r.outside_hypothesis})
    else:
        raise ConfigError(f"unknown decomposition kind {kind!r}")
    rep.solver.append(r.stats.to_dict())
    rep.results["diagnostics"] = r.diagnostics.to_dict()
    rep.results["reconstruction_mismatches"] = r.mismatches
    for p in pairs:
        rep.expect(f"orthogonality[{p}]", abs(r.diagnostics.relative[p]), tol, "L2-orthogonality of the parts")
    for k, v in cons.items():
        rep.expect(f"constraint[{k}]", v, tol, "constraint norm of the remainder")
    rep.expect("reconstruction_bitwise", r.mismatches, 0, "parts add back to the input",
               enabled=False, relation="==")
    for name, f in parts.items():
        _dump(rep, cfg, name, f)
    _dump(rep, cfg, "input", phi)


def _cmd_ricci(cfg, rep: Report):
    m = _metric(cfg)
    opts = _solve_opts(cfg)
    vt = float(cfg["verdict_tol"])
    be, t1 = ricci_berger_ebin(m, opts, vt)
    rep.solver.append(be.stats.to_dict())
    rep.results["berger_ebin"] = t1.to_dict()
    rep.expect("berger_ebin_flags_agree", t1.flags_agree, True, "constant s, Killing xi, zero Lie integral",
               relation="==")
    rep.expect("lie_integral_sign", t1.lie_integral, 1e-10, "Lie integral of s is never positive")
    rep.expect("lie_identity", t1.identity_relative, float(cfg["identity_tol"]),
               "int xi(s) dv = -2 |delta* theta|^2")
    if m.n >= 3:
        yk, t2 = ricci_york(m, opts, vt)
        rep.solver.append(yk.stats.to_dict())
        chk = sampson_identity_check(m, yk)
        rep.results["york"] = t2.to_dict()
        rep.results["sampson"] = chk.to_dict()
        rep.expect("york_flags_agree", t2.flags_agree, True, "constant s, trivial York split, zero Lie integral",
                   relation="==")
        rep.expect("sampson_identity", chk.residual, float(cfg["identity_tol"]),
                   "Sampson(theta) = -(n-2) d lam")
        _dump(rep, cfg, "york_theta", yk.theta)
        _dump(rep, cfg, "york_lam", yk.lam)
        _dump(rep, cfg, "york_phiTT", yk.phiTT)
    _dump(rep, cfg, "theta", be.theta)
    _dump(rep, cfg, "phi0", be.phi0)


def _cmd_soliton(cfg, rep: Report):
    m = _metric(cfg)
    vt = float(cfg["verdict_tol"])
    src = cfg.get("source", "york")
    if src == "york":
        yk, _ = ricci_york(m, _solve_opts(cfg), vt)
        rep.solver.append(yk.stats.to_dict())
        xi, lam = sharp(yk.theta, m), yk.lam
        tt = l2_norm(yk.phiTT, m)
    elif src == "zero":
        xi, lam, tt = VectorField.zeros(m.grid), ScalarField.zeros(m.grid), None
    else:
        try:
            xi, lam = read_field(src["xi"]), read_field(src["lam"])
        except (OSError, TypeError, KeyError) as exc:
            raise ConfigError(f"cannot read soliton fields: {exc}") from None
        tt = None
    r = soliton_residual(m, xi, lam, vt)
    rep.results["soliton"] = r.to_dict()
    if tt is not None:
        rep.results["tt_norm"] = tt
        rep.expect("residual_is_tt_part", abs(r.residual_l2 - tt), 1e-12 * (1.0 + tt),
                   "soliton residual of the York data is the TT part")
    _dump(rep, cfg, "residual", r.residual_field)


def _height(cfg, grid) -> ScalarField:
    h = cfg.get("height", 0.0)
    if isinstance(h, str):
        try:
            f = read_field(h)
        except OSError as exc:
            raise ConfigError(f"cannot read height field {h}: {exc}") from None
        if not isinstance(f, ScalarField) or f.grid != grid:
            raise ConfigError("height field must be a scalar on the configured grid")
        return f
    return ScalarField(grid, expression(h, grid)[None])


def _cmd_hypersurface(cfg, rep: Report):
    grid = _grid(cfg)
    hyp = graph_hypersurface(_height(cfg, grid), cfg["order"])
    opts = _solve_opts(cfg)
    be, yk, r = hypersurface_decomposition_report(hyp, opts, float(cfg["verdict_tol"]))
    rep.solver += [be.stats.to_dict(), yk.stats.to_dict()]
    rep.results["hypersurface"] = r.to_dict()
    rep.expect("flags_agree", r.flags_agree, True, "constant H, Killing xi, zero Lie integral", relation="==")
    rep.expect("lie_identity", r.identity_relative, float(cfg["identity_tol"]),
               "int xi(trace phi) dv = -|delta* theta|^2")
    if r.umbilic_split_residual is not None:
        rep.expect("umbilic_split", r.umbilic_split_residual, 100.0 * opts.rel_tol * (1.0 + r.phi_norm),
                   "phi = H g + phiTT for constant H")
    _dump(rep, cfg, "second_form", hyp.second_form)
    _dump(rep, cfg, "mean_curvature", hyp.mean_curvature)


def _map(cfg, N=None):
    m = _metric(cfg, N)
    A = cfg.get("winding", np.eye(m.n).tolist())
    mm = len(A)
    target = _metric_spec(cfg.get("target", "flat"), mm)
    pert = cfg.get("perturbation")
    p = None
    if pert is not None:
        if len(pert) != mm:
            raise ConfigError("perturbation needs one expression per target component")
        p = np.stack([expression(e, m.grid) for e in pert])
    return torus_map(m, A, target, p, cfg.get("target_lengths"), cfg["order"])


def _cmd_map(cfg, rep: Report):
    try:
        fmap = _map(cfg)
    except TensorSplitError as exc:
        raise ConfigError(str(exc)) from None
    be, r = harmonic_balance_check(fmap, _solve_opts(cfg), float(cfg["verdict_tol"]))
    rep.solver.append(be.stats.to_dict())
    rep.results["map"] = r.to_dict()
    rep.expect("divergence_law_consistent", r.consistent, True, "any two of the three map verdicts imply the third",
               relation="==")
    rep.expect("rank", r.rank_ok, True, "differential has full rank", enabled=False, relation="==")
    if r.harmonic and r.sampson_harmonic:
        rep.expect("energy_density_constant", r.energy_density_stddev, 1e-10, "energy density is constant")
        rep.expect("energy_equals_density_volume", abs(r.energy - r.energy_density * r.volume), 1e-10,
                   "E = C Vol")
    _dump(rep, cfg, "theta", be.theta)


def _cmd_kernel(cfg, rep: Report):
    m = _metric(cfg)
    name = cfg.get("operator", "delta_delta_star")
    if name not in ("delta_delta_star", "ahlfors"):
        raise ConfigError(f"kernel search supports delta_delta_star and ahlfors, not {name!r}")
    op = OPERATOR_FACTORIES[name](m)
    kopt = _solve_opts(cfg).kernel
    kr = kernel_spectrum(op, kopt)
    rep.results["kernel"] = {"operator": name, "dimension": len(kr.basis), "ritz_values": list(kr.ritz_values),
                             "lambda_max": kr.lambda_max, "threshold": kr.threshold, "iterations": kr.iterations}
    if "expect_dim" in cfg:
        rep.expect("kernel_dimension", len(kr.basis), int(cfg["expect_dim"]), "expected kernel dimension",
                   relation="==")
    for i, v in enumerate(kr.basis):
        _dump(rep, cfg, f"kernel_{i}", v)


# ---------------------------------------------------------------------------
# convergence ladder


def weitzenboeck_diagnostic(m: MetricField, seed: int = 0) -> float:
    """``|weitzenboeck_residual(theta)| / |theta|`` for a seeded field with modes ``|k_i| <= 1``."""
    th = random_smooth(OneFormField, m.grid, np.random.default_rng(seed), kmax=1)
    return l2_norm(weitzenboeck_residual(th, m), m) / l2_norm(th, m)


def convergence_error(cfg, check: str, N: int) -> float:
    if check == "curvature":
        m = _metric(cfg, N)
        _, s_exact = analytic_curvature(m.spec, m.grid.coords(), m.grid.lengths)
        return float(np.abs(curvature(m).scalar.values - s_exact).max())
    if check == "bianchi":
        return bianchi_residual(_metric(cfg, N))[1]
    if check == "sampson":
        m = _metric(cfg, N)
        yk, _ = ricci_york(m, _solve_opts(cfg), float(cfg["verdict_tol"]))
        return sampson_identity_check(m, yk).residual
    if check == "weitzenboeck":
        return weitzenboeck_diagnostic(_metric(cfg, N), int(cfg["seed"]))
    if check == "codazzi":
        grid = _grid(cfg, N)
        return codazzi_divergence_check(graph_hypersurface(_height(cfg, grid), cfg["order"]))
    if check == "balance":
        return balance_residual(_map(cfg, N))[1]
    raise ConfigError(f"unknown convergence check {check!r}; expected one of {', '.join(CONVERGENCE_CHECKS)}")


def _cmd_convergence(cfg, rep: Report):
    ladder = [int(v) for v in cfg.get("ladder", [16, 32, 64])]
    if len(ladder) < 3 or any(b != 2 * a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("ladder needs at least three resolutions, each double the last")
    check = cfg.get("check", "curvature")
    errors = [convergence_error(cfg, check, N) for N in ladder]
    order, pairs = observed_order(ladder, errors)
    rep.results["convergence"] = {"check": check, "ladder": ladder, "errors": errors,
                                  "pairwise_orders": pairs, "observed_order": order}
    min_order = float(cfg.get("min_order", 3.0))
    if order == "exact":
        rep.check("observed_order", order, min_order, True, f"{check} error at round-off", relation=">=")
    else:
        rep.expect("observed_order", order, min_order, f"{check} error decays at stencil order", relation=">=")


DISPATCH = {
    "decompose": _cmd_decompose, "curvature": _cmd_curvature, "ricci": _cmd_ricci, "soliton": _cmd_soliton,
    "hypersurface": _cmd_hypersurface, "map": _cmd_map, "kernel": _cmd_kernel, "convergence": _cmd_convergence,
}


def run(cfg: dict) -> tuple[int, Report]:
    """Execute a resolved config; return ``(exit status, report)``.

    Exit status: 0 when every enabled check passes, 1 on configuration
    errors, 2 when a solve does not converge, 3 when a check fails.
    """
    rep = Report(config=cfg)
    t0 = time.perf_counter()
    try:
        DISPATCH[cfg["command"]](cfg, rep)
    except (ConfigError, GridError, MetricError, MismatchError) as exc:
        rep.results["error"] = str(exc)
        rep.wall_time = time.perf_counter() - t0
        return EXIT_CONFIG, rep
    except SolverError as exc:
        rep.results["error"] = str(exc)
        rep.wall_time = time.perf_counter() - t0
        return EXIT_SOLVER, rep
    rep.wall_time = time.perf_counter() - t0
    if not rep.converged:
        return EXIT_SOLVER, rep
    return (EXIT_OK if rep.passed else EXIT_FAILED), rep
