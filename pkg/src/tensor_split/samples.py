"""Seeded smooth test fields and small analytic expressions.

Expressions are lists of plane-wave modes
``{"amp": a, "k": [k_1, ..., k_n], "phase": p}`` meaning
``a sin(2 pi sum_i k_i x_i / L_i + p)``, plus an optional constant offset.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .grid import Field, Grid


def plane_waves(modes, grid: Grid, offset: float = 0.0) -> np.ndarray:
    x = grid.coords()
    out = np.full(grid.dims, float(offset))
    for m in modes:
        try:
            k = [float(v) for v in m["k"]]
            amp = float(m["amp"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad mode {m!r}: {exc}") from None
        if len(k) != grid.n:
            raise ConfigError(f"mode {m!r} needs {grid.n} wavenumbers")
        arg = sum(2.0 * math.pi * k[i] * x[i] / grid.lengths[i] for i in range(grid.n))
        out += amp * np.sin(arg + float(m.get("phase", 0.0)))
    return out


def expression(spec, grid: Grid) -> np.ndarray:
    """Evaluate ``{"modes": [...], "offset": c}`` (or a bare mode list) on the grid."""
    if isinstance(spec, dict):
        return plane_waves(spec.get("modes", []), grid, spec.get("offset", 0.0))
    if isinstance(spec, (list, tuple)):
        return plane_waves(spec, grid)
    if isinstance(spec, (int, float)):
        return np.full(grid.dims, float(spec))
    raise ConfigError(f"cannot evaluate expression {spec!r}")


def random_smooth(cls: type[Field], grid: Grid, rng: np.random.Generator, kmax: int = 2,
                  terms: int = 4, amp: float = 1.0) -> Field:
    """Random field of kind ``cls`` built from ``terms`` low Fourier modes per component."""
    x = grid.coords()
    data = np.zeros((cls.ncomp(grid.n), *grid.dims))
    for c in range(data.shape[0]):
        for _ in range(terms):
            k = rng.integers(-kmax, kmax + 1, grid.n)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            arg = sum(2.0 * math.pi * k[i] * x[i] / grid.lengths[i] for i in range(grid.n))
            data[c] += amp * rng.normal() * np.cos(arg + phase)
    return cls(grid, data)
