"""Periodic grids on the flat n-torus and the tensor fields that live on them.

Every field stores its independent components as a single float64 array of
shape ``(ncomp, *grid.dims)``: component-major, row-major within a component,
last axis fastest.  Symmetric tensors keep only the upper triangle and
two-forms only the strict upper triangle, so symmetry (or antisymmetry) is
structural rather than numerical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import ClassVar

import numpy as np

from .errors import GridError, MismatchError

LAYOUT = "component-major;row-major;last-fastest"
FIELD_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on the torus ``prod_i [0, L_i)``."""

    n: int
    dims: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.n not in (2, 3):
            raise GridError(f"dimension-out-of-range: n={self.n} (expected 2 or 3)")
        if len(self.dims) != self.n or len(self.lengths) != self.n:
            raise GridError("dims and lengths must both have n entries")
        for N in self.dims:
            if int(N) != N or N < 8 or N % 2:
                raise GridError(f"odd-or-too-small axis: {N} (need even and >= 8)")
        for L in self.lengths:
            if not (L > 0 and math.isfinite(L)):
                raise GridError(f"nonpositive length: {L}")

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.lengths, self.dims))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def coords(self) -> np.ndarray:
        """Coordinates of every grid point, shape ``(n, *dims)``."""
        axes = [np.arange(N) * h for N, h in zip(self.dims, self.spacing)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def to_dict(self) -> dict:
        return {"n": self.n, "dims": list(self.dims), "lengths": list(self.lengths)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return make_grid(int(d["n"]), d["dims"], d["lengths"])


def make_grid(n: int, dims, lengths) -> Grid:
    """Build a validated :class:`Grid`.

    Raises :class:`GridError` for a dimension outside {2, 3}, an odd or
    too-small axis, or a nonpositive length.
    """
    dims = tuple(int(N) for N in dims)
    lengths = tuple(float(L) for L in lengths)
    return Grid(int(n), dims, lengths)


def sym_pairs(n: int) -> list[tuple[int, int]]:
    """Upper-triangle index order (1,1),(1,2),...,(1,n),(2,2),...,(n,n), zero based."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def antisym_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


class Field:
    """Immutable component array attached to a grid."""

    kind: ClassVar[str] = "field"

    def __init__(self, grid: Grid, data):
        arr = np.array(data, dtype=np.float64, copy=True)
        expected = (self.ncomp(grid.n), *grid.dims)
        if arr.size != int(np.prod(expected)):
            raise MismatchError(
                f"{self.kind} on grid {grid.dims} needs {int(np.prod(expected))} values, got {arr.size}"
            )
        arr = np.ascontiguousarray(arr.reshape(expected))
        arr.flags.writeable = False
        self.grid = grid
        self.data = arr

    @staticmethod
    def ncomp(n: int) -> int:
        raise NotImplementedError

    @classmethod
    def zeros(cls, grid: Grid):
        return cls(grid, np.zeros((cls.ncomp(grid.n), *grid.dims)))

    def _check(self, other: "Field"):
        if type(other) is not type(self):
            raise MismatchError(f"kind-mismatch: {self.kind} vs {other.kind}")
        if other.grid != self.grid:
            raise MismatchError("grid-mismatch")

    def __add__(self, other):
        self._check(other)
        return type(self)(self.grid, self.data + other.data)

    def __sub__(self, other):
        self._check(other)
        return type(self)(self.grid, self.data - other.data)

    def __neg__(self):
        return type(self)(self.grid, -self.data)

    def __mul__(self, c):
        if isinstance(c, ScalarField):
            if c.grid != self.grid:
                raise MismatchError("grid-mismatch")
            return type(self)(self.grid, self.data * c.data[0])
        return type(self)(self.grid, self.data * float(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return type(self)(self.grid, self.data / float(c))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def __repr__(self):
        return f"{type(self).__name__}(dims={self.grid.dims})"


class ScalarField(Field):
    kind = "scalar"

    @staticmethod
    def ncomp(n):
        return 1

    @property
    def values(self) -> np.ndarray:
        return self.data[0]


class OneFormField(Field):
    kind = "oneform"

    @staticmethod
    def ncomp(n):
        return n


class VectorField(Field):
    kind = "vector"

    @staticmethod
    def ncomp(n):
        return n


class SymTensorField(Field):
    kind = "symtensor"

    @staticmethod
    def ncomp(n):
        return n * (n + 1) // 2

    def component(self, i: int, j: int) -> np.ndarray:
        if j < i:
            i, j = j, i
        return self.data[sym_pairs(self.grid.n).index((i, j))]

    def __getitem__(self, ij):
        return self.component(*ij)

    def full(self) -> np.ndarray:
        """Dense ``(n, n, *dims)`` array."""
        n = self.grid.n
        out = np.empty((n, n, *self.grid.dims))
        for c, (i, j) in enumerate(sym_pairs(n)):
            out[i, j] = self.data[c]
            out[j, i] = self.data[c]
        return out

    @classmethod
    def from_full(cls, grid: Grid, arr: np.ndarray) -> "SymTensorField":
        """Take the upper triangle of a dense array (assumed symmetric)."""
        return cls(grid, np.stack([arr[i, j] for i, j in sym_pairs(grid.n)]))


class TwoFormField(Field):
    kind = "twoform"

    @staticmethod
    def ncomp(n):
        return n * (n - 1) // 2

    def component(self, i: int, j: int) -> np.ndarray:
        if i == j:
            return np.zeros(self.grid.dims)
        if j < i:
            return -self.data[antisym_pairs(self.grid.n).index((j, i))]
        return self.data[antisym_pairs(self.grid.n).index((i, j))]

    def __getitem__(self, ij):
        return self.component(*ij)

    def full(self) -> np.ndarray:
        n = self.grid.n
        out = np.zeros((n, n, *self.grid.dims))
        for c, (i, j) in enumerate(antisym_pairs(n)):
            out[i, j] = self.data[c]
            out[j, i] = -self.data[c]
        return out

    @classmethod
    def from_full(cls, grid: Grid, arr: np.ndarray) -> "TwoFormField":
        return cls(grid, np.stack([arr[i, j] for i, j in antisym_pairs(grid.n)]))


FIELD_KINDS: dict[str, type[Field]] = {
    cls.kind: cls
    for cls in (ScalarField, OneFormField, VectorField, SymTensorField, TwoFormField)
}


def field_to_dict(field: Field) -> dict:
    return {
        "version": FIELD_FORMAT_VERSION,
        "grid": field.grid.to_dict(),
        "kind": field.kind,
        "layout": LAYOUT,
        "data": field.data.ravel().tolist(),
    }


def field_from_dict(doc: dict) -> Field:
    if doc.get("version") != FIELD_FORMAT_VERSION:
        raise ValueError(f"unsupported field file version {doc.get('version')!r}")
    if doc.get("layout", LAYOUT) != LAYOUT:
        raise ValueError(f"unsupported layout {doc.get('layout')!r}")
    try:
        cls = FIELD_KINDS[doc["kind"]]
    except KeyError:
        raise ValueError(f"unknown field kind {doc.get('kind')!r}") from None
    grid = Grid.from_dict(doc["grid"])
    return cls(grid, np.asarray(doc["data"], dtype=np.float64))


def write_field(path, field: Field) -> None:
    # float repr round-trips float64 exactly
    Path(path).write_text(json.dumps(field_to_dict(field)), encoding="utf-8")


def read_field(path) -> Field:
    return field_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
