"""Periodic finite-difference stencils.

Two families are used.  Central stencils (first and second derivative) feed
curvature, hypersurface and map geometry.  Upwind-biased first-derivative
stencils feed the differential operators of :mod:`tensor_split.operators`:
every antisymmetric stencil has a zero symbol at the Nyquist frequency, which
would put checkerboard one-forms into the kernel of the Killing operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import correlate1d

ORDERS = (2, 4)


@dataclass(frozen=True)
class Stencil:
    """Weights ``coeffs[m]`` at integer offsets ``offsets[m]`` for unit spacing."""

    offsets: tuple[int, ...]
    coeffs: tuple[float, ...]
    derivative: int

    @property
    def radius(self) -> int:
        return max(abs(o) for o in self.offsets)

    def _window(self, sign: int) -> np.ndarray:
        R = self.radius
        w = np.zeros(2 * R + 1)
        for o, c in zip(self.offsets, self.coeffs):
            w[sign * o + R] = c
        return w

    def _run(self, f: np.ndarray, axis: int, h: float, sign: int) -> np.ndarray:
        # Subtracting each line's first value first makes the result exactly
        # zero on data that is constant along the axis (the weights sum to zero).
        base = np.take(f, [0], axis=axis)
        out = correlate1d(f - base, self._window(sign), axis=axis, mode="wrap")
        out *= 1.0 / h**self.derivative
        return out

    def apply(self, f: np.ndarray, axis: int, h: float) -> np.ndarray:
        """``out[i] = sum_m c_m f[i + o_m] / h**derivative`` along array axis ``axis``."""
        return self._run(f, axis, h, 1)

    def apply_transpose(self, f: np.ndarray, axis: int, h: float) -> np.ndarray:
        """Action of the transposed (circulant) matrix of :meth:`apply`."""
        return self._run(f, axis, h, -1)

    def symbol(self, theta: np.ndarray) -> np.ndarray:
        """Fourier symbol for unit spacing at angles ``theta = k h``."""
        return sum(c * np.exp(1j * o * theta) for o, c in zip(self.offsets, self.coeffs))


def _check(order: int):
    if order not in ORDERS:
        raise ValueError(f"stencil order must be one of {ORDERS}, got {order}")


@lru_cache(maxsize=None)
def central_first(order: int) -> Stencil:
    _check(order)
    if order == 2:
        return Stencil((-1, 1), (-0.5, 0.5), 1)
    return Stencil((-2, -1, 1, 2), (1 / 12, -2 / 3, 2 / 3, -1 / 12), 1)


@lru_cache(maxsize=None)
def central_second(order: int) -> Stencil:
    _check(order)
    if order == 2:
        return Stencil((-1, 0, 1), (1.0, -2.0, 1.0), 2)
    return Stencil((-2, -1, 0, 1, 2), (-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12), 2)


@lru_cache(maxsize=None)
def biased_first(order: int) -> Stencil:
    """Upwind-biased first derivative on offsets ``-p/2 .. p/2 + 1`` for nominal order ``p``.

    With ``p + 2`` points the stencil is formally of order ``p + 1``; its
    symbol vanishes only at zero frequency.
    """
    _check(order)
    if order == 2:
        return Stencil((-1, 0, 1, 2), (-1 / 3, -1 / 2, 1.0, -1 / 6), 1)
    return Stencil((-2, -1, 0, 1, 2, 3), (1 / 20, -1 / 2, -1 / 3, 1.0, -1 / 4, 1 / 30), 1)


class Differ:
    """Bound derivative operators for one grid and one stencil order.

    Arrays passed in may carry any number of leading component axes; the
    last ``n`` axes are the grid axes.
    """

    def __init__(self, spacing, order: int = 4):
        self.h = tuple(spacing)
        self.n = len(self.h)
        self.order = order
        self._c1 = central_first(order)
        self._c2 = central_second(order)
        self._b1 = biased_first(order)

    def _axis(self, f, k):
        return f.ndim - self.n + k

    # central
    def d1(self, f, k):
        return self._c1.apply(f, self._axis(f, k), self.h[k])

    def d2(self, f, a, b):
        """Second partial; pure derivatives use the compact second-derivative stencil."""
        if a == b:
            return self._c2.apply(f, self._axis(f, a), self.h[a])
        return self.d1(self.d1(f, a), b)

    # biased, with exact transpose
    def db(self, f, k):
        return self._b1.apply(f, self._axis(f, k), self.h[k])

    def db_t(self, f, k):
        return self._b1.apply_transpose(f, self._axis(f, k), self.h[k])
