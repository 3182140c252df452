"""Floating-point helpers."""

from __future__ import annotations

import numpy as np


def exact_remainder(total: np.ndarray, part: np.ndarray, max_steps: int = 4) -> np.ndarray:
    """Remainder ``r`` with ``part + r == total`` bit for bit wherever possible.

    Starts from ``total - part`` and walks ``r`` by single ulps towards the
    target at entries where the round trip misses.  Entries where no
    representable ``r`` works (``|part|`` much larger than ``|total|``) keep
    the closest candidate found.
    """
    r = total - part
    for _ in range(max_steps):
        back = part + r
        bad = back != total
        if not bad.any():
            break
        direction = np.where(total > back, np.inf, -np.inf)
        r = np.where(bad, np.nextafter(r, direction), r)
    return r


def reconstruction_mismatches(total: np.ndarray, *parts: np.ndarray) -> int:
    """Number of entries where the left-to-right sum of ``parts`` differs from ``total``."""
    acc = parts[0]
    for p in parts[1:]:
        acc = acc + p
    return int(np.count_nonzero(acc != total))
