"""Tolerance-aware sign decisions.

All geometric comparisons in the package route through a single Tolerance
object so an exact kernel could be substituted later without touching
callers.  Comparisons are relative: two values within eps * scale are
treated as equal, where scale is max(1, |a|, |b|) unless overridden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EPS = 1e-12


@dataclass(frozen=True)
class Tolerance:
    eps: float = DEFAULT_EPS

    def margin(self, *values: float) -> float:
        scale = 1.0
        for v in values:
            a = abs(v)
            if a > scale:
                scale = a
        return self.eps * scale

    def sign(self, a: float, b: float = 0.0) -> int:
        """-1, 0, +1 for a <, ==, > b within tolerance."""
        m = self.margin(a, b)
        d = a - b
        if d < -m:
            return -1
        if d > m:
            return 1
        return 0

    def lt(self, a: float, b: float) -> bool:
        return self.sign(a, b) < 0

    def le(self, a: float, b: float) -> bool:
        return self.sign(a, b) <= 0

    def eq(self, a: float, b: float) -> bool:
        return self.sign(a, b) == 0

    def below(self, heights, z):
        """Vectorized strict 'height < z' with relative tolerance."""
        h = np.asarray(heights, dtype=float)
        m = self.eps * np.maximum(1.0, np.maximum(np.abs(h), abs(z)))
        return h < z - m

    def below_eq(self, heights, z):
        """Vectorized 'height <= z' (closure) with relative tolerance."""
        h = np.asarray(heights, dtype=float)
        m = self.eps * np.maximum(1.0, np.maximum(np.abs(h), abs(z)))
        return h <= z + m


DEFAULT_TOL = Tolerance()
