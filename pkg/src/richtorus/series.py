"""Truncated power series in one variable.

``Series([c0, c1, ..., cK])`` represents c0 + c1 e + ... + cK e^K with all
higher coefficients unknown; binary operations truncate to the smaller order.
"""
from __future__ import annotations

import numpy as np

from .errors import SingularSeriesError


class Series:
    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = np.array(coeffs, dtype=float)
        if self.c.ndim != 1 or self.c.size == 0:
            raise ValueError("coefficients must be a non-empty 1-D sequence")

    @classmethod
    def constant(cls, value, order):
        c = np.zeros(order + 1)
        c[0] = value
        return cls(c)

    @property
    def order(self):
        return self.c.size - 1

    def __repr__(self):
        return f"Series({self.c.tolist()})"

    def _coerce(self, other):
        if isinstance(other, Series):
            return other
        return Series.constant(float(other), self.order)

    def _pair(self, other):
        other = self._coerce(other)
        k = min(self.order, other.order) + 1
        return self.c[:k], other.c[:k]

    def __add__(self, other):
        a, b = self._pair(other)
        return Series(a + b)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._pair(other)
        return Series(a - b)

    def __rsub__(self, other):
        a, b = self._pair(other)
        return Series(b - a)

    def __neg__(self):
        return Series(-self.c)

    def __mul__(self, other):
        if not isinstance(other, Series):
            return Series(self.c * float(other))
        a, b = self._pair(other)
        return Series(np.convolve(a, b)[: a.size])

    __rmul__ = __mul__

    def __pow__(self, k):
        if int(k) != k or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = Series.constant(1.0, self.order)
        base = self
        k = int(k)
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def sqrt(self):
        """Square root with positive constant term (requires c0 > 0)."""
        c0 = self.c[0]
        if not c0 > 0.0:
            raise SingularSeriesError("square root of a series needs a positive constant term")
        out = np.zeros_like(self.c)
        out[0] = np.sqrt(c0)
        for m in range(1, self.c.size):
            acc = self.c[m] - np.dot(out[1:m], out[m - 1 : 0 : -1])
            out[m] = acc / (2.0 * out[0])
        return Series(out)

    def __call__(self, e):
        return np.polynomial.polynomial.polyval(e, self.c)
