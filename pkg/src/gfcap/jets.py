"""Truncated Taylor arithmetic.

A :class:`Jet` is a power series in one complex variable ``t`` whose
coefficients also carry first-order sensitivities to a fixed set of real
parameters.  Evaluating a rational expression at ``z = z0 + t`` yields all
needed z-derivatives at ``z0`` and, in the same pass, the Jacobian of every
coefficient with respect to the parameters.
"""

from __future__ import annotations

from numbers import Number

import numpy as np

__all__ = ["Jet", "deflate"]


def _row_mul(u, v):
    out = np.empty_like(u)
    out[0] = u[0] * v[0]
    out[1:] = u[0] * v[1:] + u[1:] * v[0]
    return out


def _row_div(u, v):
    out = np.empty_like(u)
    inv = 1.0 / v[0]
    out[0] = u[0] * inv
    out[1:] = (u[1:] - out[0] * v[1:]) * inv
    return out


class Jet:
    """Series ``sum_i c[i] t**i`` with parameter sensitivities.

    ``c[i, 0]`` is the i-th coefficient and ``c[i, 1 + p]`` its derivative
    with respect to parameter ``p``.  Jets flagged ``exact`` are polynomials
    (constants included) and are never truncated; every other jet is a
    series known only up to ``len(c) - 1``.
    """

    __slots__ = ("c", "exact")
    __array_priority__ = 100

    def __init__(self, c, exact=False):
        self.c = np.asarray(c, dtype=complex)
        self.exact = exact

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, nvar):
        c = np.zeros((1, nvar + 1), dtype=complex)
        c[0, 0] = value
        return cls(c, exact=True)

    @classmethod
    def variable(cls, value, index, nvar):
        c = np.zeros((1, nvar + 1), dtype=complex)
        c[0, 0] = value
        c[0, 1 + index] = 1.0
        return cls(c, exact=True)

    @classmethod
    def polynomial(cls, coeffs, nvar):
        """Exact polynomial with parameter-free coefficients (low to high)."""
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=complex))
        c = np.zeros((len(coeffs), nvar + 1), dtype=complex)
        c[:, 0] = coeffs
        return cls(c, exact=True)

    @classmethod
    def from_scalars(cls, scalars):
        """Stack scalar jets into one exact polynomial (low to high)."""
        return cls(np.vstack([s.c[:1] for s in scalars]), exact=True)

    @classmethod
    def point(cls, center, length):
        """The series ``center + t`` truncated to ``length`` terms."""
        if not isinstance(center, Jet):
            raise TypeError("center must be a Jet")
        c = np.zeros((length, center.nvar + 1), dtype=complex)
        c[0] = center.c[0]
        if length > 1:
            c[1, 0] = 1.0
        return cls(c, exact=False)

    # inspection ---------------------------------------------------------
    @property
    def nvar(self):
        return self.c.shape[1] - 1

    @property
    def length(self):
        return self.c.shape[0]

    @property
    def value(self):
        return complex(self.c[0, 0])

    @property
    def grad(self):
        return self.c[0, 1:].copy()

    def coef(self, i):
        """Coefficient ``i`` as an exact scalar jet (zero past the end)."""
        if i < self.length:
            return Jet(self.c[i : i + 1].copy(), exact=True)
        if not self.exact:
            raise IndexError("coefficient beyond truncation order")
        return Jet(np.zeros((1, self.c.shape[1]), dtype=complex), exact=True)

    def scalars(self):
        return [self.coef(i) for i in range(self.length)]

    def truncate(self, length):
        c = self.c[:length]
        if len(c) < length:
            if not self.exact:
                raise ValueError("cannot extend a truncated series")
            c = np.vstack([c, np.zeros((length - len(c), c.shape[1]), dtype=complex)])
        return Jet(c.copy(), exact=False)

    def __repr__(self):
        kind = "poly" if self.exact else "series"
        return f"Jet({kind}, {self.c[:, 0]!r})"

    # arithmetic ---------------------------------------------------------
    @classmethod
    def _make(cls, c, exact):
        out = object.__new__(cls)
        out.c = c
        out.exact = exact
        return out

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.c.shape[1] != self.c.shape[1]:
                raise ValueError("jets carry different parameter sets")
            return other
        if isinstance(other, Number):
            return Jet.constant(other, self.nvar)
        return NotImplemented

    @staticmethod
    def _fit(c, length):
        if len(c) >= length:
            return c[:length]
        pad = np.zeros((length - len(c), c.shape[1]), dtype=complex)
        return np.vstack([c, pad])

    def __add__(self, other):
        if isinstance(other, Number):
            c = self.c.copy()
            c[0, 0] += other
            return Jet._make(c, self.exact)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        a, b = self.c, other.c
        if self.exact and other.exact:
            n = max(len(a), len(b))
        elif self.exact:
            n = len(b)
        elif other.exact:
            n = len(a)
        else:
            n = min(len(a), len(b))
        if len(a) == n and len(b) == n:
            return Jet._make(a + b, self.exact and other.exact)
        return Jet._make(self._fit(a, n) + self._fit(b, n), self.exact and other.exact)

    __radd__ = __add__

    def __neg__(self):
        return Jet._make(-self.c, self.exact)

    def __sub__(self, other):
        if isinstance(other, Number):
            return self + (-other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return Jet._make(self.c * other, self.exact)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        a, b = self.c, other.c
        la, lb = len(a), len(b)
        exact = self.exact and other.exact
        if exact:
            n = la + lb - 1
        elif self.exact:
            n = lb
        elif other.exact:
            n = la
        else:
            n = min(la, lb)
        if la == 1 and lb >= n:
            out = a[0, 0] * b[:n]
            out[:, 1:] += b[:n, :1] * a[:1, 1:]
            return Jet._make(out, exact)
        if lb == 1 and la >= n:
            out = b[0, 0] * a[:n]
            out[:, 1:] += a[:n, :1] * b[:1, 1:]
            return Jet._make(out, exact)
        out = np.zeros((n, a.shape[1]), dtype=complex)
        for i in range(min(la, n)):
            seg = min(lb, n - i)
            out[i : i + seg] += a[i, 0] * b[:seg]
            out[i : i + seg, 1:] += b[:seg, :1] * a[i : i + 1, 1:]
        return Jet._make(out, exact)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Number):
            return Jet._make(self.c / other, self.exact)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if other.exact and other.length == 1:
            inv = _row_div(np.eye(1, self.c.shape[1], dtype=complex)[0], other.c[0])
            return self * Jet._make(inv[None, :], True)
        if self.exact and other.exact:
            raise ValueError("exact division by a non-constant polynomial; truncate first")
        if self.exact:
            n = other.length
        elif other.exact:
            n = self.length
        else:
            n = min(self.length, other.length)
        a = self._fit(self.c, n)
        b = other.c
        q = np.zeros_like(a)
        for i in range(n):
            acc = a[i].copy()
            for j in range(1, min(i, len(b) - 1) + 1):
                acc -= _row_mul(b[j], q[i - j])
            q[i] = _row_div(acc, b[0])
        return Jet._make(q, False)

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other / self

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        if n < 0:
            return 1.0 / (self ** (-n))
        result = Jet.constant(1.0, self.nvar)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def conj(self):
        """Complex conjugate; valid because all parameters are real."""
        return Jet(np.conj(self.c), self.exact)

    def compose(self, z):
        """Evaluate this exact polynomial at the jet ``z`` (Horner)."""
        if not self.exact:
            raise ValueError("only exact polynomials can be composed")
        rows = self.scalars()
        acc = rows[-1]
        for row in reversed(rows[:-1]):
            acc = acc * z + row
        return acc


def deflate(poly, root):
    """Synthetic division of an exact polynomial by ``(z - root)``.

    Returns ``(quotient, remainder)`` with the remainder as a scalar jet.
    """
    if not poly.exact:
        raise ValueError("deflation needs an exact polynomial")
    c = poly.c
    d = len(c) - 1
    if d < 1:
        raise ValueError("cannot deflate a constant")
    r = root.c[0]
    q = np.zeros((d, c.shape[1]), dtype=complex)
    q[d - 1] = c[d]
    for i in range(d - 1, 0, -1):
        q[i - 1] = c[i] + _row_mul(r, q[i])
    rem = c[0] + _row_mul(r, q[0])
    return Jet(q, exact=True), Jet(rem[None, :], exact=True)

