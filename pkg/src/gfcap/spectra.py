"""Noise models, rational filters and symmetric spectra on the unit circle.

Polynomials are stored low-to-high throughout: ``[a0, a1, ..., ad]`` is
``a0 + a1 z + ... + ad z**d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ArmaModel",
    "UnifiedFilter",
    "LaurentSpectrum",
    "FactorizationResult",
    "noise_psd_eval",
    "noise_transfer_eval",
    "filter_eval",
    "filter_to_b",
    "poly_roots",
    "poly_from_roots",
    "spectral_factorize",
]

ROOT_RTOL = 1e-10
BOUNDARY_TOL = 1e-8
CONJ_TOL = 1e-10


def poly_from_roots(roots, kind="monic"):
    """Expand a polynomial from its roots, low-to-high.

    ``kind="monic"`` gives ``prod(z - r)``; ``kind="unit"`` gives
    ``prod(1 - z / r)`` (value 1 at the origin); ``kind="reciprocal"`` gives
    ``prod(1 - r z)``.
    """
    out = np.array([1.0 + 0j])
    for r in roots:
        if kind == "monic":
            factor = np.array([-r, 1.0])
        elif kind == "unit":
            factor = np.array([1.0, -1.0 / r])
        elif kind == "reciprocal":
            factor = np.array([1.0, -r])
        else:
            raise ValueError(f"unknown kind {kind!r}")
        out = np.convolve(out, factor)
    return out


def _real_if_close(c, tol=1e-12):
    c = np.asarray(c, dtype=complex)
    if np.all(np.abs(c.imag) <= tol * max(1.0, np.max(np.abs(c)))):
        return c.real.copy()
    return c


def _polyval(coeffs, z):
    return np.polynomial.polynomial.polyval(z, coeffs)


@dataclass(frozen=True)
class ArmaModel:
    """ARMA(k) noise with PSD ``|prod(1 + a_i z) / prod(1 + b_i z)|**2`` on |z| = 1."""

    alphas: tuple
    betas: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.alphas))
        b = tuple(float(v) for v in np.atleast_1d(self.betas))
        if len(a) != len(b):
            raise ValueError("alphas and betas must have the same length")
        if len(a) < 1:
            raise ValueError("order k must be at least 1")
        if any(abs(v) >= 1 for v in a + b):
            raise ValueError("all |alpha_i| and |beta_i| must be < 1")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "betas", b)

    @property
    def k(self):
        return len(self.alphas)

    @property
    def p_coeffs(self):
        """Coefficients of ``prod(1 + alpha_i z)``."""
        return poly_from_roots([-a for a in self.alphas], "reciprocal").real

    @property
    def q_coeffs(self):
        """Coefficients of ``prod(1 + beta_i z)``."""
        return poly_from_roots([-b for b in self.betas], "reciprocal").real

    def is_white(self):
        return sorted(self.alphas) == sorted(self.betas)

    def transfer(self, z):
        """``H_Z(z)`` at arbitrary complex points."""
        z = np.asarray(z, dtype=complex)
        return _polyval(self.p_coeffs, z) / _polyval(self.q_coeffs, z)


def noise_psd_eval(model, theta):
    """``S_Z(e^{i theta})``; vectorised over ``theta``."""
    z = np.exp(1j * np.asarray(theta, dtype=float))
    num = np.abs(_polyval(model.p_coeffs, z)) ** 2
    den = np.abs(_polyval(model.q_coeffs, z)) ** 2
    return num / den


def noise_transfer_eval(model, theta):
    """``H_Z(e^{i theta}) = prod(1 + a_i e^{i theta}) / prod(1 + b_i e^{i theta})``."""
    return model.transfer(np.exp(1j * np.asarray(theta, dtype=float)))


@dataclass(frozen=True)
class UnifiedFilter:
    """Strictly causal filter ``sum_n y_n z^n / prod_n (1 - x_n z)``.

    ``poles`` are the ``x_n`` (|x_n| < 1, conjugate-closed); ``numer`` holds
    ``y_1..y_k``.  The denominator then has real coefficients, so the
    numerator must too for the Taylor coefficients to be real.
    """

    poles: tuple
    numer: tuple

    def __post_init__(self):
        poles = tuple(complex(p) for p in np.atleast_1d(self.poles))
        numer = tuple(complex(v) for v in np.atleast_1d(self.numer))
        if any(abs(p) >= 1 for p in poles):
            raise ValueError("filter poles must lie strictly inside the unit disk")
        if not _conjugate_closed(poles):
            raise ValueError("filter poles must be real or come in conjugate pairs")
        scale = max([1.0] + [abs(v) for v in numer])
        if any(abs(v.imag) > CONJ_TOL * scale for v in numer):
            raise ValueError("numerator coefficients must be real")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "numer", numer)

    @classmethod
    def from_coefficients(cls, denom, numer):
        """Build from ``D(z) = 1 + d_1 z + ...`` and numerator ``y_1..y_k``."""
        denom = np.asarray(denom, dtype=float)
        if denom[0] != 1.0:
            raise ValueError("denominator must satisfy D(0) = 1")
        trimmed = np.trim_zeros(denom, "b")
        if len(trimmed) > 1:
            # poles are the reciprocals of the roots of D
            poles = list(np.roots(trimmed))
        else:
            poles = []
        poles += [0.0] * (len(denom) - 1 - len(poles))
        poles = _symmetrize(poles)
        return cls(tuple(poles), tuple(np.asarray(numer, dtype=complex)))

    @property
    def order(self):
        return max(len(self.poles), len(self.numer))

    @property
    def denom_coeffs(self):
        """Real coefficients of ``prod(1 - x_n z)``."""
        return _real_if_close(poly_from_roots(self.poles, "reciprocal")).real

    @property
    def numer_coeffs(self):
        """Numerator polynomial coefficients (constant term 0)."""
        return np.concatenate([[0.0], np.real(self.numer)])

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return _polyval(self.numer_coeffs, z) / _polyval(self.denom_coeffs, z)

    def taylor(self, n):
        """Taylor coefficients ``c_1..c_n`` (power-series division)."""
        num = np.zeros(n + 1)
        nc = self.numer_coeffs[: n + 1]
        num[: len(nc)] = nc
        den = self.denom_coeffs
        c = np.zeros(n + 1)
        for i in range(n + 1):
            acc = num[i]
            for j in range(1, min(i, len(den) - 1) + 1):
                acc -= den[j] * c[i - j]
            c[i] = acc
        return c[1:]

    def scaled(self, factor):
        return UnifiedFilter(self.poles, tuple(factor * np.real(self.numer)))

    @classmethod
    def zero(cls, k):
        return cls((0.0,) * k, (0.0,) * k)


def _conjugate_closed(values, tol=CONJ_TOL):
    remaining = list(values)
    while remaining:
        v = remaining.pop()
        if abs(v.imag) <= tol * max(1.0, abs(v)):
            continue
        dist = [abs(w - v.conjugate()) for w in remaining]
        if not dist or min(dist) > tol * max(1.0, abs(v)) * 1e2:
            return False
        remaining.pop(int(np.argmin(dist)))
    return True


def _symmetrize(values, tol=1e-9):
    """Snap near-real values to the axis and pair conjugates exactly."""
    vals = [complex(v) for v in values]
    out = []
    pending = []
    for v in vals:
        if abs(v.imag) <= tol * max(1.0, abs(v)):
            out.append(complex(v.real, 0.0))
        else:
            pending.append(v)
    upper = sorted((v for v in pending if v.imag > 0), key=lambda w: (w.real, w.imag))
    lower = [v for v in pending if v.imag < 0]
    for v in upper:
        j = int(np.argmin([abs(w - v.conjugate()) for w in lower]))
        w = lower.pop(j)
        avg = 0.5 * (v + w.conjugate())
        out.extend([avg, avg.conjugate()])
    return out


def filter_eval(filt, theta):
    """``C(e^{i theta})`` for a unified-form filter."""
    return filt(np.exp(1j * np.asarray(theta, dtype=float)))


def filter_to_b(filt, model, theta):
    """Feedback filter ``B = C / H_Z`` on the unit circle."""
    return filter_eval(filt, theta) / noise_transfer_eval(model, theta)


def poly_roots(coeffs):
    """All complex roots of a polynomial given low-to-high.

    Companion-matrix eigenvalues followed by a Newton polish.  Every root
    satisfies ``|p(r)| <= 1e-10 * ||coeffs|| * max(1, |r|)**deg``.

    Raises
    ------
    ValueError
        For the zero polynomial or a constant.
    """
    c = np.asarray(coeffs, dtype=complex)
    c = np.trim_zeros(c, "b")
    if len(c) < 2:
        raise ValueError("degenerate polynomial: need degree >= 1")
    deg = len(c) - 1
    dc = c[1:] * np.arange(1, deg + 1)
    real = not np.any(c.imag)
    raw = np.roots(c.real[::-1] if real else c[::-1]).astype(complex)
    polished = np.array([_newton_polish(c, dc, r) for r in raw])
    if real:
        # keep exact conjugate symmetry: mirror the upper half-plane roots
        for i, r in enumerate(raw):
            if r.imag < 0:
                j = int(np.argmin(np.abs(raw - r.conjugate())))
                polished[i] = polished[j].conjugate()
            elif r.imag == 0:
                polished[i] = polished[i].real
    # clustered roots are individually ill-conditioned; keep whichever set
    # reproduces the coefficients better
    roots = polished if _expansion_error(c, polished) <= _expansion_error(c, raw) else raw
    norm = np.linalg.norm(c)
    for r in roots:
        res = abs(_polyval(c, r))
        if res > ROOT_RTOL * norm * max(1.0, abs(r)) ** deg:
            raise ArithmeticError(f"root {r!r} misses residual bound ({res:.3g})")
    return roots


def _newton_polish(c, dc, r, steps=3):
    best, best_res = r, abs(_polyval(c, r))
    for _ in range(steps):
        d = _polyval(dc, best)
        if d == 0:
            break
        cand = best - _polyval(c, best) / d
        res = abs(_polyval(c, cand))
        if not res < best_res:
            break
        best, best_res = cand, res
    return best


def _expansion_error(c, roots):
    return float(np.max(np.abs(c[-1] * poly_from_roots(roots) - c)))


@dataclass(frozen=True)
class LaurentSpectrum:
    """``S(e^{i theta}) = s_0 + sum_j 2 s_j cos(j theta)``."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.coeffs))
        if not c:
            raise ValueError("empty spectrum")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.coeffs[0])
        for j, s in enumerate(self.coeffs[1:], start=1):
            out = out + 2 * s * np.cos(j * theta)
        return out

    @classmethod
    def from_factor(cls, sigma2, r_coeffs):
        """Coefficients of ``sigma2 |R(e^{i theta})|**2``."""
        r = np.asarray(r_coeffs, dtype=float)
        full = sigma2 * np.correlate(r, r, mode="full")
        k = len(r) - 1
        return cls(tuple(full[k:]))


@dataclass(frozen=True)
class FactorizationResult:
    """Canonical factor ``sigma2 |R|**2`` with ``R(0) = 1`` and roots outside the disk."""

    sigma2: float
    r_coeffs: tuple


def spectral_factorize(spec, n_check=1024):
    """Canonical spectral factorization by rooting ``z^k S(z)``.

    Raises
    ------
    ValueError
        ``"not factorizable"`` when the spectrum is not strictly positive,
        ``"boundary zero"`` when a root sits on the unit circle.
    """
    s = np.asarray(spec.coeffs, dtype=float)
    k = len(s) - 1
    theta = -np.pi + 2 * np.pi * np.arange(n_check) / n_check
    if np.min(spec(theta)) <= 0:
        raise ValueError("not factorizable: spectrum is not strictly positive")
    eff = np.trim_zeros(s, "b")
    keff = len(eff) - 1
    if keff == 0:
        return FactorizationResult(float(s[0]), tuple([1.0] + [0.0] * k))
    laurent = np.concatenate([eff[::-1], eff[1:]])
    roots = poly_roots(laurent)
    if np.any(np.abs(np.abs(roots) - 1.0) < BOUNDARY_TOL):
        raise ValueError("boundary zero: spectrum vanishes on the unit circle")
    outside = roots[np.abs(roots) > 1.0]
    if len(outside) != keff:
        raise ValueError("not factorizable: root split is unbalanced")
    r = _real_if_close(poly_from_roots(outside, "unit"), tol=1e-9).real
    sigma2 = float(eff[0] / np.dot(r, r))
    r_full = np.zeros(k + 1)
    r_full[: len(r)] = r
    return FactorizationResult(sigma2, tuple(float(v) for v in r_full))
