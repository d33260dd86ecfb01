"""Integration on the unit circle, entropy rates and filter power.

Every ``dtheta / 2 pi`` integral is a sample mean over a uniform grid, which
is exponentially accurate for the smooth periodic integrands that appear
here.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .jets import Jet
from .spectra import filter_eval, noise_psd_eval, poly_from_roots

__all__ = [
    "FrequencyGrid",
    "default_grid_size",
    "grid_mean",
    "fourier_coeffs",
    "filter_power_grid",
    "filter_power_residue",
    "power_jet",
    "filter_power_exact",
    "pattern_to_filter",
    "entropy_rate",
    "jensen_log_mean",
    "waterfill_capacity",
]

DEFAULT_N = 4096
MIN_N = 512
ENV_GRID = "GFCAP_GRID_N"


def default_grid_size():
    """Grid size from ``GFCAP_GRID_N`` if set, else 4096."""
    raw = os.environ.get(ENV_GRID)
    if raw is None or raw.strip() == "":
        return DEFAULT_N
    n = int(raw)
    if n < MIN_N:
        raise ValueError(f"{ENV_GRID}={n} is below the floor of {MIN_N}")
    return n


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform samples ``theta_j = -pi + 2 pi j / N``."""

    n_points: int = field(default_factory=default_grid_size)

    def __post_init__(self):
        n = int(self.n_points)
        if n < MIN_N:
            raise ValueError(f"grid needs at least {MIN_N} points, got {n}")
        object.__setattr__(self, "n_points", n)

    @property
    def thetas(self):
        return -np.pi + 2 * np.pi * np.arange(self.n_points) / self.n_points

    @property
    def points(self):
        return np.exp(1j * self.thetas)


def grid_mean(samples):
    """Sample mean; exact for trigonometric polynomials of degree < N."""
    s = np.asarray(samples)
    if s.size == 0:
        raise ValueError("grid_mean of an empty sample set")
    return np.mean(s)


def fourier_coeffs(samples):
    """Fourier coefficients ``c_m`` of grid samples, indexed ``m mod N``.

    The grid starts at ``-pi`` so each FFT bin picks up a ``(-1)**m`` sign.
    """
    s = np.asarray(samples)
    n = s.shape[-1]
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return np.fft.fft(s, axis=-1) / n * sign


def filter_power_grid(filt, grid):
    """Grid estimate of ``int |C|^2 dtheta / 2 pi``."""
    return float(grid_mean(np.abs(filter_eval(filt, grid.thetas)) ** 2))


def power_jet(xs, ys):
    """Power of ``sum y_ij z^j / (1 - x_i z)^j`` as a scalar jet.

    ``xs`` are scalar jets for the distinct poles and ``ys[i]`` the scalar
    jets ``y_i1..y_im``.  The pole sets must be conjugate closed, in which
    case the bilinear (not sesquilinear) form below is the exact power:
    ``sum y_ij y_pq [t^(q-1)] (z^(j-1) / (1 - x_i z)^j)`` at ``z = x_p + t``.
    """
    total = None
    for p, xp in enumerate(xs):
        mp = len(ys[p])
        z = Jet.point(xp, mp)
        for i, xi in enumerate(xs):
            base = 1.0 / (1.0 - xi * z)
            term = base
            for j, yij in enumerate(ys[i], start=1):
                if j > 1:
                    term = term * z * base
                for q, ypq in enumerate(ys[p], start=1):
                    contrib = yij * ypq * term.coef(q - 1)
                    total = contrib if total is None else total + contrib
    return total


def filter_power_residue(x, y):
    """Exact power of a filter given in pole/residue form.

    Parameters
    ----------
    x : sequence of complex
        Distinct poles ``x_i``, conjugate closed, all inside the unit disk.
    y : sequence of sequences
        ``y[i]`` holds ``y_i1, ..., y_im_i``; its length is the multiplicity.
    """
    x = [complex(v) for v in x]
    if any(abs(v) >= 1 for v in x):
        raise ValueError("pole on or outside the unit circle")
    if len(y) != len(x):
        raise ValueError("need one coefficient block per pole")
    xs = [Jet.constant(v, 0) for v in x]
    ys = [[Jet.constant(complex(v), 0) for v in block] for block in y]
    return float(power_jet(xs, ys).value.real)


def pattern_to_filter(x, y):
    """Convert pole/residue form to ``(poles, numer)`` of the unified form."""
    from .spectra import UnifiedFilter

    x = [complex(v) for v in x]
    ms = [len(b) for b in y]
    poles = [xi for xi, m in zip(x, ms) for _ in range(m)]
    k = len(poles)
    numer = np.zeros(k + 1, dtype=complex)
    for i, (xi, block) in enumerate(zip(x, y)):
        others = [xs for s, (xs, ms_) in enumerate(zip(x, ms)) if s != i for _ in range(ms_)]
        rest = poly_from_roots(others, "reciprocal")
        for j, yij in enumerate(block, start=1):
            term = np.convolve(rest, poly_from_roots([xi] * (len(block) - j), "reciprocal"))
            term = np.concatenate([np.zeros(j), term]) * complex(yij)
            numer[: len(term)] += term
    scale = max(1.0, float(np.max(np.abs(numer))))
    if np.max(np.abs(numer.imag)) > 1e-8 * scale:
        raise ValueError("pole/residue sets are not conjugate closed")
    return UnifiedFilter(tuple(poles), tuple(numer.real[1:]))


def filter_power_exact(filt):
    """``sum_n c_n^2`` from the controllability Gramian of a state-space form."""
    den = np.asarray(filt.denom_coeffs, dtype=float)
    num = np.asarray(filt.numer_coeffs, dtype=float)
    k = max(len(den), len(num)) - 1
    if k == 0 or not np.any(num):
        return 0.0
    d = np.zeros(k + 1)
    d[: len(den)] = den
    n = np.zeros(k + 1)
    n[: len(num)] = num
    # C(z) = z * h^T (I - A z)^{-1} b with companion A for 1 / D
    a = np.zeros((k, k))
    a[0, :] = -d[1:]
    a[1:, :-1] += np.eye(k - 1)
    b = np.zeros(k)
    b[0] = 1.0
    # z N'(z) / D(z) with N' = n[1:] shifted: c_j = sum_s n_s w_{j-s}
    h = n[1:]
    w = scipy.linalg.solve_discrete_lyapunov(a, np.outer(b, b))
    return float(h @ w @ h)


def entropy_rate(s_samples):
    """``1/2`` times the grid mean of ``log S``, in nats."""
    s = np.asarray(s_samples, dtype=float)
    if s.size == 0:
        raise ValueError("empty spectrum sample")
    if not np.all(s > 0):
        raise ValueError("spectrum not positive")
    return 0.5 * float(np.mean(np.log(s)))


def jensen_log_mean(numer_roots, denom_roots, scale):
    """Exact ``int log |f| dtheta / 2 pi`` of a rational ``f`` with ``|f(0)| = scale``."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    total = float(np.log(scale))
    for roots, sign in ((numer_roots, 1.0), (denom_roots, -1.0)):
        for r in np.atleast_1d(np.asarray(roots, dtype=complex)):
            mod = abs(r)
            if abs(mod - 1.0) < 1e-8:
                raise ValueError("root on the unit circle")
            if mod < 1.0:
                total += sign * -np.log(mod)
    return total


def waterfill_capacity(model, P, grid=None, tol=1e-12):
    """Non-feedback capacity by water-filling over the noise spectrum."""
    if P <= 0:
        raise ValueError("power must be positive")
    grid = grid or FrequencyGrid()
    s = noise_psd_eval(model, grid.thetas)
    lo, hi = float(np.min(s)), float(np.max(s)) + P
    for _ in range(200):
        nu = 0.5 * (lo + hi)
        excess = float(np.mean(np.maximum(nu - s, 0.0))) - P
        if abs(excess) <= tol:
            break
        if excess > 0:
            hi = nu
        else:
            lo = nu
        if hi - lo <= 1e-16 * hi:
            break
    return 0.5 * float(np.mean(np.log(np.maximum(nu, s) / s)))
