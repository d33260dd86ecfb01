"""Finite-horizon feedback capacity as an independent lower-bound oracle.

For horizon ``n`` the rate of a linear feedback scheme is
``(1/2n) (logdet K_Y - logdet K_Z)`` with
``K_Y = (B + I) K_Z (B + I)^T + L L^T``, ``B`` strictly lower triangular
(causal feedback) and ``L`` lower triangular (message covariance
``K_V = L L^T``).  The budget is ``trace(B K_Z B^T + L L^T) <= n P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .quadrature import FrequencyGrid, fourier_coeffs
from .spectra import noise_psd_eval

__all__ = ["NBlockOptions", "NBlockState", "autocov", "nblock_rate", "nblock_lower_bound"]

MAX_N = 128


@dataclass(frozen=True)
class NBlockOptions:
    restarts: int = 4
    seed: int = 0
    max_iter: int = 20000
    gtol: float = 1e-11
    feedback: bool = True


@dataclass(frozen=True)
class NBlockState:
    n: int
    B: np.ndarray
    L: np.ndarray
    K_Z: np.ndarray

    @property
    def K_V(self):
        return self.L @ self.L.T

    @property
    def K_Y(self):
        bi = self.B + np.eye(self.n)
        return bi @ self.K_Z @ bi.T + self.K_V

    @property
    def power(self):
        return float(np.trace(self.B @ self.K_Z @ self.B.T) + np.sum(self.L**2)) / self.n


def autocov(model, n, grid=None):
    """Lags ``0..n-1`` of the noise autocovariance from a fine grid."""
    if n < 1:
        raise ValueError("n must be at least 1")
    need = max(8192, 64 * n)
    if grid is None or grid.n_points < need:
        grid = FrequencyGrid(int(2 ** math.ceil(math.log2(need))))
    coeffs = fourier_coeffs(noise_psd_eval(model, grid.thetas))
    return np.real(coeffs[:n]).copy()


def nblock_rate(B, L, K_Z):
    """``(1/2n) log(det K_Y / det K_Z)`` for given ``B`` and ``L``."""
    n = K_Z.shape[0]
    bi = B + np.eye(n)
    k_y = bi @ K_Z @ bi.T + L @ L.T
    _, ly = np.linalg.slogdet(k_y)
    _, lz = np.linalg.slogdet(K_Z)
    return 0.5 * (ly - lz) / n


class _Objective:
    """Negative rate on the power sphere, as a function of packed (B, L)."""

    def __init__(self, K_Z, P, feedback):
        self.kz = K_Z
        self.n = K_Z.shape[0]
        self.budget = self.n * P
        self.feedback = feedback
        n = self.n
        self.b_idx = np.tril_indices(n, -1) if feedback else (np.array([], int), np.array([], int))
        self.l_idx = np.tril_indices(n)
        self.nb = len(self.b_idx[0])
        self.logdet_z = np.linalg.slogdet(K_Z)[1]

    def unpack(self, theta):
        n = self.n
        b = np.zeros((n, n))
        b[self.b_idx] = theta[: self.nb]
        lmat = np.zeros((n, n))
        lmat[self.l_idx] = theta[self.nb :]
        return b, lmat

    def pack(self, b, lmat):
        return np.concatenate([b[self.b_idx], lmat[self.l_idx]])

    def scale(self, b, lmat):
        power = float(np.sum((b @ self.kz) * b) + np.sum(lmat**2))
        return math.sqrt(self.budget / power), power

    def __call__(self, theta):
        b, lmat = self.unpack(theta)
        s, power = self.scale(b, lmat)
        bs, ls = s * b, s * lmat
        n = self.n
        bi = bs + np.eye(n)
        bk = bi @ self.kz
        k_y = bk @ bi.T + ls @ ls.T
        try:
            chol = scipy.linalg.cho_factor(k_y, lower=True)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros_like(theta)
        logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
        rate = 0.5 * (logdet - self.logdet_z) / n
        ky_inv = scipy.linalg.cho_solve(chol, np.eye(n))
        g_b = (ky_inv @ bk) / n
        g_l = (ky_inv @ ls) / n
        # chain rule through the power-sphere scaling
        gx = self.pack(g_b, g_l)
        dot = float(gx @ theta)
        grad_p = self.pack(2.0 * (b @ self.kz), 2.0 * lmat)
        grad = s * gx - 0.5 * s * dot / power * grad_p
        return -rate, -grad


def nblock_lower_bound(model, P, n, opts=None):
    """Best n-block rate found by quasi-Newton ascent with restarts.

    The optimiser works on unnormalised ``(B, L)`` that are rescaled onto
    the power budget before every evaluation, so each iterate uses exactly
    ``n P``.  Restart 0 starts from ``B = 0, L = sqrt(P) I``; the rest from
    seeded random points.  Returns ``(rate, state)``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > MAX_N:
        raise ValueError(f"horizon capped at {MAX_N}")
    if not P > 0:
        raise ValueError("P must be positive")
    opts = opts or NBlockOptions()
    lags = autocov(model, n)
    k_z = scipy.linalg.toeplitz(lags)
    obj = _Objective(k_z, P, opts.feedback and n > 1)
    rng = np.random.default_rng(opts.seed)
    best = None
    for restart in range(max(1, opts.restarts)):
        if restart == 0:
            b0, l0 = np.zeros((n, n)), math.sqrt(P) * np.eye(n)
        else:
            b0 = np.tril(rng.normal(scale=0.3, size=(n, n)), -1)
            l0 = np.tril(rng.normal(scale=0.3, size=(n, n))) + math.sqrt(P) * np.eye(n)
        theta0 = obj.pack(b0, l0)
        res = scipy.optimize.minimize(
            obj,
            theta0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": opts.max_iter, "gtol": opts.gtol, "ftol": 1e-15, "maxcor": 30},
        )
        rate = -float(res.fun)
        if best is None or rate > best[0] + 1e-15:
            best = (rate, res.x, restart)
    b, lmat = obj.unpack(best[1])
    s, _ = obj.scale(b, lmat)
    state = NBlockState(n, s * b, s * lmat, k_z)
    return nblock_rate(state.B, state.L, k_z), state
