"""Closed-form feedback capacity of a first-order ARMA channel."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .certsolve import CertificateSolution, MultiplicityPattern, derive_outer_roots
from .certsolve import verify_certificate
from .quadrature import FrequencyGrid
from .spectra import ArmaModel

__all__ = ["Arma1Solution", "solve_arma1", "arma1_quartic", "arma1_certificate"]

EDGE = 1e-12


@dataclass(frozen=True)
class Arma1Solution:
    x: float
    capacity_nats: float
    branch: str


def arma1_quartic(x, P, alpha, beta):
    """``g(x) = P x^2 (1 + beta x)^2 - (1 - x^2)(1 + alpha x)^2``."""
    return P * x * x * (1 + beta * x) ** 2 - (1 - x * x) * (1 + alpha * x) ** 2


def _quartic_slope(x, P, alpha, beta):
    return (
        2 * P * x * (1 + beta * x) ** 2
        + 2 * P * x * x * beta * (1 + beta * x)
        + 2 * x * (1 + alpha * x) ** 2
        - 2 * alpha * (1 - x * x) * (1 + alpha * x)
    )


def _check(P, alpha, beta):
    if not P > 0:
        raise ValueError("P must be positive")
    if not (abs(alpha) < 1 and abs(beta) < 1):
        raise ValueError("|alpha| and |beta| must be < 1")


def solve_arma1(P, alpha, beta):
    """Unique root of the quartic on the branch interval, and the capacity.

    The root lies in ``(-1, 0)`` when ``alpha >= beta`` and in ``(0, 1)``
    otherwise.  ``g(0) = -1`` and ``g(+-1) = P (1 +- beta)^2 > 0`` so the
    interval always brackets a sign change.
    """
    _check(P, alpha, beta)
    if alpha >= beta:
        lo, hi, branch = -1 + EDGE, 0.0, "alpha_ge_beta"
    else:
        lo, hi, branch = 0.0, 1 - EDGE, "alpha_lt_beta"
    if alpha == beta:
        x = -1 / math.sqrt(1 + P)
        return Arma1Solution(x, -math.log(abs(x)), branch)
    g = lambda t: arma1_quartic(t, P, alpha, beta)  # noqa: E731
    glo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0:
            lo = hi = mid
            break
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if hi - lo <= 1e-16:
            break
    x = 0.5 * (lo + hi)
    lo_b, hi_b = (-1.0, 0.0) if branch == "alpha_ge_beta" else (0.0, 1.0)
    for _ in range(5):
        slope = _quartic_slope(x, P, alpha, beta)
        if slope == 0:
            break
        step = g(x) / slope
        cand = x - step
        if not (lo_b < cand < hi_b) or abs(g(cand)) > abs(g(x)):
            break
        x = cand
        if abs(step) <= 1e-14 * max(1.0, abs(x)):
            break
    return Arma1Solution(x, -math.log(abs(x)), branch)


def _closed_form_certificate(P, alpha, beta):
    model = ArmaModel((alpha,), (beta,))
    sol = solve_arma1(P, alpha, beta)
    x = sol.x
    h = (1 + alpha * x) / (1 + beta * x)
    y11 = -h * (1 - x * x) / x
    base = CertificateSolution(MultiplicityPattern((1,)), (complex(x),), ((complex(y11),),), 0.0, ())
    roots = derive_outer_roots(base, model)
    r = roots[0].real
    h11 = (-x) * (1 - x * x) * (1 + beta * x) / (1 - r * x)
    return model, sol, CertificateSolution(base.pattern, base.x, base.y, h11 / y11, roots)


def arma1_certificate(P, alpha, beta, grid=None):
    """Certificate built from the closed form, with its verification report.

    ``y_11`` has modulus ``sqrt(P (1 - x^2))`` and the sign that makes ``x``
    a zero of ``f``; both defining equations are reported as residuals.
    """
    _check(P, alpha, beta)
    grid = grid or FrequencyGrid(4096)
    model, sol, cert = _closed_form_certificate(P, alpha, beta)
    x = sol.x
    y11 = cert.y[0][0].real
    report = verify_certificate(model, P, cert, grid)
    report["power_equation"] = abs(y11 * y11 / (1 - x * x) - P)
    report["root_equation"] = abs(y11 * x / (1 - x * x) + (1 + alpha * x) / (1 + beta * x))
    report["capacity"] = sol.capacity_nats
    report["certificate"] = cert
    return report
