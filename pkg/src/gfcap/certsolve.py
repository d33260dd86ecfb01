"""Certificate systems for the optimal feedback filter of an ARMA(k) channel.

An optimal filter has the pole/residue form ``C(z) = sum_ij y_ij z^j /
(1 - x_i z)^j`` where each ``x_i`` is a zero of multiplicity ``m_i`` of
``f = C + H_Z`` inside the disk.  The unknowns ``(x, y)`` satisfy three
groups of equations:

* the power equation ``int |C|^2 = P``;
* ``f`` and its first ``m_i - 1`` derivatives vanish at ``x_i``;
* orthogonality: ``g_ij = lam * y_ij`` for one common real ``lam``, where
  ``g_ij`` is the coefficient of ``(z - x_i)^(-j)`` in the Laurent expansion
  of ``1 / f`` at ``x_i``.

The capacity is then ``-sum m_i log |x_i|``.  With every ``m_i = 1`` the
real system is square; each extra multiplicity adds one real equation
more than it adds unknowns, so those systems are solved in the
least-squares sense and only accepted when the residual actually vanishes.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .jets import Jet, deflate
from .quadrature import (
    FrequencyGrid,
    entropy_rate,
    filter_power_grid,
    pattern_to_filter,
    power_jet,
)
from .spectra import ArmaModel, noise_transfer_eval, poly_from_roots, poly_roots

__all__ = [
    "MultiplicityPattern",
    "CertificateSolution",
    "NewtonResult",
    "ResidualMap",
    "enumerate_patterns",
    "enumerate_layouts",
    "f_eval",
    "derive_outer_roots",
    "h_ij_eval",
    "build_residual",
    "newton_solve",
    "multi_start_solve",
    "certificate_from_roots",
    "verify_certificate",
    "capacity_of",
]

DEFLATION_TOL = 1e-8
DEDUP_TOL = 1e-6
RADII = (0.2, 0.5, 0.8)
# near pole-zero cancellation the optimal zeros crowd the unit circle
EDGE_RADIUS = 0.95
ANGLES = (np.pi / 4, np.pi / 2, 3 * np.pi / 4)


@dataclass(frozen=True)
class MultiplicityPattern:
    """Multiplicities ``m_1 >= m_2 >= ...`` of the in-disk zeros."""

    m: tuple

    def __post_init__(self):
        m = tuple(sorted((int(v) for v in self.m), reverse=True))
        if not m or any(v < 1 for v in m):
            raise ValueError("multiplicities must be positive")
        object.__setattr__(self, "m", m)

    @property
    def l(self):  # noqa: E743
        return len(self.m)

    @property
    def total(self):
        return sum(self.m)

    def __str__(self):
        return "{" + ",".join(str(v) for v in self.m) + "}"


@dataclass(frozen=True)
class CertificateSolution:
    """A candidate optimum in pole/residue form plus its diagnostics.

    ``x`` lists every distinct zero (conjugate partners included) and
    ``y[i]`` the coefficients ``y_i1..y_im_i`` belonging to ``x[i]``.
    """

    pattern: MultiplicityPattern
    x: tuple
    y: tuple
    lam: float
    outer_roots: tuple
    residual_report: dict = field(default_factory=dict, compare=False)
    essinf_output: float | None = None

    @property
    def multiplicities(self):
        return tuple(len(b) for b in self.y)

    @property
    def capacity(self):
        return capacity_of(self)

    def to_filter(self):
        return pattern_to_filter(self.x, self.y)


@dataclass
class NewtonResult:
    success: bool
    x: np.ndarray
    message: str
    iterations: int
    residual: float


def enumerate_patterns(k):
    """All multisets of positive integers with sum at most ``k``."""
    if k < 1:
        raise ValueError("k must be positive")
    out = []

    def parts(n, cap):
        if n == 0:
            yield ()
            return
        for first in range(min(n, cap), 0, -1):
            for rest in parts(n - first, first):
                yield (first,) + rest

    for total in range(1, k + 1):
        out.extend(MultiplicityPattern(p) for p in parts(total, total))
    return out


def enumerate_layouts(pattern):
    """Real/conjugate-pair structures compatible with a pattern.

    A layout is a tuple of ``(kind, m)`` blocks with ``kind`` in
    ``{"real", "pair"}``; a pair block stands for two conjugate zeros of
    equal multiplicity.  Real blocks come first.
    """
    counts = {}
    for v in pattern.m:
        counts[v] = counts.get(v, 0) + 1
    values = sorted(counts, reverse=True)
    choices = [range(counts[v] // 2 + 1) for v in values]
    layouts = []
    for npairs in itertools.product(*choices):
        reals = []
        pairs = []
        for v, p in zip(values, npairs):
            reals += [("real", v)] * (counts[v] - 2 * p)
            pairs += [("pair", v)] * p
        layouts.append(tuple(reals + pairs))
    return layouts


# --------------------------------------------------------------------------
# jet-level building blocks shared by the solver and the verifier


def _lin(a, b, nvar):
    """Exact polynomial ``a + b z`` from scalars or scalar jets."""
    rows = [v if isinstance(v, Jet) else Jet.constant(v, nvar) for v in (a, b)]
    return Jet.from_scalars(rows)


@functools.lru_cache(maxsize=256)
def _model_polys_cached(p_coeffs, q_coeffs, nvar):
    return Jet.polynomial(p_coeffs, nvar), Jet.polynomial(q_coeffs, nvar)


def _model_polys(model, nvar):
    return _model_polys_cached(tuple(model.p_coeffs), tuple(model.q_coeffs), nvar)


def _f_taylor(xs, ys, model, at, order):
    """Taylor coefficients ``0..order-1`` of ``f = C + H_Z`` at the jet ``at``."""
    nvar = at.nvar
    z = Jet.point(at, order)
    pp, qq = _model_polys(model, nvar)
    f = pp.compose(z) / qq.compose(z)
    for xs_, block in zip(xs, ys):
        base = z / (1.0 - xs_ * z)
        term = base
        for j, yj in enumerate(block, start=1):
            if j > 1:
                term = term * base
            f = f + yj * term
    return [f.coef(d) for d in range(order)]


def _factors(xs, ms, nvar):
    """``(1 - x_s z)^m_s`` as exact polynomials."""
    return [_lin(1.0, -x, nvar) ** m for x, m in zip(xs, ms)]


def _product(polys, nvar):
    out = Jet.constant(1.0, nvar)
    for p in polys:
        out = out * p
    return out


def _numerator(xs, ys, model, nvar, factors=None):
    """Exact numerator ``N = N_C Q + P D`` of ``f`` with ``N(0) = 1``."""
    ms = [len(b) for b in ys]
    pp, qq = _model_polys(model, nvar)
    factors = factors or _factors(xs, ms, nvar)
    zpoly = Jet.polynomial([0.0, 1.0], nvar)
    nc = Jet.constant(0.0, nvar)
    for i, (xi, block) in enumerate(zip(xs, ys)):
        rest = _product([f for s, f in enumerate(factors) if s != i], nvar)
        own = _lin(1.0, -xi, nvar)
        inner = block[-1]
        # Horner in z and (1 - x_i z) keeps the number of products small
        for j in range(ms[i] - 1, 0, -1):
            inner = inner * zpoly + block[j - 1] * own ** (ms[i] - j)
        nc = nc + inner * zpoly * rest
    return nc * qq + pp * _product(factors, nvar)


def _outer_poly(xs, ys, model, nvar, factors=None):
    """Deflate the in-disk zeros out of ``N``; return ``(R, remainders)``."""
    quotient = _numerator(xs, ys, model, nvar, factors)
    remainders = []
    scale = Jet.constant(1.0, nvar)
    for xs_, block in zip(xs, ys):
        for _ in block:
            quotient, rem = deflate(quotient, xs_)
            remainders.append(rem)
            scale = scale * (-xs_)
    return quotient * scale, remainders


def _g_block(xs, ms, model, rpoly, i, factors=None):
    """Laurent coefficients ``g_i1..g_im`` of ``1 / f`` at ``x_i``."""
    nvar = xs[i].nvar
    m = ms[i]
    z = Jet.point(xs[i], m)
    _, qq = _model_polys(model, nvar)
    factors = factors or _factors(xs, ms, nvar)
    dpoly = _product(factors, nvar)
    c = Jet.constant(1.0, nvar)
    for xs_, ms_ in zip(xs, ms):
        c = c * (-xs_) ** ms_
    series = dpoly.compose(z) * qq.compose(z) * c / rpoly.compose(z)
    for s, (xs_, ms_) in enumerate(zip(xs, ms)):
        if s != i:
            series = series / ((z - xs_) ** ms_)
    return [series.coef(m - j) for j in range(1, m + 1)]


def _reciprocal_poly(roots, nvar, k):
    coeffs = np.zeros(k + 1, dtype=complex)
    poly = poly_from_roots(list(roots), "reciprocal")
    coeffs[: len(poly)] = poly
    return Jet.polynomial(coeffs, nvar)


# --------------------------------------------------------------------------
# numeric helpers on candidates


def _const_jets(candidate):
    xs = [Jet.constant(v, 0) for v in candidate.x]
    ys = [[Jet.constant(v, 0) for v in block] for block in candidate.y]
    return xs, ys


def f_eval(candidate, model, z):
    """``f(z) = sum_ij y_ij z^j / (1 - x_i z)^j + P(z) / Q(z)``."""
    z = complex(z)
    for xi in candidate.x:
        if abs(1 - xi * z) < 1e-14:
            raise ZeroDivisionError("z is a pole of the filter")
    if abs(np.polynomial.polynomial.polyval(z, model.q_coeffs)) < 1e-14:
        raise ZeroDivisionError("z is a pole of the noise transfer function")
    total = complex(model.transfer(z))
    for xi, block in zip(candidate.x, candidate.y):
        base = z / (1 - complex(xi) * z)
        for j, yj in enumerate(block, start=1):
            total += complex(yj) * base**j
    return total


def _roots_from_rpoly(rcoeffs):
    rc = np.asarray(rcoeffs, dtype=complex)
    k = len(rc) - 1
    if k == 0:
        return np.zeros(0, dtype=complex)
    return poly_roots(rc[::-1])


def derive_outer_roots(candidate, model):
    """Reciprocals ``r_t`` of the zeros of ``f`` that are not the ``x_i``.

    Raises
    ------
    ValueError
        ``"x_i not a root"`` if a deflation remainder exceeds 1e-8,
        ``"infeasible pattern"`` if some ``|r_t| >= 1``.
    """
    xs, ys = _const_jets(candidate)
    rpoly, rems = _outer_poly(xs, ys, model, 0)
    worst = max(abs(r.value) for r in rems)
    if worst > DEFLATION_TOL:
        raise ValueError(f"x_i not a root (deflation remainder {worst:.3g})")
    roots = _roots_from_rpoly(rpoly.c[:, 0])
    roots = np.concatenate([roots, np.zeros(model.k - len(roots))])
    if np.any(np.abs(roots) >= 1):
        raise ValueError("infeasible pattern: an outer zero lies inside the disk")
    return tuple(complex(r) for r in _sorted_complex(roots))


def _sorted_complex(values):
    return sorted((complex(v) for v in values), key=lambda w: (round(w.real, 12), w.imag))


def h_ij_eval(candidate, model, i, j):
    """``h_ij(x_i)``, the quantity that must equal ``lam * y_ij / (j-1)!``.

    Indices are 1-based as in the usual statement of the conditions.
    """
    xs, ys = _const_jets(candidate)
    ms = [len(b) for b in ys]
    if not 1 <= i <= len(xs) or not 1 <= j <= ms[i - 1]:
        raise IndexError("block index out of range")
    for s in range(len(xs)):
        if s != i - 1 and abs(candidate.x[s] - candidate.x[i - 1]) < 1e-12:
            raise ZeroDivisionError("zeros are not distinct")
    rpoly = _reciprocal_poly(candidate.outer_roots, 0, model.k)
    g = _g_block(xs, ms, model, rpoly, i - 1)
    return complex(g[j - 1].value) / math.factorial(j - 1)


def capacity_of(candidate):
    """``-sum m_i log |x_i|`` in nats."""
    xs = [complex(v) for v in candidate.x]
    if any(abs(v) >= 1 for v in xs):
        raise ValueError("zero on or outside the unit circle")
    if any(v == 0 for v in xs):
        raise ValueError("zero at the origin gives unbounded capacity")
    return float(-sum(len(b) * np.log(abs(v)) for v, b in zip(xs, candidate.y)))


# --------------------------------------------------------------------------
# the real-structured residual map


class ResidualMap:
    """Real residual vector of the certificate system for one layout.

    Unknowns per block: ``[x, y_1..y_m]`` for a real block and
    ``[Re x, Im x, Re y_1, Im y_1, ...]`` for a conjugate pair.
    """

    def __init__(self, model, P, layout):
        self.model = model
        self.P = float(P)
        self.layout = tuple(layout)
        total = sum(m * (2 if kind == "pair" else 1) for kind, m in self.layout)
        if total > model.k:
            raise ValueError("pattern multiplicities exceed the model order")
        self.offsets = []
        off = 0
        for kind, m in self.layout:
            self.offsets.append(off)
            off += (1 + m) * (2 if kind == "pair" else 1)
        self.size = off
        widths = [m * (2 if kind == "pair" else 1) for kind, m in self.layout]
        self.n_equations = 1 + 2 * sum(widths) - 1

    @property
    def pattern(self):
        ms = []
        for kind, m in self.layout:
            ms += [m] * (2 if kind == "pair" else 1)
        return MultiplicityPattern(tuple(ms))

    # packing ------------------------------------------------------------
    def unpack(self, v):
        """Full ``(x, y)`` lists (conjugate partners appended per pair)."""
        xs, ys = [], []
        for (kind, m), o in zip(self.layout, self.offsets):
            if kind == "real":
                xs.append(complex(v[o]))
                ys.append(tuple(complex(v[o + 1 + j]) for j in range(m)))
            else:
                x = complex(v[o], v[o + 1])
                yb = tuple(complex(v[o + 2 + 2 * j], v[o + 3 + 2 * j]) for j in range(m))
                xs += [x, x.conjugate()]
                ys += [yb, tuple(w.conjugate() for w in yb)]
        return xs, ys

    def pack(self, x_reps, y_reps):
        """Inverse of :meth:`unpack` on block representatives."""
        v = np.zeros(self.size)
        for (kind, m), o, x, yb in zip(self.layout, self.offsets, x_reps, y_reps):
            if kind == "real":
                v[o] = np.real(x)
                v[o + 1 : o + 1 + m] = np.real(yb)
            else:
                v[o], v[o + 1] = np.real(x), np.imag(x)
                for j, w in enumerate(yb):
                    v[o + 2 + 2 * j] = np.real(w)
                    v[o + 3 + 2 * j] = np.imag(w)
        return v

    def _jets(self, v, nvar):
        def var(idx):
            if nvar:
                return Jet.variable(float(v[idx]), idx, nvar)
            return Jet.constant(float(v[idx]), 0)

        xs, ys, reps = [], [], []
        for (kind, m), o in zip(self.layout, self.offsets):
            if kind == "real":
                reps.append(len(xs))
                xs.append(var(o))
                ys.append([var(o + 1 + j) for j in range(m)])
            else:
                x = var(o) + 1j * var(o + 1)
                yb = [var(o + 2 + 2 * j) + 1j * var(o + 3 + 2 * j) for j in range(m)]
                reps.append(len(xs))
                xs += [x, x.conj()]
                ys += [yb, [w.conj() for w in yb]]
        return xs, ys, reps

    def _evaluate(self, v, nvar, parts=("power", "root", "orth")):
        xs, ys, reps = self._jets(v, nvar)
        ms = [len(b) for b in ys]
        rows = []

        def emit(jet, kind):
            rows.append(("re", jet))
            if kind == "pair":
                rows.append(("im", jet))

        if "power" in parts:
            rows.append(("re", power_jet(xs, ys) - self.P))
        if "root" in parts:
            for (kind, m), r in zip(self.layout, reps):
                for coef in _f_taylor(xs, ys, self.model, xs[r], m):
                    emit(coef, kind)
        if "orth" in parts:
            factors = _factors(xs, ms, nvar)
            rpoly, _ = _outer_poly(xs, ys, self.model, nvar, factors)
            first = reps[0]
            gs = {r: _g_block(xs, ms, self.model, rpoly, r, factors) for r in reps}
            g11, y11 = gs[first][0], ys[first][0]
            if self.layout[0][0] == "pair":
                rows.append(("im", g11 * y11.conj()))
            for (kind, m), r in zip(self.layout, reps):
                for j in range(m):
                    if r == first and j == 0:
                        continue
                    emit(ys[r][j] * g11 - y11 * gs[r][j], kind)
        return rows

    @staticmethod
    def _to_real(rows, with_grad):
        vals = np.array([j.value.real if p == "re" else j.value.imag for p, j in rows])
        if not with_grad:
            return vals
        grads = np.array([j.grad.real if p == "re" else j.grad.imag for p, j in rows])
        return vals, grads

    def __call__(self, v):
        return self._to_real(self._evaluate(np.asarray(v, float), 0), False)

    def jacobian(self, v):
        """Residual vector and its exact Jacobian."""
        v = np.asarray(v, dtype=float)
        return self._to_real(self._evaluate(v, self.size), True)

    def fit_coefficients(self, x_reps):
        """Coefficients ``y`` making every root condition hold for fixed ``x``.

        The root conditions are linear in ``y``, so one Jacobian solve does it.
        """
        v = self.pack(x_reps, [np.zeros(m) for _, m in self.layout])
        vals, jac = self._to_real(self._evaluate(v, self.size, parts=("root",)), True)
        ycols = [i for i in range(self.size) if not self._is_x_column(i)]
        a = jac[:, ycols]
        sol = np.linalg.solve(a, -vals)
        v[ycols] = sol
        return v

    def _is_x_column(self, idx):
        for (kind, m), o in zip(self.layout, self.offsets):
            width = 1 if kind == "real" else 2
            if o <= idx < o + width:
                return True
        return False

    def zero_moduli(self, v):
        out = []
        for (kind, _), o in zip(self.layout, self.offsets):
            out.append(abs(v[o]) if kind == "real" else math.hypot(v[o], v[o + 1]))
        return out


def build_residual(model, P, pattern, layout=None):
    """Residual map of the certificate system for ``pattern``.

    ``layout`` picks the real/conjugate structure; the default treats every
    zero as real.
    """
    if isinstance(pattern, (list, tuple)):
        pattern = MultiplicityPattern(tuple(pattern))
    if pattern.total > model.k:
        raise ValueError("pattern multiplicities exceed the model order")
    if layout is None:
        layout = tuple(("real", m) for m in pattern.m)
    return ResidualMap(model, P, layout)


def newton_solve(F, start, tol=1e-12, max_iter=100):
    """Damped Gauss-Newton on ``F``; success iff ``max|F| <= tol``.

    ``F`` must expose ``jacobian(v) -> (F(v), J(v))``.  Rectangular systems
    are handled by least squares.
    """
    v = np.array(start, dtype=float)
    fv, jac = F.jacobian(v)
    norm = float(np.max(np.abs(fv)))
    stall = 0
    for it in range(1, max_iter + 1):
        if norm <= tol:
            return NewtonResult(True, v, "converged", it - 1, norm)
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > 1e14:
            return NewtonResult(False, v, "singular", it, norm)
        step = np.linalg.lstsq(jac, -fv, rcond=None)[0]
        ssq = float(fv @ fv)
        t = 1.0
        accepted = False
        for _ in range(31):
            trial = v + t * step
            if _inside(F, trial):
                ft = F(trial)
                if np.all(np.isfinite(ft)) and float(ft @ ft) < ssq:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            return NewtonResult(False, v, "no convergence", it, norm)
        prev = norm
        v = trial
        fv, jac = F.jacobian(v)
        norm = float(np.max(np.abs(fv)))
        # slow linear progress means a singular or least-squares limit
        slow = norm > 0.999 * prev or (t == 1.0 and norm > 0.5 * prev)
        stall = stall + 1 if slow else 0
        if stall >= 6:
            return NewtonResult(False, v, "no convergence", it, norm)
    if norm <= tol:
        return NewtonResult(True, v, "converged", max_iter, norm)
    return NewtonResult(False, v, "no convergence", max_iter, norm)


def _inside(F, v):
    moduli = getattr(F, "zero_moduli", None)
    if moduli is None:
        return True
    return all(r < 1.0 for r in moduli(v))


# --------------------------------------------------------------------------
# candidates, verification and search


def certificate_from_roots(model, P, x, y):
    """Assemble a candidate from ``(x, y)``: outer roots and ``lam`` included.

    Raises ``ValueError`` when ``x`` are not zeros of ``f`` or the outer
    zeros are infeasible.
    """
    ys = tuple(tuple(complex(w) for w in b) for b in y)
    xs = tuple(complex(v) for v in x)
    pattern = MultiplicityPattern(tuple(len(b) for b in ys))
    base = CertificateSolution(pattern, xs, ys, 0.0, ())
    roots = derive_outer_roots(base, model)
    base = replace(base, outer_roots=roots)
    lam = h_ij_eval(base, model, 1, 1) / ys[0][0]
    return replace(base, lam=float(lam.real))


def _conj_closure_error(values):
    vals = [complex(v) for v in values]
    worst = 0.0
    for v in vals:
        worst = max(worst, min(abs(w - v.conjugate()) for w in vals))
    return worst


def _root_residual(candidate, model):
    xs, ys = _const_jets(candidate)
    worst = 0.0
    for x, b in zip(xs, ys):
        for coef in _f_taylor(xs, ys, model, x, len(b)):
            worst = max(worst, abs(coef.value))
    return worst


def verify_certificate(model, P, candidate, grid=None, tol=1e-8):
    """Check every optimality condition; return a report dict.

    ``report["pass"]`` is true iff all residuals are at most ``tol`` and the
    output-spectrum inequality ``lam >= max 1/S_Y`` holds on the grid.
    """
    grid = grid or FrequencyGrid(4096)
    rep = {"tol": tol}
    xs = [complex(v) for v in candidate.x]
    ms = [len(b) for b in candidate.y]
    checks = {}

    in_disk = all(abs(v) < 1 for v in xs) and all(abs(r) < 1 for r in candidate.outer_roots)
    distinct = all(abs(a - b) > 1e-8 for a, b in itertools.combinations(xs, 2))
    checks["feasible"] = in_disk and distinct and len(candidate.outer_roots) == model.k
    stored_r = _reciprocal_poly(candidate.outer_roots, 0, model.k).c[:, 0]
    # roots of clustered outer zeros are ill-conditioned; their polynomial is not
    closure = max(_conj_closure_error(xs), float(np.max(np.abs(stored_r.imag))))
    for i, a in enumerate(xs):
        j = int(np.argmin([abs(b - a.conjugate()) for b in xs]))
        if ms[i] != ms[j]:
            closure = max(closure, 1.0)
        else:
            closure = max(
                closure,
                max(abs(u - w.conjugate()) for u, w in zip(candidate.y[i], candidate.y[j])),
            )
    rep["conj_closure"] = closure
    if not checks["feasible"]:
        rep["pass"] = False
        rep["checks"] = checks
        return rep

    from .quadrature import filter_power_residue

    power = filter_power_residue(xs, candidate.y)
    rep["power"] = power
    rep["power_residual"] = abs(power - P)
    rep["root_residual"] = _root_residual(candidate, model)

    try:
        derive_outer_roots(candidate, model)
        xs_j, ys_j = _const_jets(candidate)
        fresh = _outer_poly(xs_j, ys_j, model, 0)[0].c[:, 0]
        rep["outer_root_residual"] = float(np.max(np.abs(fresh - stored_r)))
    except ValueError as exc:
        rep["outer_root_residual"] = float("inf")
        rep["outer_root_error"] = str(exc)

    orth = 0.0
    for i in range(1, len(xs) + 1):
        for j in range(1, ms[i - 1] + 1):
            g = h_ij_eval(candidate, model, i, j) * math.factorial(j - 1)
            orth = max(orth, abs(g - candidate.lam * candidate.y[i - 1][j - 1]))
    rep["orthogonality_residual"] = orth
    rep["lambda"] = candidate.lam

    theta = grid.thetas
    z = np.exp(1j * theta)
    log_scale = -2.0 * sum(m * np.log(abs(v)) for v, m in zip(xs, ms))
    rz = np.ones_like(z)
    for r in candidate.outer_roots:
        rz = rz * (1 - r * z)
    qz = np.polynomial.polynomial.polyval(z, model.q_coeffs)
    s_y = np.exp(log_scale) * np.abs(rz / qz) ** 2
    direct = np.abs(candidate_filter_eval(candidate, theta) + noise_transfer_eval(model, theta)) ** 2
    rep["output_spectrum_mismatch"] = float(np.max(np.abs(s_y - direct) / direct))
    rep["essinf_output"] = float(np.min(s_y))
    max_inv = float(np.max(1.0 / s_y))
    rep["output_margin"] = float(np.min(candidate.lam * s_y) - 1.0)
    checks["output_spectrum"] = candidate.lam >= max_inv - tol
    cap = capacity_of(candidate)
    rep["capacity"] = cap
    rep["jensen_residual"] = abs(entropy_rate(s_y) - cap)
    try:
        rep["grid_power_residual"] = abs(filter_power_grid(candidate.to_filter(), grid) - P)
    except ValueError:
        # no real filter exists without conjugate closure
        rep["grid_power_residual"] = float("inf")

    for key in (
        "power_residual",
        "root_residual",
        "outer_root_residual",
        "orthogonality_residual",
        "conj_closure",
        "output_spectrum_mismatch",
        "jensen_residual",
    ):
        checks[key] = bool(rep[key] <= tol)
    checks["lambda_positive"] = candidate.lam > 0
    rep["checks"] = checks
    rep["max_residual"] = max(
        rep[k]
        for k in (
            "power_residual",
            "root_residual",
            "outer_root_residual",
            "orthogonality_residual",
            "conj_closure",
            "jensen_residual",
        )
    )
    rep["pass"] = all(checks.values())
    return rep


def candidate_filter_eval(candidate, theta):
    z = np.exp(1j * np.asarray(theta, dtype=float))
    out = np.zeros_like(z)
    for xi, block in zip(candidate.x, candidate.y):
        base = z / (1 - xi * z)
        term = np.ones_like(z)
        for yj in block:
            term = term * base
            out = out + yj * term
    return out


def _multiset_distance(a, b):
    a = [complex(v) for v in a]
    b = [complex(v) for v in b]
    if len(a) != len(b):
        return float("inf")
    worst = 0.0
    remaining = list(b)
    for v in a:
        j = int(np.argmin([abs(w - v) for w in remaining]))
        worst = max(worst, abs(remaining.pop(j) - v))
    return worst


def _block_options(kind):
    radii = RADII + (EDGE_RADIUS,)
    if kind == "real":
        return [s * r for r in radii for s in (1.0, -1.0)]
    return [r * np.exp(1j * a) for r in radii for a in ANGLES]


def _start_points(layout, rng, jitter):
    """Deterministic lattice of block representatives for one layout."""
    groups = []
    for key, members in itertools.groupby(enumerate(layout), key=lambda e: e[1]):
        members = list(members)
        opts = _block_options(key[0])
        groups.append(list(itertools.combinations(opts, len(members))))
    starts = []
    for combo in itertools.product(*groups):
        xs = [x for group in combo for x in group]
        if jitter:
            xs = [x * (1 + jitter * rng.uniform(-1, 1)) for x in xs]
        starts.append(xs)
    return starts


def multi_start_solve(
    model, P, budget=24, seed=0, grid=None, extra_starts=(), tol=1e-12, exhaustive=True
):
    """Search every pattern for verified certificates.

    Each layout's start lattice is screened by the residual norm after
    fitting ``y`` to the root conditions; Newton then runs from the
    ``budget`` best starts of every layout, best scores first.
    ``extra_starts`` are ``(x, y)`` pairs tried before anything else.  A
    passing certificate is optimal, so ``exhaustive=False`` stops at the
    first survivor.  Returns survivors sorted by capacity, highest first.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    grid = grid or FrequencyGrid(4096)
    rng = np.random.default_rng(seed)
    jitter = 0.02 if seed else 0.0
    maps = []
    queue = []
    for pattern in enumerate_patterns(model.k):
        for layout in enumerate_layouts(pattern):
            fmap = ResidualMap(model, P, layout)
            li = len(maps)
            maps.append(fmap)
            for x, y in extra_starts:
                v = _vector_from_candidate(fmap, x, y)
                if v is not None:
                    queue.append((-1.0, li, -1, v))
            screened = []
            for idx, xr in enumerate(_start_points(layout, rng, jitter)):
                try:
                    with np.errstate(all="ignore"):
                        v = fmap.fit_coefficients(xr)
                        score = float(np.linalg.norm(fmap(v)))
                except (np.linalg.LinAlgError, ZeroDivisionError, FloatingPointError):
                    continue
                if np.isfinite(score):
                    screened.append((score, li, idx, v))
            screened.sort(key=lambda e: (e[0], e[2]))
            queue.extend(screened[:budget])
    queue.sort(key=lambda e: (e[0], e[1], e[2]))
    found = []
    for _, li, _, v0 in queue:
        cand = _solve_one(maps[li], model, P, v0, grid, tol)
        if cand is not None and not _is_duplicate(cand, found):
            found.append(cand)
            if not exhaustive:
                break
    found.sort(key=lambda c: -c.residual_report["capacity"])
    return found


def _vector_from_candidate(fmap, x, y):
    """Map a full ``(x, y)`` candidate onto ``fmap``'s layout if compatible."""
    reps_x, reps_y, used = [], [], set()
    x = [complex(v) for v in x]
    for kind, m in fmap.layout:
        pick = None
        for i, v in enumerate(x):
            if i in used or len(y[i]) != m:
                continue
            is_real = abs(v.imag) < 1e-9
            if (kind == "real") == is_real and (kind == "real" or v.imag > 0):
                pick = i
                break
        if pick is None:
            return None
        used.add(pick)
        if kind == "pair":
            used.add(int(np.argmin([abs(w - x[pick].conjugate()) for w in x])))
        reps_x.append(x[pick])
        reps_y.append(np.asarray(y[pick], dtype=complex))
    if len(used) != len(x):
        return None
    return fmap.pack(reps_x, reps_y)


def _solve_one(fmap, model, P, v0, grid, tol):
    with np.errstate(all="ignore"):
        try:
            res = newton_solve(fmap, v0, tol=tol)
        except (np.linalg.LinAlgError, ZeroDivisionError, ValueError, FloatingPointError):
            return None
    if not res.success:
        return None
    xs, ys = fmap.unpack(res.x)
    if any(abs(v) >= 1 for v in xs):
        return None
    try:
        cand = certificate_from_roots(model, P, xs, ys)
    except (ValueError, ArithmeticError, ZeroDivisionError):
        return None
    report = verify_certificate(model, P, cand, grid)
    if not report["pass"]:
        return None
    return replace(cand, residual_report=report, essinf_output=report["essinf_output"])


def _is_duplicate(cand, found):
    for other in found:
        if other.multiplicities and sorted(other.multiplicities) != sorted(cand.multiplicities):
            continue
        if _multiset_distance(cand.x, other.x) < DEDUP_TOL:
            return True
    return False


def best_certificate(model, P, **kwargs):
    """Highest-capacity verified certificate, or ``None``."""
    found = multi_start_solve(model, P, **kwargs)
    return found[0] if found else None

