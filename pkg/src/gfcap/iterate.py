"""Recursive lower bounds on the feedback capacity.

Each outer step minimises ``mean(S_prev / |C + H_Z|^2)`` over strictly
causal rational filters of order ``k`` with power ``P``.  Since the ratio
mean dominates ``exp(mean log(S_prev / S))``, every accepted step raises the
entropy rate ``1/2 mean log |C + H_Z|^2``, which is a valid lower bound on
the capacity.

Filters are parametrised by real coefficients: ``D(z) = 1 + sum d_n z^n``
and a numerator direction ``u``; the numerator actually used is ``u``
rescaled to exact power ``P``.  The ratio objective is infinite whenever
``C + H_Z`` vanishes on the circle, so the number of its zeros inside the
disk never changes during descent.  :func:`run` therefore starts once for
every arrangement of inside zeros and keeps the best.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .quadrature import FrequencyGrid, entropy_rate, filter_power_exact, fourier_coeffs
from .spectra import UnifiedFilter, filter_eval, noise_transfer_eval

__all__ = [
    "IterateOptions",
    "IterationTrace",
    "init_filter",
    "zero_configurations",
    "ratio_objective",
    "local_minimize",
    "run",
    "kkt_residual",
]

POLE_CLAMP = 0.999
# keeps trapezoid aliasing (about radius^N) far below the stopping tolerances
ALIAS_DECAY = 30.0
DEGENERATE = 1e-14


@dataclass(frozen=True)
class IterateOptions:
    grid_n: int = 4096
    max_outer: int = 200
    eps_ratio: float = 1e-8
    eps_entropy: float = 1e-10
    max_inner: int = 500
    grad_tol: float = 1e-9
    armijo: float = 1e-4
    max_halvings: int = 40
    warmup: int = 3
    keep: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("eps_ratio", "eps_entropy", "grad_tol", "armijo"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")

    @property
    def grid(self):
        return FrequencyGrid(self.grid_n)


@dataclass
class IterationTrace:
    """Per outer step: entropy rate, ratio value, power and parameters."""

    entropy: list = field(default_factory=list)
    ratio: list = field(default_factory=list)
    power: list = field(default_factory=list)
    params: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    configuration: tuple = ()

    def record(self, entropy, ratio, power, filt):
        self.entropy.append(float(entropy))
        self.ratio.append(float(ratio))
        self.power.append(float(power))
        self.params.append((filt.poles, filt.numer))

    def __len__(self):
        return len(self.entropy)

    def to_csv(self, path_or_file):
        """Write ``iter,entropy_nats,ratio,power`` rows."""
        own = isinstance(path_or_file, str)
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "entropy_nats", "ratio", "power"])
            for i, (e, r, p) in enumerate(zip(self.entropy, self.ratio, self.power)):
                w.writerow([i, repr(e), repr(r), repr(p)])
        finally:
            if own:
                fh.close()


# --------------------------------------------------------------------------
# parametrisation helpers


def pole_radius(n_points):
    """Largest pole modulus a grid of ``n_points`` integrates accurately."""
    return min(POLE_CLAMP, 1.0 - ALIAS_DECAY / n_points)


def _clamp_denominator(d, radius=POLE_CLAMP):
    """Radially clamp the poles of ``D`` to modulus at most ``radius``."""
    d = np.asarray(d, dtype=float)
    if not np.any(d):
        return d.copy()
    poles = np.roots(np.concatenate([[1.0], d]))
    mod = np.abs(poles)
    if np.all(mod <= radius):
        return d.copy()
    poles = np.where(mod > radius, poles * (radius / np.maximum(mod, 1e-300)), poles)
    return np.real(np.poly(poles))[1:]


def _filter_from(d, numer):
    return UnifiedFilter.from_coefficients(np.concatenate([[1.0], d]), numer)


def _companion(d):
    k = len(d)
    a = np.zeros((k, k))
    a[0, :] = -np.asarray(d)
    if k > 1:
        a[1:, :-1] = np.eye(k - 1)
    return a


def _power_and_grad(d, h):
    """Exact power of ``z h(z) / D(z)`` and its gradient in ``(d, h)``."""
    k = len(d)
    a = _companion(d)
    b = np.zeros(k)
    b[0] = 1.0
    w = scipy.linalg.solve_discrete_lyapunov(a, np.outer(b, b))
    m = scipy.linalg.solve_discrete_lyapunov(a.T, np.outer(h, h))
    power = float(h @ w @ h)
    d_a = 2.0 * m @ a @ w
    return power, -d_a[0, :], 2.0 * w @ h


class _Problem:
    """Grid quantities shared by every evaluation for one model.

    Every integrand here is even in theta (all coefficients are real), so
    only the half grid ``theta in [-pi, 0]`` is used, with doubled weights
    away from the two self-symmetric points.
    """

    def __init__(self, model, P, grid):
        self.model = model
        self.P = float(P)
        self.grid = grid
        n = grid.n_points
        idx = np.arange(0, n // 2 + 1)
        w = np.full(len(idx), 2.0)
        w[0] = w[-1] = 1.0
        self.weights = w / n
        self.theta = grid.thetas[idx]
        z = np.exp(1j * self.theta)
        self.k = model.k
        self.zpow = np.vstack([z**n for n in range(1, self.k + 1)])
        self.pz = np.polynomial.polynomial.polyval(z, model.p_coeffs)
        self.qz = np.polynomial.polynomial.polyval(z, model.q_coeffs)
        self.hz = self.pz / self.qz

    def output_spectrum(self, filt):
        """``|C + H_Z|^2`` on the half grid."""
        return np.abs(filter_eval(filt, self.theta) + self.hz) ** 2

    def mean(self, values):
        return float(values @ self.weights)

    def entropy(self, filt):
        s_y = self.output_spectrum(filt)
        if not np.all(s_y > 0):
            raise ValueError("spectrum not positive")
        return 0.5 * self.mean(np.log(s_y))

    def ratio(self, prev, cur):
        den = self.output_spectrum(cur)
        if np.min(den) < DEGENERATE:
            raise FloatingPointError("output spectrum degenerate")
        return self.mean(self.output_spectrum(prev) / den)

    def params_of(self, filt):
        d = np.asarray(filt.denom_coeffs, dtype=float)[1:]
        d = np.concatenate([d, np.zeros(self.k - len(d))])
        u = np.zeros(self.k)
        u[: len(filt.numer)] = np.real(filt.numer)
        return d, u

    def filter_of(self, d, u):
        power = filter_power_exact(_filter_from(d, u))
        s = math.sqrt(self.P / power)
        return _filter_from(d, s * u)

    def objective(self, s_prev, d, u):
        """Ratio mean and its gradient in ``(d, u)``.

        With ``A = D Q`` and ``B = s U Q + P D`` the integrand is
        ``r = S_prev |A|^2 / |B|^2`` and ``d r = 2 r Re(dA / A - dB / B)``.
        """
        power, gd, gu = _power_and_grad(d, u)
        if not power > 0:
            raise FloatingPointError("zero numerator")
        scale = math.sqrt(self.P / power)
        s_grad = -0.5 * scale / power * np.concatenate([gd, gu])
        dz = 1.0 + d @ self.zpow
        uq = (u @ self.zpow) * self.qz
        b = scale * uq + dz * self.pz
        b2 = b.real**2 + b.imag**2
        if np.min(b2 / np.abs(self.qz) ** 2) < DEGENERATE:
            raise FloatingPointError("output spectrum degenerate")
        a = dz * self.qz
        r = s_prev * (a.real**2 + a.imag**2) / b2
        wr = 2.0 * r * self.weights
        inv_b = 1.0 / b
        common = float(np.real(uq * inv_b) @ wr)
        g_d = np.real(self.zpow * (1.0 / dz - self.pz * inv_b)) @ wr
        g_u = -scale * (np.real(self.zpow * (self.qz * inv_b)) @ wr)
        grad = np.concatenate([g_d, g_u]) - s_grad * common
        return float(r @ self.weights), grad


# --------------------------------------------------------------------------
# initialisation


def zero_configurations(k):
    """Arrangements of inside zeros: tuples of ``"+"``, ``"-"`` and ``"pair"``."""
    out = []
    for count in range(1, k + 1):
        for pairs in range(count // 2 + 1):
            reals = count - 2 * pairs
            for pos in range(reals, -1, -1):
                out.append(("+",) * pos + ("-",) * (reals - pos) + ("pair",) * pairs)
    return out


def _config_points(config, radius, rng, jitter):
    pts = []
    n_pos = n_neg = n_pair = 0
    for kind in config:
        u = 1 + jitter * rng.uniform(-1, 1) if jitter else 1.0
        if kind == "+":
            pts.append(radius * (0.8**n_pos) * u)
            n_pos += 1
        elif kind == "-":
            pts.append(-radius * (0.8**n_neg) * u)
            n_neg += 1
        else:
            ang = np.pi / 2 + (n_pair * np.pi / 6) + (jitter * rng.uniform(-1, 1) if jitter else 0.0)
            w = radius * u * np.exp(1j * ang)
            pts += [w, np.conj(w)]
            n_pair += 1
    return [complex(p) for p in pts]


def _min_power_filter(model, zeros, poles):
    """Least-power strictly causal filter with ``C(s) = -H_Z(s)`` at each zero."""
    k = model.k
    filt0 = UnifiedFilter(tuple(poles), (0.0,) * k)
    d = np.asarray(filt0.denom_coeffs, dtype=float)
    a = _companion(d[1:]) if k else None
    b = np.zeros(k)
    b[0] = 1.0
    gram = scipy.linalg.solve_discrete_lyapunov(a, np.outer(b, b))
    rows, rhs = [], []
    for s in zeros:
        dz = np.polynomial.polynomial.polyval(s, d)
        val = -complex(model.transfer(s)) * dz
        rows.append([s**j for j in range(1, k + 1)])
        rhs.append(val)
    # conjugate-closed constraints become real ones
    a_c = np.array(rows)
    b_c = np.array(rhs)
    a_r = np.vstack([a_c.real, a_c.imag])
    b_r = np.concatenate([b_c.real, b_c.imag])
    keep = np.linalg.norm(a_r, axis=1) > 0
    a_r, b_r = a_r[keep], b_r[keep]
    g_inv = np.linalg.pinv(gram)
    lhs = a_r @ g_inv @ a_r.T
    coef = g_inv @ a_r.T @ np.linalg.lstsq(lhs, b_r, rcond=None)[0]
    return UnifiedFilter(tuple(poles), tuple(coef))


def init_filter(model, seed=0, P=1.0, config=None, power_fraction=0.99):
    """Feasible start whose ``C + H_Z`` vanishes at chosen points inside the disk.

    The zeros share one radius, found by bisection so that the least-power
    interpolating filter uses ``power_fraction * P``.  Poles sit just inside
    the conjugates of the zeros (the reproducing-kernel shape of the
    least-power solution); spare poles sit at the origin.  ``seed`` jitters
    both placements.
    """
    k = model.k
    config = tuple(config) if config is not None else ("+",) if k >= 1 else ()
    if len(config) + sum(1 for c in config if c == "pair") > k:
        raise ValueError("configuration has more zeros than the model order")
    rng = np.random.default_rng(seed)
    jitter = 0.05 if seed else 0.0
    base = _config_points(config, 1.0, rng, jitter)
    pole_shrink = 1 - (0.05 * rng.uniform(0, 1) if seed else 0.0)
    target = power_fraction * P

    def build(radius):
        zeros = [radius * z for z in base]
        poles = [np.conj(z) * pole_shrink for z in zeros]
        poles += [0.0] * (k - len(poles))
        poles = [complex(p) for p in poles]
        return _min_power_filter(model, zeros, poles), zeros

    lo, hi = 1e-3, 1 - 1e-6
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        filt, _ = build(mid)
        if filter_power_exact(filt) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    filt, zeros = build(hi)
    power = filter_power_exact(filt)
    if power > target * (1 + 1e-9) or not power > 0:
        raise ArithmeticError("could not place the initial zeros")
    return filt


# --------------------------------------------------------------------------
# the recursion


def ratio_objective(prev, cur, model, grid=None):
    """``mean(|C_prev + H|^2 / |C_cur + H|^2)`` on the grid."""
    grid = grid or FrequencyGrid()
    hz = noise_transfer_eval(model, grid.thetas)
    num = np.abs(filter_eval(prev, grid.thetas) + hz) ** 2
    den = np.abs(filter_eval(cur, grid.thetas) + hz) ** 2
    if np.min(den) < DEGENERATE:
        raise FloatingPointError("output spectrum degenerate")
    return float(np.mean(num / den))


def local_minimize(prev, model, P, opts=None, problem=None):
    """Projected quasi-Newton descent on the ratio objective.

    Search directions are gradients preconditioned by a BFGS inverse-Hessian
    estimate (plain steepest descent whenever that fails to be a descent
    direction).  After each trial step the numerator is rescaled to exact
    power ``P`` and the poles are clamped to ``pole_radius`` of the grid; Armijo
    backtracking halves the step up to ``max_halvings`` times.  Returns
    ``prev`` itself if no point with a smaller ratio is found.
    """
    opts = opts or IterateOptions()
    prob = problem or _Problem(model, P, opts.grid)
    k = prob.k
    s_prev = prob.output_spectrum(prev)
    d, u = prob.params_of(prev)
    u = u / np.linalg.norm(u)
    x = np.concatenate([d, u])
    try:
        val, grad = prob.objective(s_prev, d, u)
    except FloatingPointError:
        return prev
    hinv = np.eye(2 * k)
    radius = pole_radius(prob.grid.n_points)
    flat = 0
    for _ in range(opts.max_inner):
        if float(np.linalg.norm(grad)) <= opts.grad_tol:
            break
        direction = -hinv @ grad
        if not float(direction @ grad) < 0:
            hinv = np.eye(2 * k)
            direction = -grad
        accepted = False
        t = 1.0
        for _ in range(opts.max_halvings):
            trial = x + t * direction
            td = _clamp_denominator(trial[:k], radius)
            tu = trial[k:] / max(np.linalg.norm(trial[k:]), 1e-300)
            cand = np.concatenate([td, tu])
            try:
                tval, tgrad = prob.objective(s_prev, td, tu)
            except (FloatingPointError, np.linalg.LinAlgError, ValueError):
                t *= 0.5
                continue
            if tval <= val + opts.armijo * float(grad @ (cand - x)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        sx, sg = cand - x, tgrad - grad
        curv = float(sx @ sg)
        if curv > 1e-16 * float(sx @ sx):
            rho = 1.0 / curv
            left = np.eye(2 * k) - rho * np.outer(sx, sg)
            hinv = left @ hinv @ left.T + rho * np.outer(sx, sx)
        flat = flat + 1 if val - tval <= 1e-15 * abs(val) else 0
        x, val, grad = cand, tval, tgrad
        if flat >= 3:
            break
    result = prob.filter_of(x[:k], x[k:])
    try:
        if prob.ratio(prev, result) > 1 + 1e-12:
            return prev
    except FloatingPointError:
        return prev
    return result


def _advance(filt, model, P, opts, prob, trace, steps):
    """Run up to ``steps`` outer iterations from ``filt``; returns the new filter."""
    for _ in range(steps):
        if len(trace) >= opts.max_outer + 1:
            trace.reason = "max iterations"
            return filt
        new = local_minimize(filt, model, P, opts, prob)
        ratio = prob.ratio(filt, new)
        ent = prob.entropy(new)
        gain = ent - trace.entropy[-1]
        if gain < 0:
            # a numerically flat step; keep the better filter
            new, ent, ratio = filt, trace.entropy[-1], 1.0
        trace.record(ent, ratio, filter_power_exact(new), new)
        filt = new
        if 1 - ratio <= opts.eps_ratio or gain <= opts.eps_entropy:
            trace.converged = True
            trace.reason = "ratio" if 1 - ratio <= opts.eps_ratio else "entropy"
            return filt
    return filt


def run(model, P, opts=None):
    """Ratio-minimizing recursion from every zero arrangement; best result wins.

    Returns ``(capacity_lower, filter, trace)``; ``trace.converged`` flags
    whether a stopping rule (rather than the iteration cap) ended the run.
    """
    opts = opts or IterateOptions()
    prob = _Problem(model, P, opts.grid)
    runs = []
    for config in zero_configurations(model.k):
        try:
            filt = init_filter(model, opts.seed, P, config)
        except (ArithmeticError, np.linalg.LinAlgError, ValueError):
            continue
        trace = IterationTrace(configuration=config)
        trace.record(prob.entropy(filt), float("nan"), filter_power_exact(filt), filt)
        filt = _advance(filt, model, P, opts, prob, trace, opts.warmup)
        runs.append([trace.entropy[-1], len(runs), filt, trace])
    if not runs:
        raise ArithmeticError("no feasible starting filter")
    runs.sort(key=lambda r: (-r[0], r[1]))
    best = runs[: opts.keep]
    for entry in best:
        _, _, filt, trace = entry
        if not trace.converged:
            entry[2] = _advance(filt, model, P, opts, prob, trace, opts.max_outer)
            entry[0] = trace.entropy[-1]
    best.sort(key=lambda r: (-r[0], r[1]))
    _, _, filt, trace = best[0]
    if not trace.reason:
        trace.reason = "max iterations"
    full = FrequencyGrid(opts.grid_n)
    s_y = np.abs(filter_eval(filt, full.thetas) + noise_transfer_eval(model, full.thetas)) ** 2
    return entropy_rate(s_y), filt, trace


def kkt_residual(filt, model, grid=None):
    """Stationarity diagnostics for a candidate optimum.

    The optimal filter makes ``lam / (C + H_Z) - conj(C)`` causal.  With
    ``a_n`` the coefficient of ``e^{-in theta}`` in ``1 / (C + H_Z)`` and
    ``c_n`` the Taylor coefficients of ``C``, the fitted ``lam`` minimises
    ``sum_n |lam a_n - c_n|^2`` over ``n = 1..N/4``.

    Returns ``(lambda_fit, causality_residual, outspec_margin)``.  When
    ``1 / (C + H_Z)`` has no anticausal part (``C = 0`` for instance) the
    multiplier is undetermined: ``lambda_fit`` is NaN and the residual
    infinite.
    """
    grid = grid or FrequencyGrid()
    f = filter_eval(filt, grid.thetas) + noise_transfer_eval(model, grid.thetas)
    if np.min(np.abs(f)) < 1e-12:
        raise FloatingPointError("C + H_Z vanishes on the circle")
    coeffs = fourier_coeffs(1.0 / f)
    n = grid.n_points
    idx = np.arange(1, n // 4 + 1)
    a = coeffs[(-idx) % n]
    c = np.zeros(len(idx))
    tay = filt.taylor(len(idx))
    c[: len(tay)] = tay
    margin_base = float(np.min(np.abs(f) ** 2))
    energy = float(np.sum(np.abs(a) ** 2))
    if energy <= 1e-24 * max(1.0, float(np.sum(c**2))):
        # 1/(C + H_Z) is causal, so lam is not identified; an optimum with
        # positive power always has an anticausal part here
        return float("nan"), float("inf"), margin_base
    lam = float(np.sum(np.real(np.conj(a) * c)) / energy)
    resid = float(np.linalg.norm(lam * a - c))
    margin = margin_base - lam
    return lam, resid, margin

