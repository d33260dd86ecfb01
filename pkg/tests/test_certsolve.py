import math
from dataclasses import replace

import numpy as np
import pytest

from gfcap.arma1 import arma1_certificate, solve_arma1
from gfcap.certsolve import (
    CertificateSolution,
    MultiplicityPattern,
    build_residual,
    capacity_of,
    certificate_from_roots,
    derive_outer_roots,
    enumerate_layouts,
    enumerate_patterns,
    f_eval,
    h_ij_eval,
    multi_start_solve,
    newton_solve,
    verify_certificate,
)
from gfcap.spectra import ArmaModel

from conftest import random_model

npoly = np.polynomial.polynomial


def _cand(xs, ys, lam=1.0, roots=()):
    pattern = MultiplicityPattern(tuple(len(b) for b in ys))
    return CertificateSolution(pattern, tuple(xs), tuple(tuple(b) for b in ys), lam, tuple(roots))


@pytest.fixture(scope="module")
def arma1_report():
    return arma1_certificate(1.0, 0.5, 0.0)


def test_enumerate_patterns():
    show = lambda k: [p.m for p in enumerate_patterns(k)]  # noqa: E731
    assert show(1) == [(1,)]
    assert show(2) == [(1,), (2,), (1, 1)]
    assert show(3) == [(1,), (2,), (1, 1), (3,), (2, 1), (1, 1, 1)]
    with pytest.raises(ValueError):
        enumerate_patterns(0)


def test_layouts_cover_real_and_pair_structures():
    layouts = enumerate_layouts(MultiplicityPattern((1, 1)))
    assert (("real", 1), ("real", 1)) in layouts
    assert (("pair", 1),) in layouts


def test_f_eval_examples(arma1_report):
    white = ArmaModel((0.0,), (0.0,))
    assert f_eval(_cand([0.3], [[0.0]]), white, 0.0) == pytest.approx(1.0)
    ma = ArmaModel((0.5,), (0.0,))
    assert abs(f_eval(_cand([0.3], [[0.0]]), ma, -2.0)) <= 1e-15
    cert = arma1_report["certificate"]
    assert abs(f_eval(cert, ma, cert.x[0])) <= 1e-10
    with pytest.raises(ZeroDivisionError):
        f_eval(_cand([0.5], [[1.0]]), white, 2.0)


def test_outer_roots_of_closed_form(arma1_report, grid):
    cert = arma1_report["certificate"]
    model = ArmaModel((0.5,), (0.0,))
    (r,) = derive_outer_roots(cert, model)
    assert abs(r) < 1
    # S_Y = |x|^-2 |(1 - r z)/(1 + beta z)|^2 must equal |C + H|^2
    assert arma1_report["output_spectrum_mismatch"] <= 1e-12


def test_outer_roots_reject_non_roots():
    with pytest.raises(ValueError, match="x_i not a root"):
        derive_outer_roots(_cand([0.3], [[0.0]]), ArmaModel((0.5,), (0.0,)))


def _h(model, z):
    return npoly.polyval(z, model.p_coeffs) / npoly.polyval(z, model.q_coeffs)


def _dh(model, z):
    p, q = model.p_coeffs, model.q_coeffs
    num = npoly.polyval(z, npoly.polyder(p)) * npoly.polyval(z, q) - npoly.polyval(
        z, p
    ) * npoly.polyval(z, npoly.polyder(q))
    return num / npoly.polyval(z, q) ** 2


MODEL2 = ArmaModel((0.3, -0.6), (0.5, 0.2))


def test_outer_roots_single_zero_identities():
    a1, a2 = MODEL2.alphas
    b1, b2 = MODEL2.betas
    x = -0.6
    y = -_h(MODEL2, x) * (1 - x * x) / x
    r = derive_outer_roots(_cand([x], [[y]]), MODEL2)
    assert abs(sum(r) - (x - 1 / x - a1 - a2 - y)) <= 1e-8
    assert abs(r[0] * r[1] - (a1 * a2 * x * x - b1 * b2 * x * y)) <= 1e-8


def test_outer_roots_double_zero_identities():
    a1, a2 = MODEL2.alphas
    b1, b2 = MODEL2.betas
    x = -0.5
    u, du = x / (1 - x * x), 1 / (1 - x * x) ** 2
    y1, y2 = np.linalg.solve([[u, u * u], [du, 2 * u * du]], [-_h(MODEL2, x), -_dh(MODEL2, x)])
    r = derive_outer_roots(_cand([x], [[y1, y2]]), MODEL2)
    assert abs(sum(r) - (2 * x - 2 / x - a1 - a2 - y1)) <= 1e-8
    # the product carries +y12 (the sign is fixed by expanding the numerator)
    expected = a1 * a2 * x**4 - b1 * b2 * x**3 * y1 + b1 * b2 * x**2 * y2
    assert abs(r[0] * r[1] - expected) <= 1e-8


def test_outer_roots_two_zero_identities():
    a1, a2 = MODEL2.alphas
    b1, b2 = MODEL2.betas
    x1, x2 = -0.5, 0.4
    a = [[x1 / (1 - x1 * x1), x1 / (1 - x1 * x2)], [x2 / (1 - x1 * x2), x2 / (1 - x2 * x2)]]
    y1, y2 = np.linalg.solve(a, [-_h(MODEL2, x1), -_h(MODEL2, x2)])
    r = derive_outer_roots(_cand([x1, x2], [[y1], [y2]]), MODEL2)
    assert abs(sum(r) - (x1 + x2 - 1 / x1 - 1 / x2 - a1 - a2 - y1 - y2)) <= 1e-8
    expected = a1 * a2 * x1**2 * x2**2 - b1 * b2 * x1**2 * x2 * y2 - b1 * b2 * x1 * x2**2 * y1
    assert abs(r[0] * r[1] - expected) <= 1e-8


def _laurent_coefficient(cand, model, i, j, radius=1e-3, n=256):
    """Coefficient of (z - x_i)^-j of 1/f by a small contour integral."""
    x = cand.x[i]
    w = np.exp(2j * np.pi * np.arange(n) / n)
    vals = [(radius * e) ** j / f_eval(cand, model, x + radius * e) for e in w]
    return np.mean(vals)


def test_h_ij_against_contour_integral():
    model = ArmaModel((0.3, -0.6), (0.5, 0.2))
    x = -0.5
    u, du = x / (1 - x * x), 1 / (1 - x * x) ** 2
    y1, y2 = np.linalg.solve([[u, u * u], [du, 2 * u * du]], [-_h(model, x), -_dh(model, x)])
    base = _cand([x], [[y1, y2]])
    cand = replace(base, outer_roots=derive_outer_roots(base, model))
    for j in (1, 2):
        ref = _laurent_coefficient(cand, model, 0, j)
        assert abs(h_ij_eval(cand, model, 1, j) * math.factorial(j - 1) - ref) <= 1e-7 * abs(ref)


def test_h11_of_closed_form(arma1_report):
    cert = arma1_report["certificate"]
    x, r = cert.x[0].real, cert.outer_roots[0].real
    expected = -x * (1 - x * x) * 1.0 / (1 - r * x)
    assert h_ij_eval(cert, ArmaModel((0.5,), (0.0,)), 1, 1) == pytest.approx(expected, abs=1e-12)


def test_residual_vanishes_at_closed_form():
    for P, a, b in ((1.0, 0.5, 0.0), (3.0, -0.4, 0.6), (0.3, 0.8, -0.2)):
        cert = arma1_certificate(P, a, b)["certificate"]
        F = build_residual(ArmaModel((a,), (b,)), P, MultiplicityPattern((1,)))
        v = F.pack([cert.x[0]], [cert.y[0]])
        assert np.max(np.abs(F(v))) <= 1e-10
        res = newton_solve(F, v)
        assert res.success and res.iterations <= 2


def test_build_residual_rejects_oversized_pattern():
    with pytest.raises(ValueError):
        build_residual(ArmaModel((0.1,), (0.0,)), 1.0, MultiplicityPattern((1, 1)))


def test_newton_far_start_is_failure_or_infeasible():
    model = ArmaModel((0.5,), (0.0,))
    F = build_residual(model, 1.0, MultiplicityPattern((1,)))
    res = newton_solve(F, [0.99, 0.1])
    if res.success:
        xs, _ = F.unpack(res.x)
        assert abs(xs[0]) >= 1 or res.residual <= 1e-12
    else:
        assert res.message in ("singular", "no convergence")


def test_newton_two_zero_system_from_coarse_start():
    model = ArmaModel((0.8, -0.8), (0.0, 0.0))
    F = build_residual(model, 1.0, MultiplicityPattern((1, 1)))
    v0 = F.fit_coefficients([0.7, -0.7])
    res = newton_solve(F, v0)
    assert res.success and res.residual <= 1e-12


def test_arma1_single_survivor(rng, grid):
    for _ in range(10):
        P = rng.uniform(0.1, 10)
        a, b = rng.uniform(-0.9, 0.9, 2)
        found = multi_start_solve(ArmaModel((a,), (b,)), P, grid=grid)
        assert len(found) == 1
        assert abs(found[0].capacity - solve_arma1(P, a, b).capacity_nats) <= 1e-9


def test_white_arma2_survivor(grid):
    found = multi_start_solve(ArmaModel((0.3, -0.5), (-0.5, 0.3)), 2.0, grid=grid, exhaustive=False)
    assert found and abs(found[0].capacity - 0.5 * math.log(3)) <= 1e-9


def test_search_is_reproducible(grid):
    model = ArmaModel((0.1, 0.1), (0.0, 0.0))
    a = multi_start_solve(model, 1.0, grid=grid, seed=3, exhaustive=False)
    b = multi_start_solve(model, 1.0, grid=grid, seed=3, exhaustive=False)
    assert [c.x for c in a] == [c.x for c in b]
    assert [c.y for c in a] == [c.y for c in b]


def test_verify_closed_form_and_perturbations(arma1_report, grid):
    model = ArmaModel((0.5,), (0.0,))
    cert = arma1_report["certificate"]
    assert verify_certificate(model, 1.0, cert, grid)["pass"]
    halved = verify_certificate(model, 1.0, replace(cert, lam=cert.lam / 2), grid)
    assert not halved["pass"] and not halved["checks"]["orthogonality_residual"]
    flipped = replace(cert, y=((-cert.y[0][0],),))
    rep = verify_certificate(model, 1.0, flipped, grid)
    assert not rep["pass"]
    assert not (rep["checks"].get("root_residual", True) and rep["checks"].get("power_residual", True))


def test_capacity_of_examples():
    assert capacity_of(_cand([1 / math.e], [[1.0]])) == pytest.approx(1.0)
    assert capacity_of(_cand([0.5, -0.5], [[1.0], [1.0]])) == pytest.approx(2 * math.log(2))
    with pytest.raises(ValueError):
        capacity_of(_cand([1.0], [[1.0]]))
    cert = arma1_certificate(1.0, 0.0, 0.0)["certificate"]
    assert capacity_of(cert) == pytest.approx(0.5 * math.log(2), abs=1e-12)


def test_certificate_from_roots_recovers_lambda(arma1_report):
    cert = arma1_report["certificate"]
    again = certificate_from_roots(ArmaModel((0.5,), (0.0,)), 1.0, cert.x, cert.y)
    assert again.lam == pytest.approx(cert.lam, rel=1e-12)


def test_survivors_satisfy_jensen_and_exclusivity(grid):
    rng = np.random.default_rng(7)
    for _ in range(3):
        model = random_model(rng, 2)
        found = multi_start_solve(model, 1.0, grid=grid)
        assert found
        for cand in found:
            assert cand.residual_report["jensen_residual"] <= 1e-8
        if len(found) > 1:
            spectra = []
            for cand in found:
                z = grid.points
                rz = np.prod([1 - r * z for r in cand.outer_roots], axis=0)
                scale = np.prod([abs(x) ** (-2 * len(b)) for x, b in zip(cand.x, cand.y)])
                q = npoly.polyval(z, model.q_coeffs)
                spectra.append(scale * np.abs(rz / q) ** 2)
            for s in spectra[1:]:
                assert np.max(np.abs(s - spectra[0]) / spectra[0]) <= 1e-6


def test_closed_form_output_margin_is_nonnegative(arma1_report):
    assert arma1_report["output_margin"] >= -1e-8


def test_verify_reports_broken_conjugate_pair(grid):
    model = ArmaModel((0.1, 0.1), (0.0, 0.0))
    cert = multi_start_solve(model, 1.0, grid=grid, exhaustive=False)[0]
    xs = list(cert.x)
    xs[0] += 1e-3j if abs(xs[0].imag) == 0 else 1e-3
    rep = verify_certificate(model, 1.0, replace(cert, x=tuple(xs)), grid, tol=1e-5)
    assert not rep["pass"]
