import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfcap.quadrature import (
    FrequencyGrid,
    entropy_rate,
    filter_power_exact,
    filter_power_grid,
    filter_power_residue,
    grid_mean,
    jensen_log_mean,
    pattern_to_filter,
    waterfill_capacity,
)
from gfcap.spectra import ArmaModel, UnifiedFilter, filter_eval, noise_transfer_eval, poly_roots


def test_grid_mean_examples():
    g = FrequencyGrid(512)
    assert grid_mean(np.full(512, 3.0)) == pytest.approx(3.0)
    assert abs(grid_mean(np.cos(g.thetas))) <= 1e-14
    assert grid_mean(np.cos(g.thetas) ** 2) == pytest.approx(0.5, abs=1e-14)
    with pytest.raises(ValueError):
        grid_mean([])


def test_grid_size_floor_and_env(monkeypatch):
    with pytest.raises(ValueError):
        FrequencyGrid(100)
    monkeypatch.setenv("GFCAP_GRID_N", "2048")
    assert FrequencyGrid().n_points == 2048


def test_filter_power_grid_examples(grid):
    assert filter_power_grid(UnifiedFilter((0.0,), (0.7,)), grid) == pytest.approx(0.49)
    assert filter_power_grid(UnifiedFilter.zero(2), grid) == 0.0
    assert filter_power_grid(UnifiedFilter((0.5,), (1.0,)), grid) == pytest.approx(4 / 3)


def test_filter_power_residue_examples(grid):
    assert filter_power_residue([0.0], [[0.7]]) == pytest.approx(0.49)
    assert filter_power_residue([0.5], [[1.0]]) == pytest.approx(4 / 3)
    x, y = [0.3, -0.4], [[1.0], [1.0]]
    ref = filter_power_grid(pattern_to_filter(x, y), grid)
    assert abs(filter_power_residue(x, y) - ref) <= 1e-9
    with pytest.raises(ValueError):
        filter_power_residue([1.0], [[1.0]])


def test_double_pole_power_closed_form():
    # y11 z/(1-xz) + y12 z^2/(1-xz)^2
    x, a, b = 0.4, 0.7, -0.3
    expected = a * a / (1 - x * x) + 2 * a * b * x / (1 - x * x) ** 2 + b * b * (1 + x * x) / (
        1 - x * x
    ) ** 3
    assert filter_power_residue([x], [[a, b]]) == pytest.approx(expected, rel=1e-13)


def _random_pattern(rng):
    xs, ys = [], []
    n_blocks = rng.integers(1, 4)
    while len(xs) < n_blocks:
        m = int(rng.integers(1, 3))
        if n_blocks - len(xs) >= 2 and rng.random() < 0.4:
            z = rng.uniform(0.1, 0.85) * np.exp(1j * rng.uniform(0.3, 2.8))
            block = rng.normal(size=m) + 1j * rng.normal(size=m)
            xs += [z, np.conj(z)]
            ys += [list(block), list(np.conj(block))]
        else:
            xs.append(rng.uniform(-0.85, 0.85))
            ys.append(list(rng.normal(size=m)))
    return xs, ys


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_residue_power_matches_grid(seed):
    rng = np.random.default_rng(seed)
    xs, ys = _random_pattern(rng)
    filt = pattern_to_filter(xs, ys)
    ref = filter_power_grid(filt, FrequencyGrid(4096))
    assert abs(filter_power_residue(xs, ys) - ref) <= 1e-8 * max(1.0, ref)
    assert abs(filter_power_exact(filt) - ref) <= 1e-8 * max(1.0, ref)


def test_entropy_rate_examples():
    g = FrequencyGrid(4096)
    z = g.points
    assert entropy_rate(np.full(4096, 4.0)) == pytest.approx(math.log(2))
    assert abs(entropy_rate(np.abs(1 + 0.5 * z) ** 2)) <= 1e-10
    assert entropy_rate(4 * np.abs(1 - 0.5 * z) ** 2) == pytest.approx(math.log(2), abs=1e-10)
    with pytest.raises(ValueError, match="spectrum not positive"):
        entropy_rate([1.0, 0.0])


def test_jensen_examples():
    assert jensen_log_mean([], [], 2.0) == pytest.approx(math.log(2))
    assert jensen_log_mean([0.5], [], 1.0) == pytest.approx(math.log(2))
    assert jensen_log_mean([0.5], [0.25], 1.0) == pytest.approx(-math.log(2))
    with pytest.raises(ValueError):
        jensen_log_mean([1.0 + 1e-10], [], 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_entropy_of_output_spectrum_matches_jensen(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    model = ArmaModel(tuple(rng.uniform(-0.8, 0.8, k)), tuple(rng.uniform(-0.8, 0.8, k)))
    filt = UnifiedFilter(tuple(rng.uniform(-0.7, 0.7, k)), tuple(0.5 * rng.normal(size=k)))
    # C + H = (N_C Q + P D) / (D Q)
    num = np.polynomial.polynomial.polyadd(
        np.polynomial.polynomial.polymul(filt.numer_coeffs, model.q_coeffs),
        np.polynomial.polynomial.polymul(model.p_coeffs, filt.denom_coeffs),
    )
    den = np.polynomial.polynomial.polymul(filt.denom_coeffs, model.q_coeffs)
    zn, zd = poly_roots(num), poly_roots(den)
    if min(abs(abs(zn) - 1).min(), abs(abs(zd) - 1).min()) < 0.05:
        return
    g = FrequencyGrid(4096)
    s = np.abs(filter_eval(filt, g.thetas) + noise_transfer_eval(model, g.thetas)) ** 2
    # |f(0)| = 1; log|f| mean, entropy is half of log|f|^2 mean
    exact = jensen_log_mean(zn, zd, 1.0)
    assert abs(entropy_rate(s) - exact) <= 1e-8


def test_waterfill_examples(grid):
    white = ArmaModel((0.0,), (0.0,))
    assert waterfill_capacity(white, 1.0, grid) == pytest.approx(0.5 * math.log(2), abs=1e-10)
    assert waterfill_capacity(white, 3.0, grid) == pytest.approx(math.log(2), abs=1e-10)
    v = waterfill_capacity(ArmaModel((0.5,), (0.0,)), 1.0, grid)
    from gfcap.arma1 import solve_arma1

    assert 0 < v < solve_arma1(1.0, 0.5, 0.0).capacity_nats


def test_waterfill_monotone_in_power(grid):
    model = ArmaModel((0.6, -0.2), (0.1, 0.5))
    vals = [waterfill_capacity(model, p, grid) for p in np.linspace(0.1, 10, 25)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_white_waterfill_is_shannon(rng, grid):
    for _ in range(10):
        a = tuple(rng.uniform(-0.9, 0.9, 2))
        P = rng.uniform(0.1, 10)
        val = waterfill_capacity(ArmaModel(a, a), P, grid)
        assert abs(val - 0.5 * math.log1p(P)) <= 1e-10


def test_doubling_grid_changes_integrals_negligibly():
    model = ArmaModel((0.5, -0.3), (0.2, 0.6))
    filt = UnifiedFilter((0.4, -0.5), (0.6, 0.2))
    for n in (2048, 4096):
        g1, g2 = FrequencyGrid(n), FrequencyGrid(2 * n)
        p1, p2 = filter_power_grid(filt, g1), filter_power_grid(filt, g2)
        s1 = np.abs(filter_eval(filt, g1.thetas) + noise_transfer_eval(model, g1.thetas)) ** 2
        s2 = np.abs(filter_eval(filt, g2.thetas) + noise_transfer_eval(model, g2.thetas)) ** 2
        assert abs(p1 - p2) < 1e-9
        assert abs(entropy_rate(s1) - entropy_rate(s2)) < 1e-9
        assert abs(waterfill_capacity(model, 1.0, g1) - waterfill_capacity(model, 1.0, g2)) < 1e-9
