from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

import sepwalk as sw
from sepwalk.model import grand_canonical_average


def test_rate_table_lookup_intro(intro_rates):
    occ = np.array([1, 0, 1, 0], dtype=np.uint8)
    assert sw.evaluate_local_rate(intro_rates, occ, 0) == (2 / 3, 1 / 3)
    assert sw.evaluate_local_rate(intro_rates, occ, 1) == (1 / 3, 2 / 3)


def test_rate_table_constant():
    c = sw.LocalRate.constant(Fraction(1, 2), Fraction(1, 2))
    occ = np.array([1, 1, 0], dtype=np.uint8)
    for x in range(3):
        assert sw.evaluate_local_rate(c, occ, x) == (0.5, 0.5)


def test_cocycle_property(intro_rates):
    rng = np.random.default_rng(0)
    occ = (rng.random(12) < 0.5).astype(np.uint8)
    for x in range(12):
        shifted = np.roll(occ, -x)
        assert (sw.evaluate_local_rate(intro_rates, occ, x)
                == sw.evaluate_local_rate(intro_rates, shifted, 0))


def test_rate_serialization_round_trip(intro_rates):
    text = intro_rates.to_text()
    back = sw.LocalRate.from_text(text)
    assert back.support == intro_rates.support
    assert np.array_equal(back.cplus, intro_rates.cplus)
    assert np.array_equal(back.cminus, intro_rates.cminus)
    assert back.exact_table == intro_rates.exact_table

    two = sw.LocalRate((0, 1), [(0.1, 0.2), (0.3, 0.4), (0.5, 0.6), (0.7, 0.8)])
    again = sw.LocalRate.from_text(two.to_text())
    assert np.array_equal(again.cplus, two.cplus)
    assert again.support == (0, 1)


def test_mean_field_velocity_intro_exact(intro_rates):
    for rho in (Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(1)):
        vp, vm, v = sw.mean_field_velocity(intro_rates, rho, exact=True)
        assert v == Fraction(2 * rho - 1, 3)
        assert vp == Fraction(1 + rho, 3) and vm == Fraction(2 - rho, 3)
    vp, vm, v = sw.mean_field_velocity(intro_rates, 0.5)
    assert v == pytest.approx(0.0, abs=1e-15)
    assert vp == pytest.approx(0.5) and vm == pytest.approx(0.5)


def test_mean_field_velocity_archetype():
    c = sw.LocalRate.archetype(Fraction(1), Fraction(2))
    vp, vm, v = sw.mean_field_velocity(c, Fraction(1, 4), exact=True)
    assert (vp, vm, v) == (Fraction(5, 4), Fraction(7, 4), Fraction(-1, 2))


def test_velocity_polynomial_identified_by_samples(intro_rates):
    # degree <= |support|, so |support| + 1 evaluations determine it
    cp, cm = intro_rates.velocity_coefficients()
    k = len(intro_rates.support)
    rhos = np.linspace(0.1, 0.9, k + 1)
    vals = [sw.mean_field_velocity(intro_rates, r)[0] for r in rhos]
    fit = np.polynomial.polynomial.polyfit(rhos, vals, k)
    assert np.allclose(fit, cp, atol=1e-12)


def test_velocity_matches_monte_carlo():
    c = sw.LocalRate((0, 1), [(0.2, 0.1), (0.5, 0.3), (0.9, 0.4), (1.3, 0.2)])
    rho = 0.37
    vp_exact, _, _ = sw.mean_field_velocity(c, rho)
    gen = np.random.default_rng(42)
    samples = (gen.random((100_000, 2)) < rho).astype(np.uint8)
    idx = samples[:, 0] + 2 * samples[:, 1]
    draws = c.cplus[idx]
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - vp_exact) <= 4 * se


def test_sample_product_profile_degenerate(half):
    lat = sw.TorusLattice(16)
    ones = sw.sample_product_profile(lat, sw.DensityProfile.constant(1.0),
                                     sw.RngStream(1))
    zeros = sw.sample_product_profile(lat, sw.DensityProfile.constant(0.0),
                                      sw.RngStream(2))
    assert ones.sum() == 16 and zeros.sum() == 0


def test_sample_product_profile_concentration(half):
    lat = sw.TorusLattice(10_000)
    hits = 0
    for seed in range(100):
        occ = sw.sample_product_profile(lat, half, sw.RngStream(1000, seed))
        hits += abs(occ.mean() - 0.5) <= 0.015
    assert hits >= 95     # 3-sigma binomial bound holds w.p. ~0.997 per seed


def test_sample_canonical():
    lat = sw.TorusLattice(12)
    assert sw.sample_canonical(lat, 0, sw.RngStream(3)).sum() == 0
    assert sw.sample_canonical(lat, 12, sw.RngStream(4)).sum() == 12
    lat4 = sw.TorusLattice(4)
    stream = sw.RngStream(5)
    counts: dict[tuple, int] = {}
    draws = 100_000
    for _ in range(draws):
        occ = sw.sample_canonical(lat4, 2, stream)
        assert occ.sum() == 2
        counts[tuple(occ)] = counts.get(tuple(occ), 0) + 1
    assert len(counts) == 6
    for v in counts.values():
        assert abs(v / draws - 1 / 6) <= 0.02


def test_tilted_initial_probabilities():
    lat = sw.TorusLattice(32)
    u0 = sw.DensityProfile.constant(0.5)
    rho, vx = sw.tilted_site_probabilities(lat, u0, sw.DensityProfile.constant(0.75))
    assert np.allclose(vx, 0.75, atol=1e-12)
    _, vx_low = sw.tilted_site_probabilities(lat, u0, sw.DensityProfile.constant(0.25))
    assert np.allclose(vx_low, 0.25, atol=1e-12)


def test_tilted_initial_null_tilt_is_exact_zero():
    lat = sw.TorusLattice(24)
    u0 = sw.DensityProfile.cosine(0.5, 0.2, 1, interior_eps=0.2)
    occ, log_rn = sw.sample_tilted_initial(lat, u0, u0, sw.RngStream(7))
    assert log_rn == 0.0
    rho, vx = sw.tilted_site_probabilities(lat, u0, u0)
    assert np.array_equal(rho, vx)
    # same stream, same per-site probabilities -> identical draw
    ref = sw.sample_product_profile(lat, u0, sw.RngStream(7))
    assert np.array_equal(occ, ref)


def test_tilted_initial_log_density_matches_direct():
    lat = sw.TorusLattice(16)
    u0 = sw.DensityProfile.constant(0.5)
    v0 = sw.DensityProfile.constant(0.75)
    occ, log_rn = sw.sample_tilted_initial(lat, u0, v0, sw.RngStream(9))
    rho, vx = sw.tilted_site_probabilities(lat, u0, v0)
    direct = float(np.sum(np.where(occ == 1, np.log(vx / rho),
                                   np.log((1 - vx) / (1 - rho)))))
    assert log_rn == direct


def test_tilted_initial_requires_interior():
    lat = sw.TorusLattice(8)
    with pytest.raises(ValueError):
        sw.sample_tilted_initial(lat, sw.DensityProfile.constant(0.0),
                                 sw.DensityProfile.constant(0.5),
                                 sw.RngStream(1))


def test_canonical_average_moment_identities():
    for ell in range(2, 13):
        for k in range(ell + 1):
            avg1 = sw.canonical_average(lambda w: int(w[0]), k, ell, exact=True)
            assert avg1 == Fraction(k, ell)
            avg2 = sw.canonical_average(lambda w: int(w[0]) * int(w[1]),
                                        k, ell, exact=True)
            assert avg2 == Fraction(k * (k - 1), ell * (ell - 1))
    assert sw.canonical_average(lambda w: int(w[0]) * int(w[1]), 2, 2,
                                exact=True) == 1


def test_canonical_average_budget():
    with pytest.raises(ValueError):
        sw.canonical_average(lambda w: 1.0, 1, 25)
    with pytest.raises(ValueError):
        sw.canonical_average(lambda w: 1.0, 9, 8)


def test_equivalence_of_ensembles_bound():
    for ell in (3, 5, 8, 12):
        sup = Fraction(0)
        for k in range(ell + 1):
            gap = abs(sw.canonical_average(lambda w: int(w[0]) * int(w[1]),
                                           k, ell, exact=True)
                      - Fraction(k, ell) ** 2)
            sup = max(sup, gap)
        assert sup <= Fraction(1, ell - 1)


def test_grand_canonical_average_is_polynomial_value():
    val = grand_canonical_average(lambda w: float(w[0] * w[1]), (0, 1), 0.3)
    assert val == pytest.approx(0.09, abs=1e-15)


def test_cell_averages_exact_for_piecewise_linear():
    prof = sw.DensityProfile.from_knots([(0.0, 0.2), (0.5, 0.8)])
    n = 8
    cells = prof.cell_averages(n)
    for i in range(n):
        lo, hi = i / n - 0.5 / n, i / n + 0.5 / n
        quad = np.linspace(lo, hi, 2001)
        approx = np.trapezoid(prof(quad), quad) * n
        assert cells[i] == pytest.approx(approx, abs=5e-7)
