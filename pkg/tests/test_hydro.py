from __future__ import annotations

import numpy as np
import pytest

import sepwalk as sw


def heat_exact(t, xs, mean=0.5, amp=0.5):
    return mean + amp * np.exp(-4 * np.pi**2 * t) * np.cos(2 * np.pi * xs)


def test_heat_constant_profile():
    grid = sw.SpaceTimeGrid.make(64, 0.5)
    pf = sw.solve_heat(sw.DensityProfile.constant(0.3), 0.5, grid)
    assert np.abs(pf.values - 0.3).max() <= 1e-13


def test_heat_spectral_accuracy():
    grid = sw.SpaceTimeGrid.make(256, 1.0)
    pf = sw.solve_heat(sw.DensityProfile.cosine(0.5, 0.5, 1), 1.0, grid)
    xs = np.arange(256) / 256
    err = max(np.abs(pf.values[i] - heat_exact(t, xs)).max()
              for i, t in enumerate(pf.times))
    assert err <= 1e-3


def test_heat_mass_and_max_principle():
    grid = sw.SpaceTimeGrid.make(128, 1.0)
    u0 = sw.DensityProfile.cosine(0.5, 0.4, 2)
    pf = sw.solve_heat(u0, 1.0, grid)
    mass = pf.mass()
    assert np.abs(mass - mass[0]).max() <= 1e-12
    assert pf.values.min() >= 0.1 - 1e-9
    assert pf.values.max() <= 0.9 + 1e-9

    # explicit stepping is a convex combination: exact range preservation
    ex = sw.SpaceTimeGrid.make(64, 0.25, scheme="explicit")
    pfe = sw.solve_heat(u0, 0.25, ex)
    assert pfe.values.min() >= 0.1 - 1e-12
    assert pfe.values.max() <= 0.9 + 1e-12


def test_explicit_stability_guard():
    grid = sw.SpaceTimeGrid(m=64, dt=0.01, T=0.1, scheme="explicit")
    with pytest.raises(sw.StabilityError):
        sw.solve_heat(sw.DensityProfile.constant(0.5), 0.1, grid)


def test_null_tilt_reduction_is_exact(intro_rates):
    grid = sw.SpaceTimeGrid.make(128, 0.5)
    u0 = sw.DensityProfile.cosine(0.5, 0.25, 1)
    heat = sw.solve_heat(u0, 0.5, grid)
    sol = sw.solve_perturbed(u0, sw.TiltParams(), intro_rates, 0.5, grid)
    assert np.array_equal(sol.u.values, heat.values)


def test_perturbed_constant_profile_closed_form(intro_rates):
    grid = sw.SpaceTimeGrid.make(128, 1.0)
    rho = sw.DensityProfile.constant(0.5)
    tilt = sw.TiltParams(a=sw.TimeFunction.constant(0.3))
    sol = sw.solve_perturbed(rho, tilt, intro_rates, 1.0, grid)
    assert np.abs(sol.u.values - 0.5).max() <= 1e-13
    # f(t) = (e^a v+ - e^{-a} v-) t = sinh(0.3) t at density 1/2
    assert np.abs(sol.f_values - np.sinh(0.3) * sol.f_times).max() <= 1e-10

    # time-dependent tilt: f(t) = int (e^{a(s)} - e^{-a(s)})/2 ds
    tilt2 = sw.TiltParams(a=sw.TimeFunction([0.0, 0.5]))
    sol2 = sw.solve_perturbed(rho, tilt2, intro_rates, 1.0, grid)
    ref = np.array([np.trapezoid(np.sinh(0.5 * np.linspace(0, t, 2001)),
                                 np.linspace(0, t, 2001))
                    for t in sol2.f_times])
    assert np.abs(sol2.f_values - ref).max() <= 1e-8


def test_null_tilt_symmetric_equilibrium_walker(intro_rates):
    grid = sw.SpaceTimeGrid.make(64, 1.0)
    sol = sw.solve_perturbed(sw.DensityProfile.constant(0.5), sw.TiltParams(),
                             intro_rates, 1.0, grid)
    assert np.abs(sol.f_values).max() <= 1e-14   # v(1/2) = 0


def test_perturbed_mass_and_range(intro_rates):
    grid = sw.SpaceTimeGrid.make(128, 1.0)
    tilt = sw.TiltParams(H=sw.TestFunctionH.single_mode("cos", 1, 0.3, 1.0),
                         a=sw.TimeFunction.constant(0.2))
    sol = sw.solve_perturbed(sw.DensityProfile.cosine(0.5, 0.3, 1), tilt,
                             intro_rates, 1.0, grid)
    mass = sol.u.mass()
    assert np.abs(mass - mass[0]).max() <= 1e-12
    assert sol.u.values.min() >= -1e-9
    assert sol.u.values.max() <= 1 + 1e-9


def test_moving_frame_consistency(intro_rates):
    grid = sw.SpaceTimeGrid.make(128, 0.5)
    tilt = sw.TiltParams(H=sw.TestFunctionH.single_mode("cos", 1, 0.2, 0.5),
                         a=sw.TimeFunction.constant(0.3))
    sol = sw.solve_perturbed(sw.DensityProfile.cosine(0.5, 0.2, 1), tilt,
                             intro_rates, 0.5, grid)
    # uhat(t, 0) = u(t, f(t)) at recorded times, up to interpolation
    for i in range(0, sol.u.times.size, 37):
        t = sol.u.times[i]
        assert sol.uhat.values[i, 0] == pytest.approx(
            sw.evaluate_frame(sol, t, 0.0), abs=1e-6)
        assert sw.evaluate_frame(sol, t, 0.0) == pytest.approx(
            sol.u.density_at(t, sol.f_at(t)), abs=1e-12)


def test_evaluate_frame_values(intro_rates):
    grid = sw.SpaceTimeGrid.make(64, 0.5)
    rho = sw.DensityProfile.constant(0.42)
    sol = sw.solve_perturbed(rho, sw.TiltParams(), intro_rates, 0.5, grid)
    assert sw.evaluate_frame(sol, 0.3, 0.77) == pytest.approx(0.42, abs=1e-12)

    # fixed-frame spectral value: the x = 1/4 slice of the cosine solution
    # stays at 1/2 for all times
    heat = sw.solve_heat(sw.DensityProfile.cosine(0.5, 0.5, 1), 0.5,
                         sw.SpaceTimeGrid.make(256, 0.5))
    assert heat.density_at(0.1, 0.25) == pytest.approx(0.5, abs=1e-12)


def test_second_order_convergence():
    errs = []
    for m in (64, 128, 256):
        grid = sw.SpaceTimeGrid.make(m, 0.1)
        pf = sw.solve_heat(sw.DensityProfile.cosine(0.5, 0.5, 1), 0.1, grid)
        xs = np.arange(m) / m
        errs.append(max(np.abs(pf.values[i] - heat_exact(t, xs)).max()
                        for i, t in enumerate(pf.times)))
    r1 = errs[0] / errs[1]
    r2 = errs[1] / errs[2]
    assert 3.0 <= r1 <= 5.5
    assert 3.0 <= r2 <= 5.5
