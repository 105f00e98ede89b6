import math

import numpy as np
import pytest

from spintwist.meanfield import (MeanFieldState, MixedPhaseError,
                                 integrate_full_mf, integrate_spin_mf,
                                 omega_for_cos_theta, solve_steady_state,
                                 steady_constraint)
from spintwist.params import CavityParams, EffectiveSpinParams, derive_effective


def test_empty_cavity_decay():
    # decoupling from the unexcited ensemble holds up to the vacuum-Rabi
    # admixture N g^2/kappa^2, so take the cavity linewidth large
    kappa = 2000.0
    cav = CavityParams(g_c=1.0, kappa=kappa, epsilon=0.0, Delta=0.0, delta=0.0,
                       n_atoms=4)
    init = MeanFieldState(a=1.0, d=2.0, e=0.0)
    series = integrate_full_mf(cav, init, t_end=8.0 / kappa, dt_out=0.4 / kappa)
    np.testing.assert_allclose(series.a, np.exp(-0.5 * kappa * series.t),
                               rtol=1e-3)
    np.testing.assert_allclose(series.d, 2.0, rtol=1e-5)
    np.testing.assert_allclose(series.e, 0.0, atol=5e-3)


def test_spin_fixed_point_without_drive():
    params = EffectiveSpinParams(n_atoms=10, omega=0.0, delta=0.0)
    init = MeanFieldState(d=math.sqrt(10.0), e=0.0)
    series = integrate_spin_mf(params, init, t_end=3.0, dt_out=0.2, n_j=10)
    np.testing.assert_allclose(series.d, math.sqrt(10.0), rtol=1e-10)
    np.testing.assert_allclose(series.e, 0.0, atol=1e-12)


def test_polarized_relaxes_to_resonant_angles():
    n_j = 40
    params = EffectiveSpinParams(n_atoms=n_j, omega=0.4 * n_j / 2.0, delta=0.0)
    init = MeanFieldState.bloch(n_j, 0.0, 0.0)
    series = integrate_spin_mf(params, init, t_end=4.0, dt_out=0.05, n_j=n_j)
    fin = series.final()
    cos_theta = (abs(fin.d) ** 2 - abs(fin.e) ** 2) / n_j
    assert cos_theta == pytest.approx(math.sqrt(1 - 0.4 ** 2), rel=1e-6)
    # phase of the excited amplitude sits a quarter turn from the drive
    assert math.sin(-np.angle(fin.e)) == pytest.approx(1.0, abs=1e-6)


def test_two_level_norm_conserved():
    n_j = 12
    params = EffectiveSpinParams(n_atoms=n_j, omega=2.0, delta=0.7)
    init = MeanFieldState.bloch(n_j, 0.7, 0.3)
    series = integrate_spin_mf(params, init, t_end=5.0, dt_out=0.1, n_j=n_j,
                               omega_frame=0.0)
    norm = series.two_level_norm()
    np.testing.assert_allclose(norm, n_j, rtol=1e-8)


def test_shelf_coherence_conserved():
    n = 30
    params = EffectiveSpinParams(n_atoms=n, omega=3.0, delta=1.0)
    init = MeanFieldState(d=math.sqrt(n / 3), e=1j * math.sqrt(n / 3),
                          u=math.sqrt(n / 3))
    series = integrate_spin_mf(params, init, t_end=4.0, dt_out=0.05,
                               n_j=2 * n / 3, omega_frame=0.0)
    coh = series.shelf_coherence()
    assert np.max(np.abs(coh - coh[0])) <= 1e-8 * n ** 2


def test_full_matches_eliminated_in_bad_cavity_limit():
    n = 20
    g_c = 1.0
    cav = CavityParams(g_c=g_c, kappa=100.0 * math.sqrt(n) * g_c, epsilon=5.0,
                       Delta=0.0, delta=0.0, n_atoms=n)
    eff = derive_effective(cav)
    init = MeanFieldState.bloch(n, 0.0, 0.0)
    t_end = 8.0 / eff.gamma
    full = integrate_full_mf(cav, init, t_end, t_end / 300)
    spin = integrate_spin_mf(eff, init, t_end, t_end / 300, n_j=n,
                             omega_frame=0.0)
    sup = max(float(np.max(np.abs(full.d - spin.d))),
              float(np.max(np.abs(full.e - spin.e)))) / math.sqrt(n)
    assert sup < 0.01
    assert abs(full.a[-1]) <= 1e-6 * math.sqrt(n)


def test_solve_steady_state_zero_drive():
    params = EffectiveSpinParams(n_atoms=10, omega=0.0, delta=0.0)
    ss = solve_steady_state(params, 10)
    assert ss.theta_j == 0.0
    assert ss.omega_b == 0.0


def test_solve_steady_state_benchmark_point():
    n_j = 500
    delta = 0.1 * n_j
    omega = 0.46637 * n_j
    params = EffectiveSpinParams(n_atoms=2 * n_j, omega=omega, delta=delta)
    ss = solve_steady_state(params, n_j)
    assert math.cos(ss.theta_j) == pytest.approx(0.500, abs=1e-3)
    assert math.sin(ss.phi_j) == pytest.approx(0.9285, abs=2e-4)
    assert math.cos(ss.phi_j) == pytest.approx(0.3714, abs=2e-4)
    assert math.sin(ss.phi_j) ** 2 + math.cos(ss.phi_j) ** 2 == pytest.approx(1.0)


def test_omega_b_at_half_inversion():
    # cos(theta) = 1/2 makes the frame frequency equal half the detuning
    n_j = 300
    for delta in (0.01 * n_j, 0.2 * n_j):
        omega = omega_for_cos_theta(0.5, delta, n_j)
        ss = solve_steady_state(
            EffectiveSpinParams(n_atoms=2 * n_j, omega=omega, delta=delta), n_j)
        assert ss.omega_b == pytest.approx(delta / 2.0, rel=1e-9)


def test_detuned_matches_resonant_form_as_delta_vanishes():
    n_j = 200
    for frac in np.arange(0.1, 0.95, 0.1):
        params = EffectiveSpinParams(n_atoms=2 * n_j, omega=frac * n_j / 2.0,
                                     delta=1e-8 * n_j)
        ss = solve_steady_state(params, n_j)
        assert math.cos(ss.theta_j) == pytest.approx(
            math.sqrt(1 - frac ** 2), rel=1e-6)
        assert ss.phi_j == pytest.approx(math.pi / 2, rel=1e-6)


def test_constraint_residual_small():
    n_j = 150
    params = EffectiveSpinParams(n_atoms=2 * n_j, omega=0.3 * n_j, delta=0.05 * n_j)
    ss = solve_steady_state(params, n_j)
    res = steady_constraint(ss.theta_j, abs(params.omega), params.delta, n_j, 1.0)
    assert abs(res) <= 1e-10 * n_j ** 2


def test_mixed_phase_raises():
    n_j = 50
    params = EffectiveSpinParams(n_atoms=2 * n_j, omega=0.7 * n_j, delta=0.0)
    with pytest.raises(MixedPhaseError):
        solve_steady_state(params, n_j)


def test_dark_state_condition():
    n_j = 120
    params = EffectiveSpinParams(n_atoms=2 * n_j, omega=0.3 * n_j, delta=0.0)
    ss = solve_steady_state(params, n_j)
    assert abs(ss.cavity_coherence) <= 1e-8 * n_j


def test_complex_drive_phase_shifts_phi():
    n_j = 80
    base = solve_steady_state(
        EffectiveSpinParams(n_atoms=2 * n_j, omega=0.3 * n_j, delta=0.0), n_j)
    rot = solve_steady_state(
        EffectiveSpinParams(n_atoms=2 * n_j, omega=0.3 * n_j * np.exp(0.4j),
                            delta=0.0), n_j)
    assert rot.theta_j == pytest.approx(base.theta_j, rel=1e-12)
    assert abs(base.cavity_coherence) <= 1e-8 * n_j
    assert abs(rot.cavity_coherence) <= 1e-8 * n_j


def test_csv_roundtrip(tmp_path):
    params = EffectiveSpinParams(n_atoms=6, omega=1.0, delta=0.0)
    init = MeanFieldState.bloch(6, 0.3, 0.1)
    series = integrate_spin_mf(params, init, t_end=1.0, dt_out=0.25, n_j=6)
    path = tmp_path / "mf.csv"
    series.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,re_a,im_a,re_d,im_d,re_e,im_e,re_u,im_u"
