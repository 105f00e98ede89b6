import math
from dataclasses import replace

import numpy as np
import pytest

from spintwist.effective import hp_model
from spintwist.squeezing import (PURE_OAT_XI2, DecoherenceSpec, ScanConfig,
                                 build_model, closed_form_limits,
                                 collective_exact, optimize, optimize_time,
                                 scan_grid, squeezing_curve, to_db,
                                 xi2_expansion)


def bare_model(n, cos_theta=0.5, delta_frac=0.05):
    m = hp_model(n, math.acos(cos_theta), delta=delta_frac * n)
    return replace(m, gamma_check=0.0, gamma_minus=0.0, gamma_d=0.0)


def benchmark_model(n=1000):
    return replace(hp_model(n, math.acos(0.5), delta=0.05 * n),
                   gamma_minus=0.0, gamma_d=0.0)


# ------------------------------------------------------------------ expansion

def test_expansion_pure_twisting_optimum():
    n = 1000
    m = bare_model(n)
    t_opt = 3.0 ** (1.0 / 6.0) / (m.chi_check * n ** (2.0 / 3.0))
    val = xi2_expansion(t_opt, m, n)
    assert val == pytest.approx(PURE_OAT_XI2(n), rel=1e-12)
    assert to_db(val) == pytest.approx(-19.8, abs=0.05)


def test_expansion_dephasing_prefactor_identity():
    n = 500
    m = replace(benchmark_model(n), gamma_d=1.0, gamma_minus=0.2)
    t = math.log(2.0)   # gamma_d t = ln 2 doubles the prefactor
    bare = (2.0 + n * m.gamma_check * t) / (n * m.chi_check * t) ** 2 \
        + (n * m.chi_check * t) ** 4 / (6.0 * n ** 2) + (2.0 / 3.0) * 0.2 * t
    assert xi2_expansion(t, m, n) == pytest.approx(2.0 * bare, rel=1e-12)


def test_expansion_benchmark_value():
    # frozen from the analytic formula at the driven benchmark working point
    m = benchmark_model()
    assert xi2_expansion(0.17, m, 1000) == pytest.approx(0.15945, abs=2e-4)
    assert to_db(xi2_expansion(0.17, m, 1000)) == pytest.approx(-7.97, abs=0.02)


def test_expansion_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        xi2_expansion(0.0, benchmark_model(), 1000)


def test_expansion_diverges_at_early_times():
    m = benchmark_model()
    assert xi2_expansion(1e-9, m, 1000) > 1e6


# ------------------------------------------------------------------ exact sums

def squeezing_OAT_reference(n, chi_t):
    # independent closed form for twisting from a coherent state
    s = n / 2.0
    var_y = s / 2 + s / 2 * (s - 0.5) * (1 - np.cos(2 * chi_t) ** (n - 2))
    var_z = s / 2
    a = var_y - var_z
    c = var_y + var_z
    b = 2 * s * (s - 0.5) * np.sin(chi_t) * np.cos(chi_t) ** (n - 2)
    var_min = 0.5 * (c - np.sqrt(a ** 2 + b ** 2))
    sx = s * np.cos(chi_t) ** (n - 1)
    return var_min * n / sx ** 2


def test_collective_exact_starts_at_unity():
    assert collective_exact(0.0, benchmark_model(), 1000) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [4, 30, 200])
def test_collective_exact_matches_reference_oat(n):
    m = bare_model(n)
    t_opt = 3.0 ** (1.0 / 6.0) / (m.chi_check * n ** (2.0 / 3.0))
    for f in (0.2, 0.6, 1.0, 1.5):
        t = f * t_opt
        assert collective_exact(t, m, n) == pytest.approx(
            squeezing_OAT_reference(n, m.chi_check * t), rel=1e-9)


def test_collective_exact_reproduces_published_benchmark_minimum():
    # exact collective-only squeezing bottoms out near -7.3 dB at the
    # benchmark rates, the value the trajectory study quotes for analytics
    m = benchmark_model()
    ts = np.linspace(0.05, 0.3, 60)
    vals = [collective_exact(t, m, 1000) for t in ts]
    assert to_db(min(vals)) == pytest.approx(-7.3, abs=0.15)


def test_collective_exact_rejects_single_particle_rates():
    with pytest.raises(ValueError):
        collective_exact(0.1, replace(benchmark_model(), gamma_d=1.0), 100)


def test_expansion_approaches_exact_at_large_n():
    # the expansion drops the twisting contrast factor, a finite-size effect;
    # agreement tightens as the atom number grows
    worst = []
    for n in (10 ** 3, 10 ** 5):
        m = replace(hp_model(n, math.acos(0.6), delta=0.0025 * n),
                    gamma_minus=0.0, gamma_d=0.0)
        t_opt, _ = optimize_time(m, n)
        rel = max(abs(xi2_expansion(t, m, n) - collective_exact(t, m, n))
                  / collective_exact(t, m, n)
                  for t in np.linspace(0.5 * t_opt, t_opt, 6))
        worst.append(rel)
    assert worst[1] < worst[0]
    assert worst[1] < 0.05


# ------------------------------------------------------------------ optimizer

def test_optimize_time_matches_grid():
    n = 2000
    m = replace(hp_model(n, math.acos(0.5), delta=0.01 * n), gamma_d=0.3)
    t_opt, val = optimize_time(m, n)
    grid = np.geomspace(t_opt / 30, t_opt * 30, 4000)
    vals = [xi2_expansion(t, m, n) for t in grid]
    assert val <= min(vals) * (1 + 1e-6)


def test_optimize_pure_oat_reduction():
    # the collective dephasing intrinsic to the drive vanishes with the
    # detuning, recovering the bare twisting optimum
    n = 10 ** 6
    rec = optimize(n, DecoherenceSpec(), delta=1e-6, cos_theta=0.5)
    assert rec.xi2_opt == pytest.approx(PURE_OAT_XI2(n), rel=0.02)


def test_optimize_triangle_point():
    n = 10 ** 6
    dec = DecoherenceSpec(gamma_d=100.0)
    rec = optimize(n, dec, delta=None, cos_theta=0.6)
    assert rec.xi2_opt_db == pytest.approx(-21.3, abs=0.3)
    assert rec.delta_opt == pytest.approx(0.01, rel=0.4)
    assert rec.t_opt == pytest.approx(0.009, rel=0.35)


def test_optimize_monotone_in_decoherence():
    n = 10 ** 4
    base = optimize(n, DecoherenceSpec(), delta=0.005, cos_theta=0.5).xi2_opt
    worse_flip = optimize(n, DecoherenceSpec(gamma_e_up=1.0), delta=0.005,
                          cos_theta=0.5).xi2_opt
    worse_deph = optimize(n, DecoherenceSpec(gamma_d=5.0), delta=0.005,
                          cos_theta=0.5).xi2_opt
    assert worse_flip > base
    assert worse_deph > base
    # collective dephasing grows with detuning at fixed angle
    stronger = optimize(n, DecoherenceSpec(), delta=0.05, cos_theta=0.5).xi2_opt
    assert stronger > base


# ------------------------------------------------------------------ closed forms

def test_closed_form_spin_flip_arithmetic():
    rec = closed_form_limits(10 ** 6, "spin_flip_resonant", gamma_e_up=1.0)
    decoherence_term = 4.0 * math.sqrt(2.0 / 3.0) / 1000.0
    assert decoherence_term == pytest.approx(3.266e-3, abs=2e-6)
    assert rec.xi2_opt == pytest.approx(PURE_OAT_XI2(10 ** 6) + decoherence_term,
                                        rel=1e-12)
    assert rec.xi2_opt_db == pytest.approx(-24.7, abs=0.05)


def test_closed_form_dispersive_equals_resonant():
    a = closed_form_limits(10 ** 8, "spin_flip_dispersive", gamma_e_up=0.3)
    b = closed_form_limits(10 ** 8, "spin_flip_resonant", gamma_e_up=0.3)
    assert a.xi2_opt == b.xi2_opt
    assert a.t_opt == b.t_opt


def test_closed_form_flip_free_limit():
    rec = closed_form_limits(10 ** 6, "spin_flip_resonant", gamma_e_up=1e-12)
    assert rec.xi2_opt == pytest.approx(PURE_OAT_XI2(10 ** 6), rel=1e-4)


def test_closed_form_dephasing_guards():
    weak = closed_form_limits(10 ** 8, "dephasing_weak", gamma_d=1.0)
    assert weak.guard_ok
    strong = closed_form_limits(10 ** 8, "dephasing_strong", gamma_d=1000.0)
    assert strong.guard_ok
    assert strong.t_opt == pytest.approx(1e-3)
    flagged = closed_form_limits(10 ** 8, "dephasing_strong", gamma_d=0.01)
    assert not flagged.guard_ok


def test_crossover_angle():
    rec = closed_form_limits(10 ** 6, "crossover", gamma_e_up=1.0, gamma_d=100.0)
    assert 0.0 < rec.theta <= math.pi / 2


# ------------------------------------------------------------------ scans

def test_single_cell_scan_matches_optimize():
    dec = DecoherenceSpec(gamma_e_up=1.0)
    cfg = ScanConfig(n_atoms=10 ** 5, delta_over_ngamma=np.array([0.005]),
                     cos_theta=np.array([0.7]), dec=dec, annotate_anchors=False)
    res = scan_grid(cfg)
    rec = optimize(10 ** 5, dec, delta=0.005, cos_theta=0.7)
    assert res.xi2_opt_db[0, 0] == pytest.approx(rec.xi2_opt_db, abs=1e-9)
    assert res.t_opt[0, 0] == pytest.approx(rec.t_opt, rel=1e-9)


def test_scan_overlay_tracks_argmin():
    dec = DecoherenceSpec(gamma_e_up=1.0)
    dgrid = np.geomspace(5e-4, 0.05, 14)
    cgrid = np.linspace(0.5, 0.9, 4)
    res = scan_grid(ScanConfig(n_atoms=10 ** 5, delta_over_ngamma=dgrid,
                               cos_theta=cgrid, dec=dec, annotate_anchors=False))
    for j in range(len(cgrid)):
        i_min = int(np.nanargmin(res.xi2_opt_db[:, j]))
        lo = dgrid[max(i_min - 1, 0)]
        hi = dgrid[min(i_min + 1, len(dgrid) - 1)]
        assert lo * 0.999 <= res.overlay_delta[j] <= hi * 1.001


def test_scan_invalid_cell_marked_nan(tmp_path):
    dec = DecoherenceSpec()
    cfg = ScanConfig(n_atoms=1000, delta_over_ngamma=np.array([0.01]),
                     cos_theta=np.array([0.5, 1.0]), dec=dec,
                     annotate_anchors=False)
    res = scan_grid(cfg)
    assert np.isfinite(res.xi2_opt_db[0, 0])
    assert np.isnan(res.xi2_opt_db[0, 1])
    assert res.flags[0, 1] != ""
    path = tmp_path / "scan.csv"
    res.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "delta_over_NGamma,cos_theta,xi2_opt_dB,t_opt_Gamma,flags"
    assert len(lines) == 3


def test_db_convention():
    assert to_db(0.1) == pytest.approx(-10.0)
    curve = squeezing_curve(benchmark_model(), 1000, [0.1, 0.17])
    assert np.all(curve.xi2_db == 10.0 * np.log10(curve.xi2))
