import math
from dataclasses import replace

import numpy as np
import pytest

from helpers import collective_bilinear, symmetric_embedding
from spintwist.meanfield import omega_for_cos_theta, solve_steady_state
from spintwist.oracle import SectorBasis
from spintwist.params import EffectiveSpinParams, InvalidParameterError
from spintwist.trajectories import (MOMENT_KEYS, ModeRotation, Schedule,
                                    SectoredState, apply_bilinear,
                                    covariance_report, evolve_trajectory,
                                    init_state, run_ensemble, updown_matrices,
                                    updown_squeezing, window_probability)


def benchmark_params(n, cos_theta=0.5, delta_frac=0.1):
    delta = delta_frac * (n // 2)
    omega = omega_for_cos_theta(cos_theta, delta, n // 2)
    return EffectiveSpinParams(n_atoms=n, omega=omega, delta=delta)


# ------------------------------------------------------------------ state

def test_init_state_binomial_row():
    st = init_state(4, 2)
    weights = np.abs(st.amps[:, 0]) ** 2
    np.testing.assert_allclose(weights, np.array([1, 4, 6, 4, 1]) / 16.0,
                               rtol=1e-12)
    assert np.all(st.amps[:, 1:] == 0)
    assert st.norm2() == pytest.approx(1.0, abs=1e-12)


def test_init_state_phase_winding():
    st = init_state(4, 2, varphi=0.3)
    phases = np.angle(st.amps[:, 0])
    diffs = np.diff(np.unwrap(phases))
    np.testing.assert_allclose(diffs, 0.3, rtol=1e-10)


def test_init_state_window_capture():
    assert window_probability(1000, 80) >= 1.0 - 1e-6
    assert window_probability(1000, 10) < 0.6


def test_init_state_rejects_bad_window():
    with pytest.raises(InvalidParameterError):
        init_state(10, 6)


# ------------------------------------------------------------------ bilinears

def test_apply_bilinear_matches_dense_basis():
    n = 3
    basis = SectorBasis(n)
    rng = np.random.default_rng(3)
    for _ in range(4):
        amps = np.zeros((n + 1, n + 1), dtype=complex)
        for nj in range(n + 1):
            amps[nj, :nj + 1] = rng.normal(size=nj + 1) \
                + 1j * rng.normal(size=nj + 1)
        amps /= math.sqrt(float(np.sum(np.abs(amps) ** 2)))
        st = SectoredState(amps=amps, nj_min=0, n_atoms=n)
        vec = np.zeros(basis.dim, dtype=complex)
        for nj in range(n + 1):
            for ne in range(nj + 1):
                vec[basis.index(nj, ne)] = amps[nj, ne]
        m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        img, leak = apply_bilinear(st, m)
        ref = basis.bilinear(m) @ vec
        for nj in range(n + 1):
            for ne in range(nj + 1):
                assert img.amps[nj, ne] == pytest.approx(
                    ref[basis.index(nj, ne)], abs=1e-12)
        assert leak < 1e-14


def test_apply_bilinear_expectation_against_product_space():
    n = 3
    emb = symmetric_embedding(n)
    rng = np.random.default_rng(11)
    amps = np.zeros((n + 1, n + 1), dtype=complex)
    for nj in range(n + 1):
        amps[nj, :nj + 1] = rng.normal(size=nj + 1) + 1j * rng.normal(size=nj + 1)
    amps /= math.sqrt(float(np.sum(np.abs(amps) ** 2)))
    st = SectoredState(amps=amps, nj_min=0, n_atoms=n)
    vec_full = np.zeros(3 ** n, dtype=complex)
    for (nj, ne), basis_vec in emb.items():
        vec_full += amps[nj, ne] * basis_vec
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    m = m + m.conj().T
    img, _ = apply_bilinear(st, m)
    got = np.sum(st.amps.conj() * img.amps)
    ref = vec_full.conj() @ collective_bilinear(n, m) @ vec_full
    assert got == pytest.approx(ref, abs=1e-12)


def test_leakage_tracked_at_window_edge():
    n = 10
    st = init_state(n, 2)   # narrow window
    m = np.zeros((3, 3), dtype=complex)
    m[2, 0] = 1.0           # moves the edge sector out of the window
    img, leak = apply_bilinear(st, m)
    assert leak > 0.1
    # image norm plus leaked norm accounts for the full operator action
    full = init_state(n, n // 2)
    img_full, leak_full = apply_bilinear(full, m)
    assert leak_full < 1e-14


def test_mode_rotation_unitary():
    rot = ModeRotation.from_angles(1.0471, 1.19)
    assert rot.unitarity_defect() < 1e-12
    flucts = rot.fluctuation_matrices()
    for key in ("xcj", "pcj", "xcs", "pcs", "nc"):
        m = flucts[key]
        np.testing.assert_allclose(m, m.conj().T, atol=1e-14)


# ------------------------------------------------------------------ evolution

def test_pure_superradiant_decay():
    n = 6
    params = EffectiveSpinParams(n_atoms=n, omega=0.0, delta=0.0)
    amps = np.zeros((1, n + 1), dtype=complex)
    amps[0, n] = 1.0   # single sector, fully excited
    st = SectoredState(amps=amps, nj_min=n, n_atoms=n)
    sched = Schedule(t_off=0.0, t_end=6.0, n_traj=1, d_n=0, seed=5,
                     dt_sample=1.0)
    res = evolve_trajectory(st, params, sched, traj_index=0)
    assert res.values["ne"][-1] == pytest.approx(0.0, abs=1e-9)
    assert abs(res.final.amps[0, 0]) == pytest.approx(1.0, abs=1e-9)
    assert res.n_jumps == n   # each excitation leaves by exactly one jump


def test_norm_preserved_each_sample():
    n = 8
    params = benchmark_params(n)
    st = init_state(n, n // 2)
    sched = Schedule(t_off=0.4, t_end=0.8, n_traj=1, d_n=n // 2, seed=3,
                     dt_sample=0.1)
    res = evolve_trajectory(st, params, sched, traj_index=1)
    norms = res.sector_norms.sum(axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-10)


def test_single_sector_support_is_preserved():
    # strong symmetry: no operation moves amplitude between sectors
    n = 8
    params = benchmark_params(n)
    amps = np.zeros((n + 1, n + 1), dtype=complex)
    amps[4, 0] = 1.0
    st = SectoredState(amps=amps, nj_min=0, n_atoms=n)
    sched = Schedule(t_off=0.5, t_end=1.0, n_traj=1, d_n=n // 2, seed=9,
                     dt_sample=0.25)
    res = evolve_trajectory(st, params, sched, traj_index=0)
    outside = np.delete(res.sector_norms, 4, axis=1)
    assert np.max(np.abs(outside)) < 1e-12
    np.testing.assert_allclose(res.sector_norms[:, 4], 1.0, atol=1e-10)


def test_jump_probability_cap_respected():
    n = 12
    params = benchmark_params(n)
    st = init_state(n, n // 2)
    sched = Schedule(t_off=0.3, t_end=0.5, n_traj=1, d_n=n // 2, seed=2,
                     dt_sample=0.1, shrink_window_steps=3)
    res = evolve_trajectory(st, params, sched, traj_index=0)
    assert res.max_jump_prob <= 0.05 + 1e-12


def test_dt_cap_validation():
    sched = Schedule(t_off=0.1, t_end=0.2, n_traj=1, d_n=2, seed=0,
                     dt_base=1.0)
    with pytest.raises(InvalidParameterError):
        sched.resolved_dt(100, 1.0)


def test_ensemble_deterministic_and_single_trajectory_reduction(tmp_path):
    n = 10
    params = benchmark_params(n)
    sched = Schedule(t_off=0.3, t_end=0.6, n_traj=3, d_n=n // 2, seed=21,
                     dt_sample=0.15)
    ss = solve_steady_state(params, n // 2)
    rot = ModeRotation.from_angles(ss.theta_j, ss.phi_j)
    a = run_ensemble(params, sched, threads=1, rotation=rot,
                     omega_frame=ss.omega_b)
    b = run_ensemble(params, sched, threads=2, rotation=rot,
                     omega_frame=ss.omega_b)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.to_csv(pa)
    b.to_csv(pb)
    assert pa.read_bytes() == pb.read_bytes()

    single = run_ensemble(params, replace(sched, n_traj=1), threads=1,
                          rotation=rot, omega_frame=ss.omega_b)
    traj = evolve_trajectory(init_state(n, sched.d_n), params, sched,
                             traj_index=0, rotation=rot,
                             omega_frame=ss.omega_b)
    for key in MOMENT_KEYS:
        np.testing.assert_allclose(single.mean[key], traj.values[key],
                                   atol=1e-14)


def test_unraveling_invariance_small_n():
    # shifted and unshifted jump operators share the same master equation
    n = 4
    params = benchmark_params(n)
    sched = Schedule(t_off=0.5, t_end=0.9, n_traj=1500, d_n=n // 2, seed=17,
                     dt_sample=0.3)
    ss = solve_steady_state(params, n // 2)
    rot = ModeRotation.from_angles(ss.theta_j, ss.phi_j)
    shifted = run_ensemble(params, sched, rotation=rot, omega_frame=ss.omega_b)
    unshifted = run_ensemble(params, replace(sched, unshifted=True),
                             rotation=rot, omega_frame=ss.omega_b)
    for key in ("ne", "nc", "xcs", "pcs", "sx"):
        se = np.sqrt(shifted.stderr[key] ** 2 + unshifted.stderr[key] ** 2)
        z = np.max(np.abs(shifted.mean[key] - unshifted.mean[key])
                   / np.maximum(se, 1e-12))
        assert z < 5.0, key


# ------------------------------------------------------------------ readouts

def coherent_state_moments(n):
    rot = ModeRotation.from_angles(0.0, math.pi / 2)
    st = init_state(n, n // 2)
    from spintwist.trajectories import _Tables, _moment_set
    tables = _Tables(st)
    phases = np.ones(st.n_sectors, dtype=complex)
    mom, _ = _moment_set(st, tables, rot.fluctuation_matrices(),
                         updown_matrices(), phases)
    return mom


def test_covariance_report_coherent_state():
    n = 40
    mom = coherent_state_moments(n)
    rep = covariance_report(mom, n)
    np.testing.assert_allclose(rep.eigenvalues, 1.0, atol=1e-9)
    assert rep.xi2 == pytest.approx(1.0, abs=1e-9)
    assert rep.xi2_db == pytest.approx(0.0, abs=1e-8)
    assert rep.xi2 <= rep.eigenvalues[-1]
    assert rep.bloch_length == pytest.approx(n / 2.0, rel=1e-9)


def test_updown_squeezing_coherent_state():
    n = 40
    mom = coherent_state_moments(n)
    assert updown_squeezing(mom, n) == pytest.approx(1.0, abs=1e-9)


def test_covariance_eigenvalue_ordering_random():
    rng = np.random.default_rng(0)
    n = 30
    keys = ("xcj", "pcj", "xcs", "pcs")
    mom = {k: rng.normal() for k in keys}
    mom["nc"] = n / 2.0
    a = rng.normal(size=(4, 4))
    cov = a @ a.T + np.eye(4)
    for i, ka in enumerate(keys):
        for j, kb in enumerate(keys):
            if i <= j:
                mom[f"m2_{ka}_{kb}"] = cov[i, j] + mom[ka] * mom[kb]
    rep = covariance_report(mom, n)
    assert rep.xi2 == pytest.approx(rep.eigenvalues.min())
    assert np.all(np.diff(rep.eigenvalues) >= -1e-12)
