"""Batch front-end: JSON config in, CSV/JSON artifacts and a manifest out."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .io_utils import atomic_write_text, write_csv, write_json

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config validation: every mode declares its full key set; unknown keys reject

_COMMON_KEYS = {
    "mode": (str, True),
    "output": (str, True),
    "seed": (int, False),
    "threads": (int, False),
}

_MODE_KEYS = {
    "steady": {
        "n_atoms": (int, True),
        "n_j": (int, False),
        "delta_over_n_gamma": (float, True),
        "omega_over_n_gamma": (float, False),
        "cos_theta_target": (float, False),
        "gamma": (float, False),
        "mean_field_t_end": (float, False),
        "mean_field_dt_out": (float, False),
    },
    "effective": {
        "n_atoms": (int, True),
        "delta_over_n_gamma": (float, True),
        "cos_theta": (float, True),
        "gamma": (float, False),
        "gamma_e_up": (float, False),
        "gamma_e_down": (float, False),
        "gamma_d": (float, False),
    },
    "scan": {
        "n_atoms": (int, True),
        "delta_over_n_gamma_min": (float, True),
        "delta_over_n_gamma_max": (float, True),
        "n_delta": (int, True),
        "cos_theta_min": (float, True),
        "cos_theta_max": (float, True),
        "n_cos_theta": (int, True),
        "gamma": (float, False),
        "gamma_e_up": (float, False),
        "gamma_d": (float, False),
        "annotate_anchors": (bool, False),
    },
    "trajectories": {
        "n_atoms": (int, True),
        "d_n": (int, True),
        "delta_over_n_gamma": (float, True),
        "cos_theta_target": (float, True),
        "t_off": (float, True),
        "t_end": (float, True),
        "n_traj": (int, True),
        "gamma": (float, False),
        "dt_base": (float, False),
        "dt_sample": (float, False),
        "varphi": (float, False),
        "second_order": (bool, False),
        "shrink_window_steps": (int, False),
    },
    "coherence": {
        "n_j": (int, True),
        "n_j_prime": (int, True),
        "n_e_max": (int, True),
        "gamma": (float, False),
    },
    "verify": {
        "skip_oracle": (bool, False),
    },
}

_POSITIVE = {"n_atoms", "n_j", "n_j_prime", "n_traj", "n_delta", "n_cos_theta",
             "t_end", "gamma", "n_e_max"}
_NONNEGATIVE = {"d_n", "seed", "threads", "gamma_e_up", "gamma_e_down",
                "gamma_d", "t_off", "shrink_window_steps"}


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    mode = cfg.get("mode")
    if mode not in _MODE_KEYS:
        raise ConfigError(f"mode must be one of {sorted(_MODE_KEYS)}, got {mode!r}")
    schema = dict(_COMMON_KEYS)
    schema.update(_MODE_KEYS[mode])
    for key in cfg:
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for mode {mode!r}")
    out = {}
    for key, (typ, required) in schema.items():
        if key not in cfg:
            if required:
                raise ConfigError(f"missing required key {key!r} for mode {mode!r}")
            continue
        val = cfg[key]
        if typ is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, typ) or isinstance(val, bool) != (typ is bool):
            raise ConfigError(f"key {key!r} must be {typ.__name__}, got {val!r}")
        if key in _POSITIVE and val <= 0:
            raise ConfigError(f"key {key!r} must be positive, got {val!r}")
        if key in _NONNEGATIVE and val < 0:
            raise ConfigError(f"key {key!r} must be nonnegative, got {val!r}")
        out[key] = val
    return out


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# mode runners

def _run_steady(cfg: dict, outdir: str, warnings: list) -> None:
    from .meanfield import (MeanFieldState, MixedPhaseError, integrate_spin_mf,
                            omega_for_cos_theta, solve_steady_state)
    from .params import EffectiveSpinParams

    n = cfg["n_atoms"]
    gamma = cfg.get("gamma", 1.0)
    n_j = cfg.get("n_j", n // 2)
    ng = n_j * gamma
    if "cos_theta_target" in cfg:
        omega = omega_for_cos_theta(cfg["cos_theta_target"],
                                    cfg["delta_over_n_gamma"] * n * gamma,
                                    n_j, gamma)
    elif "omega_over_n_gamma" in cfg:
        omega = cfg["omega_over_n_gamma"] * n * gamma
    else:
        raise ConfigError("steady mode needs omega_over_n_gamma or cos_theta_target")
    params = EffectiveSpinParams(n_atoms=n, omega=omega,
                                 delta=cfg["delta_over_n_gamma"] * n * gamma,
                                 gamma=gamma)
    try:
        ss = solve_steady_state(params, n_j)
    except MixedPhaseError as exc:
        write_json(os.path.join(outdir, "steady.json"),
                   {"phase": "mixed", "detail": str(exc)})
        warnings.append("mixed phase: no polarized steady state")
        return
    write_json(os.path.join(outdir, "steady.json"), {
        "phase": ss.phase.kind.value,
        "theta_j": ss.theta_j,
        "phi_j": ss.phi_j,
        "cos_theta_j": math.cos(ss.theta_j),
        "omega_b": ss.omega_b,
        "omega": abs(omega),
        "omega_c": ss.phase.omega_c,
        "cavity_coherence_abs": abs(ss.cavity_coherence),
    })
    if "mean_field_t_end" in cfg:
        t_end = cfg["mean_field_t_end"]
        dt_out = cfg.get("mean_field_dt_out", t_end / 200.0)
        init = MeanFieldState.bloch(n_j, 0.0, 0.0)
        series = integrate_spin_mf(params, init, t_end, dt_out, n_j=n_j)
        series.to_csv(os.path.join(outdir, "meanfield.csv"))


def _run_effective(cfg: dict, outdir: str, warnings: list) -> None:
    from .effective import (SingleParticleRates, adiabatic_model, hp_model,
                            hp_validity, weak_drive_model)
    from .meanfield import omega_for_cos_theta

    n = cfg["n_atoms"]
    gamma = cfg.get("gamma", 1.0)
    delta = cfg["delta_over_n_gamma"] * n * gamma
    cos_theta = cfg["cos_theta"]
    theta = math.acos(cos_theta)
    rates = SingleParticleRates(gamma_e_up=cfg.get("gamma_e_up", 0.0),
                                gamma_e_down=cfg.get("gamma_e_down", 0.0),
                                gamma_d=cfg.get("gamma_d", 0.0))

    def as_dict(model):
        return {
            "chi_check": model.chi_check,
            "gamma_check": model.gamma_check,
            "chi_sign": model.chi_sign,
            "ratio": model.ratio if model.gamma_check > 0 else None,
            "gamma_minus": model.gamma_minus,
            "gamma_d": model.gamma_d,
            "omega_b": model.omega_b,
            "valid": model.valid,
            "note": model.validity_note,
        }

    hp = hp_model(n, theta, delta, gamma, rates=rates)
    adi = adiabatic_model(n, theta, delta, gamma, rates=rates)
    omega = omega_for_cos_theta(cos_theta, delta, n // 2, gamma)
    weak = weak_drive_model(n, omega, delta, chi=0.0, gamma_delta=gamma,
                            rates=rates)
    validity = hp_validity(hp, n, gamma)
    write_json(os.path.join(outdir, "effective.json"), {
        "hp": as_dict(hp),
        "adiabatic": as_dict(adi),
        "weak_drive": as_dict(weak),
        "hp_validity": {"ratio": validity.ratio, "passes": validity.passes,
                        "t_opt": validity.t_opt,
                        "relaxation_rate": validity.relaxation_rate},
    })


def _run_scan(cfg: dict, outdir: str, warnings: list) -> None:
    from .squeezing import DecoherenceSpec, ScanConfig, scan_grid

    dgrid = np.geomspace(cfg["delta_over_n_gamma_min"],
                         cfg["delta_over_n_gamma_max"], cfg["n_delta"])
    cgrid = np.linspace(cfg["cos_theta_min"], cfg["cos_theta_max"],
                        cfg["n_cos_theta"])
    dec = DecoherenceSpec(gamma_e_up=cfg.get("gamma_e_up", 0.0),
                          gamma_d=cfg.get("gamma_d", 0.0))
    result = scan_grid(ScanConfig(
        n_atoms=cfg["n_atoms"], delta_over_ngamma=dgrid, cos_theta=cgrid,
        dec=dec, gamma=cfg.get("gamma", 1.0),
        annotate_anchors=cfg.get("annotate_anchors", True)))
    result.to_csv(os.path.join(outdir, "scan.csv"))
    write_json(os.path.join(outdir, "scan_summary.json"), result.summary())


def _run_trajectories(cfg: dict, outdir: str, warnings: list, seed: int,
                      threads: int | None) -> None:
    from .meanfield import omega_for_cos_theta, solve_steady_state
    from .params import EffectiveSpinParams
    from .trajectories import ModeRotation, Schedule, run_ensemble

    n = cfg["n_atoms"]
    gamma = cfg.get("gamma", 1.0)
    delta = cfg["delta_over_n_gamma"] * n * gamma
    omega = omega_for_cos_theta(cfg["cos_theta_target"], delta, n // 2, gamma)
    params = EffectiveSpinParams(n_atoms=n, omega=omega, delta=delta, gamma=gamma)
    sched = Schedule(
        t_off=cfg["t_off"], t_end=cfg["t_end"], n_traj=cfg["n_traj"],
        d_n=cfg["d_n"], seed=seed,
        dt_base=cfg.get("dt_base"), dt_sample=cfg.get("dt_sample"),
        second_order=cfg.get("second_order", False),
        shrink_window_steps=cfg.get("shrink_window_steps", 500),
        varphi=cfg.get("varphi", 0.0))
    ss = solve_steady_state(params, n // 2)
    rotation = ModeRotation.from_angles(ss.theta_j, ss.phi_j)
    result = run_ensemble(params, sched, threads=threads, rotation=rotation,
                          omega_frame=ss.omega_b)
    result.to_csv(os.path.join(outdir, "ensemble.csv"))

    # analytic reference curves for the same working point
    from dataclasses import replace as _replace
    from .effective import hp_model
    from .squeezing import collective_exact, xi2_expansion
    model = _replace(hp_model(n, ss.theta_j, delta, gamma),
                     gamma_minus=0.0, gamma_d=0.0)
    times = result.times
    xi_exp = np.array([xi2_expansion(max(t, times[1] * 0.5), model, n)
                       for t in times])
    xi_exact = np.array([collective_exact(min(t, cfg["t_off"]), model, n)
                         for t in times])
    write_csv(os.path.join(outdir, "analytic.csv"), {
        "t_Gamma": times,
        "xi2_expansion_dB": 10.0 * np.log10(xi_exp),
        "xi2_collective_dB": 10.0 * np.log10(xi_exact),
    })
    i_min = int(np.argmin(result.xi2_gen))
    write_json(os.path.join(outdir, "ensemble_summary.json"), {
        "xi2_gen_min_dB": float(result.xi2_gen_db[i_min]),
        "t_min": float(result.times[i_min]),
        "xi2_updown_final_dB": float(result.xi2_updown_db[-1]),
        "e_fraction_final": float(result.e_fraction[-1]),
        "max_jump_prob": result.max_jump_prob,
        "leakage": result.leakage,
        "cos_theta_steady": math.cos(ss.theta_j),
        "omega_over_n_gamma": abs(omega) / (n * gamma),
    })


def _run_coherence(cfg: dict, outdir: str, warnings: list) -> None:
    from .coherence import CoherenceLadder, evolve_rate_equation, ladder_csv_columns

    n_j, n_jp, n_e_max = cfg["n_j"], cfg["n_j_prime"], cfg["n_e_max"]
    gamma = cfg.get("gamma", 1.0)
    write_csv(os.path.join(outdir, "coherence.csv"),
              ladder_csv_columns(n_j, n_jp, n_e_max, gamma))
    init = np.zeros(n_e_max + 1, dtype=complex)
    init[0] = 1.0
    ladder = CoherenceLadder(n_j=n_j, n_j_prime=n_jp, coherences=init,
                             gamma=gamma)
    ev = evolve_rate_equation(
        ladder, t_end=50.0 / float(ladder.big_w.min()))
    write_json(os.path.join(outdir, "coherence_summary.json"), {
        "asymptote_re": ev.asymptote.real,
        "asymptote_im": ev.asymptote.imag,
        "ground_rung_final_re": float(ev.ground_rung()[-1].real),
        "ground_rung_final_im": float(ev.ground_rung()[-1].imag),
    })


# ---------------------------------------------------------------------------
# verify: fast oracle cross-checks and limit-consistency suite

def run_verify(skip_oracle: bool = False, report=print) -> list[tuple[str, bool, str]]:
    """Named consistency checks; each returns (name, passed, detail)."""
    from dataclasses import replace as _replace

    checks: list[tuple[str, bool, str]] = []

    def check(name, passed, detail=""):
        checks.append((name, bool(passed), detail))
        report(f"[{'PASS' if passed else 'FAIL'}] {name}{': ' + detail if detail else ''}")

    from .effective import (SingleParticleRates, adiabatic_model, berry_eigenstate,
                            hp_model, weak_drive_model)
    from .meanfield import (MeanFieldState, integrate_full_mf, integrate_spin_mf,
                            solve_steady_state)
    from .params import CavityParams, EffectiveSpinParams, derive_effective

    # steady state against the resonant closed form
    worst = 0.0
    for frac in (0.1, 0.5, 0.9):
        n_j = 200
        params = EffectiveSpinParams(n_atoms=2 * n_j, omega=frac * n_j / 2.0,
                                     delta=1e-8 * n_j)
        ss = solve_steady_state(params, n_j)
        worst = max(worst, abs(math.cos(ss.theta_j) - math.sqrt(1 - frac ** 2)))
    check("steady_state_resonant_form", worst < 1e-6, f"max dev {worst:.2e}")

    # geometric connection bound
    worst = 0.0
    for n_j in (50, 200):
        for o in (0.3, 0.9):
            st = berry_eigenstate(n_j, o)
            worst = max(worst, abs(st.connection
                                   - n_j * (1 - math.sqrt(1 - o ** 2)) / 2.0))
    check("berry_connection_bound", worst <= 2.0, f"max dev {worst:.3f}")

    # twisting-to-dephasing ratio at the benchmark working point
    m = hp_model(1000, math.acos(0.5), delta=50.0)
    check("hp_ratio_benchmark", abs(m.ratio - 0.442) <= 0.005,
          f"ratio {m.ratio:.4f}")

    # sign convention: positive detuning shears with negative twisting rate
    check("hp_shear_sign", m.chi_sign == -1 and hp_model(
        1000, math.acos(0.5), delta=-50.0).chi_sign == 1)

    # limit chain
    worst = 0.0
    for cos_th in np.linspace(0.3, 0.95, 5):
        theta = math.acos(cos_th)
        hp = hp_model(4000, theta, delta=1e-6 * 4000)
        adi = adiabatic_model(4000, theta, delta=1e-6 * 4000)
        worst = max(worst, abs(hp.chi_check / adi.chi_check - 1),
                    abs(hp.gamma_check / adi.gamma_check - 1))
    check("limit_chain_hp_adiabatic", worst < 0.05, f"max rel dev {worst:.2e}")
    wd = weak_drive_model(4000, omega=1.0, delta=0.4, chi=0.0, gamma_delta=1.0)
    adi = adiabatic_model(4000, wd.theta, delta=0.4)
    rel = abs(wd.ratio / adi.ratio - 1)
    check("limit_chain_weak_drive", rel < 0.05, f"ratio rel dev {rel:.2e}")

    # full-cavity versus eliminated mean field
    n = 16
    cav = CavityParams(g_c=1.0, kappa=100.0 * math.sqrt(n), epsilon=4.0,
                       Delta=0.0, delta=0.0, n_atoms=n)
    eff = derive_effective(cav)
    init = MeanFieldState.bloch(n, 0.0, 0.0)
    t_end = 6.0 / eff.gamma
    full = integrate_full_mf(cav, init, t_end, t_end / 200)
    spin = integrate_spin_mf(eff, init, t_end, t_end / 200, n_j=n, omega_frame=0.0)
    dev = max(float(np.max(np.abs(full.d - spin.d))),
              float(np.max(np.abs(full.e - spin.e)))) / math.sqrt(n)
    check("mean_field_elimination", dev < 0.01, f"sup dev {dev:.2e}")
    check("dark_cavity", abs(full.a[-1]) <= 1e-6 * math.sqrt(n),
          f"|a| {abs(full.a[-1]):.2e}")

    # coherence cascade identities
    from .coherence import CoherenceLadder, evolve_rate_equation, survival_fraction
    ex, ap = survival_fraction(100, 102, 10)
    check("survival_expansion", abs(ex - ap) < 2e-5, f"|exact-approx| {abs(ex-ap):.1e}")
    rng = np.random.default_rng(2)
    c0 = rng.normal(size=5) + 1j * rng.normal(size=5)
    lad = CoherenceLadder(n_j=30, n_j_prime=32, coherences=c0)
    ev = evolve_rate_equation(lad, t_end=50.0 / float(lad.big_w.min()))
    dev = abs(ev.ground_rung()[-1] - ev.asymptote) / np.linalg.norm(c0)
    check("cascade_asymptote", dev < 1e-8, f"dev {dev:.1e}")

    if skip_oracle:
        report("[SKIP] oracle cross-checks (disabled by flag)")
        return checks

    from .oracle import lindblad_effective, lindblad_threelevel
    from .squeezing import collective_exact

    # exact collective solution against the block solver
    model = _replace(hp_model(4, math.acos(0.5), delta=0.2),
                     gamma_minus=0.0, gamma_d=0.0)
    ts = np.array([0.0, 0.3, 1.0])
    dev = float(np.max(np.abs(
        lindblad_effective(4, model, ts, rtol=1e-12, atol=1e-15)
        - np.array([collective_exact(t, model, 4) for t in ts]))))
    check("collective_exact_vs_blocks", dev < 1e-10, f"dev {dev:.1e}")

    # shear orientation: reduced model against the driven three-level oracle
    from .meanfield import omega_for_cos_theta
    from .oracle import DickeLindblad
    from .trajectories import ModeRotation, Schedule
    n = 6
    delta = 0.1 * (n // 2)
    omega = omega_for_cos_theta(0.5, delta, n // 2)
    params = EffectiveSpinParams(n_atoms=n, omega=omega, delta=delta)
    ss = solve_steady_state(params, n // 2)
    rot = ModeRotation.from_angles(ss.theta_j, ss.phi_j)
    sched = Schedule(t_off=2.0, t_end=2.0, n_traj=1, d_n=3, seed=0, dt_sample=0.5)
    three = lindblad_threelevel(params, sched, rotation=rot,
                                omega_frame=ss.omega_b)
    cov_three = [m["m2_xcs_pcs"] - m["xcs"] * m["pcs"] for m in three.moments]
    hp6 = hp_model(n, ss.theta_j, delta)
    solver = DickeLindblad(n, hp6.chi_signed, hp6.gamma_check)
    blocks = solver.evolve(three.times)
    cov_eff = []
    for st in blocks:
        mm = solver.spin_moments(st)
        # the reduced-spin pair maps to (S_z, -S_y) up to scale
        cov_eff.append(-(mm["m2_sy_sz"] - mm["sy"] * mm["sz"]))
    slope_three = cov_three[-1] - cov_three[0]
    slope_eff = cov_eff[-1] - cov_eff[0]
    check("shear_orientation",
          slope_three * slope_eff > 0,
          f"three-level {slope_three:+.2e}, reduced {slope_eff:+.2e}")

    # small trajectory ensemble against the dense oracle (loose statistical gate)
    from .trajectories import run_ensemble
    sched = Schedule(t_off=0.8, t_end=1.2, n_traj=300, d_n=3, seed=7,
                     dt_sample=0.4)
    ens = run_ensemble(params, sched, threads=None, rotation=rot,
                       omega_frame=ss.omega_b)
    oracle = lindblad_threelevel(params, sched, rotation=rot,
                                 omega_frame=ss.omega_b)
    worst_z = 0.0
    for key in ("ne", "xcs", "pcs", "nc", "sx", "m2_xcs_xcs", "m2_pcs_pcs"):
        se = np.maximum(ens.stderr[key], 1e-12)
        worst_z = max(worst_z, float(np.max(
            np.abs(ens.mean[key] - oracle.moment(key)) / se)))
    check("trajectories_vs_oracle", worst_z < 6.0, f"max z {worst_z:.2f}")

    return checks


# ---------------------------------------------------------------------------
# entry points

def _resolve_threads(args_threads: int | None) -> int | None:
    if args_threads is not None:
        return args_threads
    env = os.environ.get("THREADS", "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            pass
    return None


def run(config_path: str, seed_override: int | None = None,
        threads_override: int | None = None) -> int:
    t_start = time.time()
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        cfg = validate_config(raw)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    outdir = cfg["output"]
    os.makedirs(outdir, exist_ok=True)
    seed = seed_override if seed_override is not None else cfg.get("seed", 0)
    threads = threads_override if threads_override is not None \
        else cfg.get("threads")
    warnings: list[str] = []
    manifest = {
        "version": __version__,
        "mode": cfg["mode"],
        "config_sha256": _config_hash(raw),
        "seed": seed,
        "threads": threads if threads is not None else "auto",
        "status": "running",
        "warnings": warnings,
    }
    status = EXIT_OK
    try:
        mode = cfg["mode"]
        if mode == "steady":
            _run_steady(cfg, outdir, warnings)
        elif mode == "effective":
            _run_effective(cfg, outdir, warnings)
        elif mode == "scan":
            _run_scan(cfg, outdir, warnings)
        elif mode == "trajectories":
            _run_trajectories(cfg, outdir, warnings, seed, threads)
        elif mode == "coherence":
            _run_coherence(cfg, outdir, warnings)
        elif mode == "verify":
            checks = run_verify(skip_oracle=cfg.get("skip_oracle", False))
            manifest["checks"] = [
                {"name": n, "passed": p, "detail": d} for n, p, d in checks]
            if not all(p for _, p, _ in checks):
                status = EXIT_CHECK_FAILED
        manifest["status"] = "ok" if status == EXIT_OK else "check_failed"
    except Exception as exc:  # numerical failures still get a manifest
        manifest["status"] = "failed"
        manifest["failure"] = f"{type(exc).__name__}: {exc}"
        print(f"error: {manifest['failure']}", file=sys.stderr)
        status = EXIT_NUMERICAL
    finally:
        manifest["wall_time_s"] = round(time.time() - t_start, 3)
        atomic_write_text(os.path.join(outdir, "manifest.json"),
                          json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return status


def emit_anchor_table(outdir: str) -> int:
    from .squeezing import evaluate_anchors
    rows = evaluate_anchors()
    os.makedirs(outdir, exist_ok=True)
    write_json(os.path.join(outdir, "anchors.json"), rows)
    write_csv(os.path.join(outdir, "anchors.csv"), {
        "symbol": [r["symbol"] for r in rows],
        "delta_over_NGamma": [r["delta_over_NGamma"] for r in rows],
        "cos_theta": [r["cos_theta"] for r in rows],
        "ref_dB": [r["ref_dB"] for r in rows],
        "computed_dB": [r["computed_dB"] for r in rows],
        "ref_t": [("" if r["ref_t"] is None else r["ref_t"]) for r in rows],
        "computed_t": [r["computed_t"] for r in rows],
        "status": [r["status"] for r in rows],
    })
    for r in rows:
        print(f"{r['symbol']:9s} ref {r['ref_dB']:6.1f} dB  "
              f"computed {r['computed_dB']:6.2f} dB  {r['status']}")
    return EXIT_OK if all(r["status"] == "pass" for r in rows) \
        else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spintwist",
        description="Driven-superradiant-cavity spin squeezing engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)

    p_verify = sub.add_parser("verify", help="run the fast consistency checks")
    p_verify.add_argument("--skip-oracle", action="store_true")

    p_anchors = sub.add_parser("anchors", help="benchmark working-point table")
    p_anchors.add_argument("--output", default="anchors_out")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.seed, _resolve_threads(args.threads))
    if args.command == "verify":
        checks = run_verify(skip_oracle=args.skip_oracle)
        return EXIT_OK if all(p for _, p, _ in checks) else EXIT_CHECK_FAILED
    if args.command == "anchors":
        return emit_anchor_table(args.output)
    return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
