"""Mean-field dynamics of the cavity+spin system and steady-state Bloch angles."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .params import (CavityParams, EffectiveSpinParams, PhaseKind, PhaseLabel,
                     classify_phase)

RTOL = 1e-9
ATOL = 1e-12


class ConvergenceError(RuntimeError):
    """Integrator or root finder failed; carries the last good state if any."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class MixedPhaseError(RuntimeError):
    """No polarized steady state exists for the requested parameters."""


@dataclass
class MeanFieldState:
    """Cavity amplitude plus Schwinger amplitudes for the three internal states.

    Normalization: |d|^2 + |e|^2 + |u|^2 = N.
    """

    a: complex = 0j
    d: complex = 0j
    e: complex = 0j
    u: complex = 0j
    t: float = 0.0

    @classmethod
    def bloch(cls, n_j: float, theta: float, phi: float,
              n_up: float = 0.0, a: complex = 0j) -> "MeanFieldState":
        """State with the two-level sector at Bloch angles (theta, phi)."""
        root = math.sqrt(n_j)
        return cls(a=a,
                   d=root * math.cos(theta / 2.0),
                   e=root * math.sin(theta / 2.0) * cmath.exp(-1j * phi),
                   u=math.sqrt(n_up))


@dataclass
class MeanFieldSeries:
    t: np.ndarray
    a: np.ndarray
    d: np.ndarray
    e: np.ndarray
    u: np.ndarray

    def final(self) -> MeanFieldState:
        return MeanFieldState(a=self.a[-1], d=self.d[-1], e=self.e[-1],
                              u=self.u[-1], t=self.t[-1])

    def two_level_norm(self) -> np.ndarray:
        return np.abs(self.d) ** 2 + np.abs(self.e) ** 2

    def shelf_coherence(self) -> np.ndarray:
        """|u* d|^2 + |u* e|^2, conserved by the spin-only flow."""
        return (np.abs(np.conj(self.u) * self.d) ** 2
                + np.abs(np.conj(self.u) * self.e) ** 2)

    def to_csv(self, path) -> None:
        cols = {"t": self.t, "re_a": self.a.real, "im_a": self.a.imag,
                "re_d": self.d.real, "im_d": self.d.imag,
                "re_e": self.e.real, "im_e": self.e.imag,
                "re_u": self.u.real, "im_u": self.u.imag}
        from .io_utils import write_csv
        write_csv(path, cols)


@dataclass(frozen=True)
class BlochSteadyState:
    theta_j: float           # polar angle, 0 <= theta <= pi/2
    phi_j: float             # azimuthal angle
    omega_b: float           # frame frequency from adiabatic phase accumulation
    n_j: int
    phase: PhaseLabel
    cavity_coherence: complex  # prop. to <J-> + i Omega/gamma; 0 = dark cavity


def _sample_times(t_end: float, dt_out: float) -> np.ndarray:
    n = max(int(round(t_end / dt_out)), 1)
    return np.linspace(0.0, t_end, n + 1)


def _integrate(rhs, y0, t_end, dt_out):
    times = _sample_times(t_end, dt_out)
    sol = solve_ivp(rhs, (0.0, t_end), y0, t_eval=times,
                    rtol=RTOL, atol=ATOL, method="DOP853")
    if not sol.success:
        last = sol.y[:, -1] if sol.y.size else y0
        raise ConvergenceError(f"mean-field integration failed: {sol.message}",
                               last_state=last)
    return times, sol.y


def integrate_full_mf(params: CavityParams, init: MeanFieldState,
                      t_end: float, dt_out: float) -> MeanFieldSeries:
    """Integrate the coupled cavity (a) and spin (d, e) amplitude equations.

    In the bad-cavity limit this reduces to the two-level flow of
    integrate_spin_mf with gamma = 4 g_c^2/kappa and omega = 4 epsilon g_c/kappa.
    The shelf amplitude u is uncoupled and stays constant.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    g, kap, eps, delta = params.g_c, params.kappa, params.epsilon, params.delta

    def rhs(_t, y):
        a, d, e = y
        da = eps - 1j * g * np.conj(d) * e - 0.5 * kap * a
        dd = -1j * g * np.conj(a) * e
        de = 1j * delta * e - 1j * g * a * d
        return [da, dd, de]

    y0 = np.array([init.a, init.d, init.e], dtype=complex)
    times, y = _integrate(rhs, y0, t_end, dt_out)
    u = np.full_like(times, init.u, dtype=complex)
    return MeanFieldSeries(t=times, a=y[0], d=y[1], e=y[2], u=u)


def integrate_spin_mf(params: EffectiveSpinParams, init: MeanFieldState,
                      t_end: float, dt_out: float,
                      n_j: float | None = None,
                      omega_frame: float | None = None) -> MeanFieldSeries:
    """Integrate the two-level amplitude equations in the omega_b rotating frame.

    omega_frame defaults to the steady-state frame frequency of the sector of
    size n_j (zero when no polarized solution exists).  u evolves only through
    its global phase, which vanishes in this frame.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if n_j is None:
        n_j = abs(init.d) ** 2 + abs(init.e) ** 2
    if omega_frame is None:
        omega_frame = 0.0
        if params.delta != 0.0 and n_j >= 1:
            try:
                omega_frame = solve_steady_state(params, int(round(n_j))).omega_b
            except MixedPhaseError:
                omega_frame = 0.0
    om, delta, gam = params.omega, params.delta, params.gamma
    wb = omega_frame

    def rhs(_t, y):
        d, e = y
        dd = -1j * 0.5 * np.conj(om) * e + 1j * wb * d + 0.5 * gam * abs(e) ** 2 * d
        de = -1j * 0.5 * om * d + 1j * (delta + wb) * e - 0.5 * gam * abs(d) ** 2 * e
        return [dd, de]

    y0 = np.array([init.d, init.e], dtype=complex)
    times, y = _integrate(rhs, y0, t_end, dt_out)
    a = np.zeros_like(times, dtype=complex)
    u = np.full_like(times, init.u, dtype=complex)
    return MeanFieldSeries(t=times, a=a, d=y[0], e=y[1], u=u)


def steady_constraint(theta: float, omega: float, delta: float,
                      n_j: float, gamma: float) -> float:
    """G(theta) = (delta tan)^2 + (n_j gamma sin / 2)^2 - omega^2; root gives theta_j."""
    return ((delta * math.tan(theta)) ** 2
            + (0.5 * n_j * gamma * math.sin(theta)) ** 2
            - omega ** 2)


def solve_steady_state(params: EffectiveSpinParams, n_j: int) -> BlochSteadyState:
    """Polarized-phase steady-state angles and frame frequency for one sector.

    Solves the constraint pair omega cot(theta) cos(phi) = delta and
    (omega/2) sin(phi) = (n_j gamma/4) sin(theta); returns the branch
    continuously connected to the resonant solution (smallest theta).
    """
    mag = abs(params.omega)
    arg = cmath.phase(params.omega) if mag > 0 else 0.0
    delta, gam = params.delta, params.gamma
    label = classify_phase(params, n_j)

    if mag == 0.0:
        return BlochSteadyState(theta_j=0.0, phi_j=math.pi / 2 - arg, omega_b=0.0,
                                n_j=n_j, phase=label,
                                cavity_coherence=_cavity_coherence(0.0, 0.0, params))

    g = lambda th: steady_constraint(th, mag, delta, n_j, gam)
    if delta == 0.0:
        if label.kind is PhaseKind.MIXED:
            raise MixedPhaseError(
                f"|omega| = {mag} exceeds omega_c = {label.omega_c}; "
                "no polarized steady state")
        theta = math.asin(min(mag / label.omega_c, 1.0))
    else:
        # G is strictly increasing on (0, pi/2) and diverges at pi/2, so a
        # bracketing root always exists for delta != 0
        hi = math.pi / 2 - 1e-3
        while g(hi) < 0 and hi < math.pi / 2 - 1e-15:
            hi = math.pi / 2 - (math.pi / 2 - hi) * 1e-3
        if g(hi) < 0:
            raise ConvergenceError("could not bracket the steady-state angle")
        theta = brentq(g, 0.0, hi, xtol=1e-14, rtol=8.9e-16)

    sin_phi = 0.5 * n_j * gam * math.sin(theta) / mag
    cos_phi = delta * math.tan(theta) / mag
    phi = math.atan2(sin_phi, cos_phi) - arg
    cos_th = math.cos(theta)
    omega_b = 0.5 * delta / cos_th - 0.5 * delta if cos_th > 0 else math.inf
    return BlochSteadyState(theta_j=theta, phi_j=phi, omega_b=omega_b, n_j=n_j,
                            phase=label,
                            cavity_coherence=_cavity_coherence(theta, phi, params,
                                                               n_j=n_j))


def _cavity_coherence(theta: float, phi: float, params: EffectiveSpinParams,
                      n_j: float = 0.0, cavity: CavityParams | None = None) -> complex:
    # <a> prop. to i(<J-> + i omega/gamma); exactly zero on the resonant dark state
    j_minus = 0.5 * n_j * math.sin(theta) * cmath.exp(-1j * phi)
    shifted = j_minus + 1j * params.omega / params.gamma
    scale = cavity.g_c / (cavity.kappa / 2.0) if cavity is not None else 1.0
    return 1j * scale * shifted


def omega_for_cos_theta(cos_theta: float, delta: float, n_j: float,
                        gamma: float = 1.0) -> float:
    """Drive strength that pins the steady state at the requested cos(theta_j)."""
    if not 0.0 < cos_theta <= 1.0:
        raise ValueError("cos_theta must be in (0, 1]")
    sin_th = math.sqrt(1.0 - cos_theta ** 2)
    tan_th = sin_th / cos_theta
    return math.sqrt((delta * tan_th) ** 2 + (0.5 * n_j * gamma * sin_th) ** 2)
