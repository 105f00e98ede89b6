"""Collective-decay eigenstate, its geometric connection, and effective twisting models."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class DomainError(ValueError):
    """Inputs outside the validity domain of an effective model."""


class Regime(Enum):
    ADIABATIC = "adiabatic"
    HPAE = "hpae"          # Holstein-Primakoff + adiabatic elimination
    WEAK_DRIVE = "weak_drive"


@dataclass(frozen=True)
class SingleParticleRates:
    gamma_e_up: float = 0.0    # feeds the effective spin-flip channel
    gamma_e_down: float = 0.0  # optionally feeds dephasing, scaled by excitation
    gamma_d: float = 0.0       # excitation-independent dephasing
    dephasing_tracks_excitation: bool = False

    def effective(self, theta: float) -> tuple[float, float]:
        """(gamma_minus, gamma_d) on the reduced two-level sphere at angle theta."""
        s2 = math.sin(theta / 2.0) ** 2
        gm = self.gamma_e_up * s2
        gd = self.gamma_e_down * s2 if self.dephasing_tracks_excitation else self.gamma_d
        return gm, gd


@dataclass(frozen=True)
class BerryEigenstate:
    """Truncated Dicke-ladder eigenstate of the collective lowering operator."""

    n_j: int
    o: float            # drive ratio |omega/omega_c|
    phi: float
    amps: np.ndarray    # coefficients over m = -n_j/2 ... n_j/2
    alpha: complex      # eigenvalue (n_j/2) o e^{i phi}

    @property
    def m_values(self) -> np.ndarray:
        j = self.n_j / 2.0
        return np.arange(-j, j + 1.0)

    @property
    def jz(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2 * self.m_values))

    @property
    def connection(self) -> float:
        """Sum over |a_m|^2 (n_j/2 + m): numerator of the azimuthal connection."""
        return self.n_j / 2.0 + self.jz

    @property
    def residual(self) -> float:
        """Norm of (J- - alpha)|state>; vanishes exponentially with n_j."""
        j = self.n_j / 2.0
        m = self.m_values
        lower = np.sqrt((j - m[:-1]) * (j + m[:-1] + 1.0)) * self.amps[1:]
        res = lower - self.alpha * self.amps[:-1]
        top = abs(self.alpha) * abs(self.amps[-1])
        return math.sqrt(float(np.sum(np.abs(res) ** 2)) + top ** 2)


def berry_eigenstate(n_j: int, o: float, phi: float = 0.0) -> BerryEigenstate:
    """Construct the lowering-operator eigenstate with eigenvalue (n_j/2) o e^{i phi}.

    The amplitude magnitudes follow a log-space recursion over m to tame the
    binomial-scale dynamic range; n_j must be a positive even integer and o < 1
    (o >= 1 is the mixed phase, where no such eigenstate exists).
    """
    if n_j < 2 or n_j % 2 != 0:
        raise DomainError(f"n_j must be a positive even integer, got {n_j}")
    if not 0.0 <= o < 1.0:
        raise DomainError(f"o must lie in [0, 1), got {o}")
    j = n_j / 2.0
    alpha = j * o * cmath.exp(1j * phi)
    m = np.arange(-j, j + 1.0)
    if o == 0.0:
        amps = np.zeros(n_j + 1, dtype=complex)
        amps[0] = 1.0
        return BerryEigenstate(n_j=n_j, o=o, phi=phi, amps=amps, alpha=alpha)
    # f_{m+1} = f_m + log(o j) - (1/2) log[(j - m)(j + m + 1)]
    steps = np.log(o * j) - 0.5 * np.log((j - m[:-1]) * (j + m[:-1] + 1.0))
    f = np.concatenate(([0.0], np.cumsum(steps)))
    # the finite ladder makes the lowering operator nilpotent, so the formal
    # series grows again above the second turning point; keep the physical
    # branch peaked near m = -j cos(theta) and drop the edge artifact
    m_cut = 0.5 * (-1.0 + math.sqrt(1.0 + 4.0 * (j * j * (1 - o * o) + j)))
    f = np.where(m > m_cut + 1.0, -np.inf, f)
    w = np.exp(2.0 * (f - f.max()))
    w /= w.sum()
    # gauge: a_{-j} real; the phase winds as e^{i (j + m) phi}
    amps = np.sqrt(w) * np.exp(1j * (j + m) * phi)
    return BerryEigenstate(n_j=n_j, o=o, phi=phi, amps=amps, alpha=alpha)


@dataclass(frozen=True)
class TwistingModel:
    """One-axis-twisting rate and decoherence rates of the reduced spin model.

    chi_check and gamma_check are magnitudes; chi_sign records the orientation
    of the shear (negative for positive detuning).
    """

    chi_check: float
    gamma_check: float
    chi_sign: int
    gamma_minus: float
    gamma_d: float
    omega_b: float
    theta: float
    phi: float
    regime: Regime
    f_j: float = 0.5
    f_up: float = 0.5
    valid: bool = True
    validity_note: str = ""
    meta: tuple = ()

    @property
    def chi_signed(self) -> float:
        return self.chi_sign * self.chi_check

    @property
    def ratio(self) -> float:
        """Twisting-to-collective-dephasing rate ratio."""
        if self.gamma_check == 0.0:
            return math.inf
        return self.chi_check / self.gamma_check


def _frame_frequency(delta: float, theta: float) -> float:
    return 0.5 * delta / math.cos(theta) - 0.5 * delta


def adiabatic_model(n_atoms: int, theta: float, delta: float, gamma: float = 1.0,
                    rates: SingleParticleRates = SingleParticleRates()) -> TwistingModel:
    """Small-detuning twisting model from the geometric-phase expansion.

    chi = |delta| sin^2(theta) / (2 N cos^3(theta)),
    gamma_check = gamma (2 delta sin(theta) / (N gamma cos^3(theta)))^2.
    """
    cos_th, sin_th = math.cos(theta), math.sin(theta)
    if cos_th <= 1e-12:
        raise DomainError("theta at or past pi/2 sits at the critical point")
    ng = n_atoms * gamma
    chi = abs(delta) * sin_th ** 2 / (2.0 * n_atoms * cos_th ** 3)
    gch = gamma * (2.0 * delta * sin_th / (ng * cos_th ** 3)) ** 2
    gm, gd = rates.effective(theta)
    adiabatic_ok = 16.0 * delta ** 2 / cos_th ** 2 <= 0.01 * ng ** 2 * cos_th ** 2
    return TwistingModel(
        chi_check=chi, gamma_check=gch, chi_sign=-_sign(delta),
        gamma_minus=gm, gamma_d=gd, omega_b=_frame_frequency(delta, theta),
        theta=theta, phi=math.pi / 2, regime=Regime.ADIABATIC,
        valid=adiabatic_ok,
        validity_note="" if adiabatic_ok else "detuning too large for the adiabatic form")


def hp_model(n_atoms: int, theta: float, delta: float, gamma: float = 1.0,
             phi: float = math.pi / 2, f_j: float = 0.5, f_up: float = 0.5,
             rates: SingleParticleRates = SingleParticleRates()) -> TwistingModel:
    """Bosonized twisting model valid beyond the small-detuning regime.

    With equal superposition weights the rates reduce to
    chi = (|delta|/2N) N^2 g^2 sin tan / D and
    gamma_check = 4 g delta^2 tan^2 (N^2 g^2 + 16 delta^2 sec^2) / D^2
    with D = N^2 g^2 cos^2 + 16 delta^2 sec^2.
    """
    cos_th, sin_th = math.cos(theta), math.sin(theta)
    if cos_th <= 1e-12:
        raise DomainError("theta at or past pi/2 sits at the critical point")
    if not (f_j > 0 and f_up > 0 and abs(f_j + f_up - 1.0) < 1e-12):
        raise DomainError("superposition weights must be positive and sum to 1")
    tan_th, sec_th = sin_th / cos_th, 1.0 / cos_th
    ng = n_atoms * gamma
    d_f = (f_j * ng * cos_th) ** 2 + 4.0 * (delta * sec_th) ** 2
    chi = (abs(delta) / n_atoms) * f_up * (f_j * ng * sin_th) ** 2 / (cos_th * d_f)
    gch = gamma * 4.0 * f_j * f_up * (delta * tan_th) ** 2 \
        * ((f_j * ng) ** 2 + 4.0 * (delta * sec_th) ** 2) / d_f ** 2
    gm, gd = rates.effective(theta)
    return TwistingModel(
        chi_check=chi, gamma_check=gch, chi_sign=-_sign(delta),
        gamma_minus=gm, gamma_d=gd, omega_b=_frame_frequency(delta, theta),
        theta=theta, phi=phi, regime=Regime.HPAE, f_j=f_j, f_up=f_up)


def weak_drive_model(n_atoms: int, omega: float, delta: float, chi: float,
                     gamma_delta: float,
                     rates: SingleParticleRates = SingleParticleRates(),
                     cavity=None) -> TwistingModel:
    """Twisting model with the excited state eliminated (weak-drive regime).

    Valid when the excited fraction omega^2/(4|A|^2) stays small, where
    A = delta + (chi + i gamma_delta/2) N/2.
    """
    if delta == 0.0:
        raise DomainError("delta = 0 produces no twisting in the weak-drive model")
    n = n_atoms
    a = delta + (chi + 0.5j * gamma_delta) * n / 2.0
    a2 = abs(a) ** 2
    chi_eff = abs(delta) * omega ** 2 \
        * abs(n * gamma_delta ** 2 / 16.0 + delta * chi / 2.0 + n * chi ** 2 / 4.0) \
        / (2.0 * a2 ** 2)
    gch = gamma_delta * (delta * omega) ** 2 / (4.0 * a2 ** 2)
    # excited fraction fixes the effective polar angle and the flip/dephase rates
    s_half_sq = min(omega ** 2 / (4.0 * a2), 1.0)
    theta = 2.0 * math.asin(math.sqrt(s_half_sq))
    gm, gd = rates.effective(theta)
    meta = ()
    if cavity is not None:
        meta = (("ratio_large_delta", cavity.Delta / cavity.kappa),
                ("ratio_near_resonant",
                 n * cavity.g_c ** 2 / (4.0 * delta * cavity.kappa)))
    ok = s_half_sq <= 0.05
    return TwistingModel(
        chi_check=chi_eff, gamma_check=gch, chi_sign=-_sign(delta),
        gamma_minus=gm, gamma_d=gd, omega_b=_frame_frequency(delta, theta),
        theta=theta, phi=math.pi / 2, regime=Regime.WEAK_DRIVE,
        valid=ok, validity_note="" if ok else "excited fraction above 5%", meta=meta)


@dataclass(frozen=True)
class ValidityReport:
    ratio: float        # squeezing timescale over the fast-mode relaxation time
    passes: bool
    t_opt: float
    relaxation_rate: float


def hp_validity(model: TwistingModel, n_atoms: int, gamma: float = 1.0,
                threshold: float = 10.0) -> ValidityReport:
    """Check that squeezing is slow compared to the eliminated mode's relaxation."""
    from .squeezing import optimize_time
    relax = model.f_j * n_atoms * gamma * math.cos(model.theta)
    t_opt, _ = optimize_time(model, n_atoms)
    ratio = t_opt * relax
    return ValidityReport(ratio=ratio, passes=ratio >= threshold,
                          t_opt=t_opt, relaxation_rate=relax)


def _sign(x: float) -> int:
    return 1 if x >= 0 else -1
