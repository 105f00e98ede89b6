"""Physical parameter containers, derived effective quantities, and phase classification."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum


class InvalidParameterError(ValueError):
    """Raised when physical parameters violate their domain."""


class PhaseKind(Enum):
    POLARIZED = "polarized"
    MIXED = "mixed"
    CRITICAL = "critical"


# relative |Omega - Omega_c| window classified as critical; a guard, not physics
CRITICAL_TOL = 1e-9


@dataclass(frozen=True)
class CavityParams:
    """Driven lossy cavity coupled to the lower leg of a three-level ensemble.

    Rates are angular frequencies in a common unit; times elsewhere are in the
    inverse of that unit.
    """

    g_c: float        # single-photon coupling half-Rabi
    kappa: float      # cavity power decay rate
    epsilon: float    # cavity drive amplitude
    Delta: float      # cavity-atom detuning
    delta: float      # drive-atom detuning
    n_atoms: int

    def __post_init__(self):
        if self.kappa <= 0:
            raise InvalidParameterError(f"kappa must be positive, got {self.kappa}")
        if self.n_atoms < 1:
            raise InvalidParameterError(f"n_atoms must be >= 1, got {self.n_atoms}")

    @property
    def bad_cavity_ratio(self) -> float:
        """kappa / (sqrt(N) g_c); adiabatic elimination is good when >> 1."""
        if self.g_c == 0:
            return math.inf
        return self.kappa / (math.sqrt(self.n_atoms) * abs(self.g_c))


@dataclass(frozen=True)
class EffectiveSpinParams:
    """Spin model after the cavity mode has been eliminated.

    The internal unit convention is gamma = 1 with times in 1/gamma, but any
    consistent unit works.
    """

    n_atoms: int
    omega: complex        # effective Rabi frequency (complex phase allowed)
    delta: float          # drive detuning
    gamma: float = 1.0    # collective decay rate
    chi: float = 0.0      # elastic collective interaction
    gamma_delta: float = 0.0   # collective decay at finite cavity detuning
    gamma_e_up: float = 0.0    # single-particle decay, excited -> shelf state
    gamma_e_down: float = 0.0  # single-particle decay, excited -> ground state
    gamma_d: float = 0.0       # single-particle dephasing

    def __post_init__(self):
        if self.gamma < 0:
            raise InvalidParameterError(f"gamma must be >= 0, got {self.gamma}")
        if self.n_atoms < 1:
            raise InvalidParameterError(f"n_atoms must be >= 1, got {self.n_atoms}")

    @property
    def gamma_e(self) -> float:
        """Total spontaneous emission rate out of the excited state."""
        return self.gamma_e_up + self.gamma_e_down

    def with_omega(self, omega: complex) -> "EffectiveSpinParams":
        return replace(self, omega=omega)


@dataclass(frozen=True)
class PhaseLabel:
    kind: PhaseKind
    omega_c: float                     # critical drive for the queried sector
    cooperativity: float | None = None  # 4 g_c^2 / (kappa gamma_e), if known


def derive_effective(params: CavityParams,
                     gamma_e_up: float = 0.0,
                     gamma_e_down: float = 0.0,
                     gamma_d: float = 0.0) -> EffectiveSpinParams:
    """Eliminate the cavity: collective rates from (g_c, kappa, epsilon, Delta).

    gamma = 4 g_c^2 / kappa, omega = 4 epsilon g_c / kappa,
    gamma_delta = g_c^2 kappa / (Delta^2 + kappa^2/4),
    chi = g_c^2 Delta / (Delta^2 + kappa^2/4).
    """
    g2 = params.g_c ** 2
    lorentz = params.Delta ** 2 + params.kappa ** 2 / 4.0
    return EffectiveSpinParams(
        n_atoms=params.n_atoms,
        omega=4.0 * params.epsilon * params.g_c / params.kappa,
        delta=params.delta,
        gamma=4.0 * g2 / params.kappa,
        chi=g2 * params.Delta / lorentz,
        gamma_delta=g2 * params.kappa / lorentz,
        gamma_e_up=gamma_e_up,
        gamma_e_down=gamma_e_down,
        gamma_d=gamma_d,
    )


def cooperativity(params: CavityParams, gamma_e: float) -> float:
    """Single-atom cooperativity 4 g_c^2 / (kappa gamma_e)."""
    if gamma_e <= 0:
        raise InvalidParameterError("gamma_e must be positive for a cooperativity")
    return 4.0 * params.g_c ** 2 / (params.kappa * gamma_e)


def omega_critical(params: EffectiveSpinParams, n_j: int) -> float:
    """Critical drive Omega_c = n_j gamma / 2 separating polarized and mixed phases."""
    return n_j * params.gamma / 2.0


def classify_phase(params: EffectiveSpinParams, n_j: int,
                   tol: float = CRITICAL_TOL,
                   cavity: CavityParams | None = None) -> PhaseLabel:
    """Label the delta = 0 steady-state phase of the n_j-atom sector.

    For delta != 0 the sharp transition is smoothed; callers interested in that
    case should rely on the steady-state solver converging instead.
    """
    if n_j < 1:
        raise InvalidParameterError(f"n_j must be >= 1, got {n_j}")
    omega_c = omega_critical(params, n_j)
    coop = None
    if cavity is not None and params.gamma_e > 0:
        coop = cooperativity(cavity, params.gamma_e)
    mag = abs(params.omega)
    if omega_c > 0 and abs(mag - omega_c) <= tol * omega_c:
        kind = PhaseKind.CRITICAL
    elif mag < omega_c:
        kind = PhaseKind.POLARIZED
    else:
        kind = PhaseKind.MIXED
    return PhaseLabel(kind=kind, omega_c=omega_c, cooperativity=coop)
