"""Driven-superradiant-cavity spin squeezing: steady states, effective twisting
models, sector-blocked quantum trajectories, and squeezing optimization."""

__version__ = "0.1.0"

from .params import (CavityParams, EffectiveSpinParams, PhaseKind, PhaseLabel,
                     classify_phase, cooperativity, derive_effective)
from .meanfield import (BlochSteadyState, MeanFieldState, MixedPhaseError,
                        integrate_full_mf, integrate_spin_mf,
                        omega_for_cos_theta, solve_steady_state)
from .effective import (BerryEigenstate, Regime, SingleParticleRates,
                        TwistingModel, adiabatic_model, berry_eigenstate,
                        hp_model, hp_validity, weak_drive_model)
from .squeezing import (DecoherenceSpec, closed_form_limits, collective_exact,
                        evaluate_anchors, optimize, optimize_time, scan_grid,
                        xi2_expansion)
from .trajectories import (CovarianceReport, ModeRotation, Schedule,
                           SectoredState, apply_bilinear, covariance_report,
                           evolve_trajectory, init_state, run_ensemble,
                           updown_squeezing)
from .coherence import (CoherenceLadder, beta_coefficients,
                        evolve_rate_equation, survival_fraction)
from .oracle import DickeLindblad, lindblad_effective, lindblad_threelevel
