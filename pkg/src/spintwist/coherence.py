"""Coherence transfer between sectors after the drive is switched off.

With the drive off, a coherence between symmetric states carrying equal
excitation numbers cascades down a bidiagonal ladder in the excitation number;
each rung keeps the ratio of the geometric to the arithmetic mean of the two
superradiant rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .params import InvalidParameterError


def ladder_rates(n_j: int, n_j_prime: int, n_e_max: int,
                 gamma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Geometric (w) and arithmetic (W) mean decay rates for rungs 1 ... n_e_max.

    At rung n_e the ket holds n_down = n_j - n_e ground atoms and the bra
    n_j_prime - n_e; both must stay nonnegative.
    """
    if n_e_max > min(n_j, n_j_prime):
        raise InvalidParameterError(
            f"n_e_max = {n_e_max} exceeds min sector size {min(n_j, n_j_prime)}")
    ne = np.arange(1, n_e_max + 1, dtype=float)
    rate_ket = (n_j - ne + 1.0) * ne
    rate_bra = (n_j_prime - ne + 1.0) * ne
    w = gamma * np.sqrt(rate_ket * rate_bra)
    big_w = gamma * 0.5 * (rate_ket + rate_bra)
    return w, big_w


def beta_coefficients(n_j: int, n_j_prime: int, n_e_max: int) -> np.ndarray:
    """beta = w/W per rung; equals 1 iff the two sectors have equal size."""
    w, big_w = ladder_rates(n_j, n_j_prime, n_e_max)
    return w / big_w


def survival_fraction(n_j: int, n_j_prime: int, n_e: int) -> tuple[float, float]:
    """(exact product of beta factors, quadratic-in-sector-gap approximation).

    The exact product is accumulated in log space; the approximation is
    1 - n_e (n_j - n_j')^2 / (8 n_j (n_j - n_e)).
    """
    if n_e == 0:
        return 1.0, 1.0
    beta = beta_coefficients(n_j, n_j_prime, n_e)
    exact = math.exp(float(np.sum(np.log(beta))))
    approx = 1.0 - n_e * (n_j - n_j_prime) ** 2 / (8.0 * n_j * (n_j - n_e))
    return exact, approx


@dataclass
class CoherenceLadder:
    """Inter-sector coherences indexed by excitation number, highest rung first."""

    n_j: int
    n_j_prime: int
    coherences: np.ndarray   # complex, order n_e = n_e_max ... 0
    gamma: float = 1.0

    def __post_init__(self):
        self.coherences = np.asarray(self.coherences, dtype=complex)
        n_e_max = len(self.coherences) - 1
        self.w, self.big_w = ladder_rates(self.n_j, self.n_j_prime, n_e_max,
                                          self.gamma)

    @property
    def n_e_max(self) -> int:
        return len(self.coherences) - 1

    def left_zero_mode(self) -> np.ndarray:
        """Left eigenvector of the cascade with zero eigenvalue, ordered like
        the ladder: component at rung n_e is the product of beta down to 0."""
        beta = self.w / self.big_w
        prods = np.concatenate(([1.0], np.cumprod(beta)))   # n_e = 0 ... max
        return prods[::-1]

    def asymptote(self) -> complex:
        """Ground-rung coherence at late times from the zero-mode projection."""
        return complex(np.dot(self.left_zero_mode(), self.coherences))


@dataclass
class CoherenceEvolution:
    times: np.ndarray
    ladders: np.ndarray        # (n_times, n_e_max + 1), highest rung first
    asymptote: complex

    def ground_rung(self) -> np.ndarray:
        return self.ladders[:, -1]


def evolve_rate_equation(init: CoherenceLadder, t_end: float,
                         n_out: int = 200, rtol: float = 1e-11,
                         atol: float = 1e-14) -> CoherenceEvolution:
    """Integrate the bidiagonal cascade d c_ne/dt = w_{ne+1} c_{ne+1} - W_ne c_ne."""
    n_e_max = init.n_e_max
    w, big_w = init.w, init.big_w

    def rhs(_t, c):
        # c ordered from rung n_e_max down to 0
        out = np.empty_like(c)
        for k in range(n_e_max + 1):
            ne = n_e_max - k
            val = -big_w[ne - 1] * c[k] if ne >= 1 else 0.0 * c[k]
            if ne + 1 <= n_e_max:
                val = val + w[ne] * c[k - 1]
            out[k] = val
        return out

    times = np.linspace(0.0, t_end, n_out)
    sol = solve_ivp(rhs, (0.0, t_end), init.coherences.astype(complex),
                    t_eval=times, rtol=rtol, atol=atol, method="DOP853")
    if not sol.success:
        raise RuntimeError(f"cascade integration failed: {sol.message}")
    return CoherenceEvolution(times=times, ladders=sol.y.T.copy(),
                              asymptote=init.asymptote())


def ladder_csv_columns(n_j: int, n_j_prime: int, n_e_max: int,
                       gamma: float = 1.0) -> dict:
    """Columns n_e, w, W, beta, cumulative_survival for the report CSV."""
    w, big_w = ladder_rates(n_j, n_j_prime, n_e_max, gamma)
    beta = w / big_w
    cum = np.cumprod(beta)
    return {
        "n_e": np.arange(1, n_e_max + 1),
        "w": w,
        "W": big_w,
        "beta": beta,
        "cumulative_survival": cum,
    }
