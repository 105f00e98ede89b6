"""Sector-blocked quantum-trajectory Monte Carlo with generalized squeezing readout.

The conserved combined population of the driven two-level manifold splits the
wavefunction into fixed-size sectors; every evolution operator is block
diagonal, so a trajectory is a stack of per-sector amplitude arrays over the
excitation number.
"""

from __future__ import annotations

import cmath
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .params import EffectiveSpinParams, InvalidParameterError
from .meanfield import solve_steady_state

DT_CAP_FACTOR = 250.0       # dt_base <= 1/(250 N gamma)
DT_UNDERFLOW_FACTOR = 1e-9  # abort below 1e-9/(N gamma)

# mode indices in the (d, e, u) bosonic basis
D, E, U = 0, 1, 2


class TrajectoryAborted(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# state and mode rotation

@dataclass(frozen=True)
class ModeRotation:
    """Unitary mapping (d, e, u) modes to (c, s, j): mean-field, reduced-spin
    fluctuation, and fast-mode directions."""

    v: np.ndarray
    theta: float
    phi: float
    f_j: float = 0.5
    f_up: float = 0.5

    @classmethod
    def from_angles(cls, theta: float, phi: float,
                    f_j: float = 0.5, f_up: float = 0.5) -> "ModeRotation":
        ch, sh = math.cos(theta / 2.0), math.sin(theta / 2.0)
        ph = cmath.exp(-1j * phi)
        rj, ru = math.sqrt(f_j), math.sqrt(f_up)
        v = np.array([
            [rj * ch, rj * sh * ph, ru],
            [-ru * ch, -ru * sh * ph, rj],
            [sh, -ch * ph, 0.0],
        ], dtype=complex)
        return cls(v=v, theta=theta, phi=phi, f_j=f_j, f_up=f_up)

    def unitarity_defect(self) -> float:
        return float(np.max(np.abs(self.v @ self.v.conj().T - np.eye(3))))

    def fluctuation_matrices(self) -> dict[str, np.ndarray]:
        """Bilinear matrices for the two quadrature pairs and the Bloch counter."""
        def pair(a, b):
            m = np.outer(self.v[a], self.v[b].conj())
            return 0.5 * (m + m.conj().T), (m - m.conj().T) / 2j
        x_cj, p_cj = pair(0, 2)
        x_cs, p_cs = pair(0, 1)
        n_c = np.outer(self.v[0], self.v[0].conj())
        return {"xcj": x_cj, "pcj": p_cj, "xcs": x_cs, "pcs": p_cs, "nc": n_c}


def updown_matrices() -> dict[str, np.ndarray]:
    """Pseudo-spin bilinears on the shelf/ground pair, with z = (n_u - n_d)/2."""
    sx = np.zeros((3, 3), complex)
    sx[U, D] = sx[D, U] = 0.5
    sy = np.zeros((3, 3), complex)
    sy[U, D] = -0.5j
    sy[D, U] = 0.5j
    sz = np.diag([-0.5, 0.0, 0.5]).astype(complex)
    return {"sx": sx, "sy": sy, "sz": sz}


FLUCTUATION_KEYS = ("xcj", "pcj", "xcs", "pcs")
UPDOWN_KEYS = ("sx", "sy", "sz")


@dataclass
class SectoredState:
    """Amplitudes over (sector, excitation number), padded to the widest sector.

    Row s holds the sector with nj_min + s atoms in the driven manifold; the
    column index is the excitation number n_e.  Padding entries stay exactly
    zero under every operation.
    """

    amps: np.ndarray
    nj_min: int
    n_atoms: int

    @property
    def n_sectors(self) -> int:
        return self.amps.shape[0]

    @property
    def nj(self) -> np.ndarray:
        return self.nj_min + np.arange(self.n_sectors)

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2))

    def sector_norms(self) -> np.ndarray:
        return np.sum(np.abs(self.amps) ** 2, axis=1)

    def normalized(self) -> "SectoredState":
        return replace(self, amps=self.amps / math.sqrt(self.norm2()))

    def copy(self) -> "SectoredState":
        return replace(self, amps=self.amps.copy())

    def amplitude(self, nj: int, ne: int) -> complex:
        s = nj - self.nj_min
        if not (0 <= s < self.n_sectors and 0 <= ne <= nj):
            return 0j
        return complex(self.amps[s, ne])


def init_state(n_atoms: int, d_n: int, varphi: float = 0.0) -> SectoredState:
    """Binomial superposition over sectors, all population unexcited.

    Sector nj carries amplitude e^{i nj varphi} sqrt(binom(N, nj)) / 2^{N/2},
    restricted to the window N/2 +- d_n and renormalized.
    """
    if not 0 <= d_n <= n_atoms // 2:
        raise InvalidParameterError(f"d_n must lie in [0, N/2], got {d_n}")
    center = n_atoms // 2
    lo, hi = max(center - d_n, 0), min(center + d_n, n_atoms)
    nj = np.arange(lo, hi + 1)
    logw = gammaln(n_atoms + 1) - gammaln(nj + 1) - gammaln(n_atoms - nj + 1) \
        - n_atoms * math.log(2.0)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    amps = np.zeros((len(nj), hi + 1), dtype=complex)
    amps[:, 0] = np.sqrt(w) * np.exp(1j * nj * varphi)
    return SectoredState(amps=amps, nj_min=lo, n_atoms=n_atoms)


def window_probability(n_atoms: int, d_n: int) -> float:
    """Probability mass of the binomial sector distribution inside the window."""
    center = n_atoms // 2
    lo, hi = max(center - d_n, 0), min(center + d_n, n_atoms)
    nj = np.arange(0, n_atoms + 1)
    logw = gammaln(n_atoms + 1) - gammaln(nj + 1) - gammaln(n_atoms - nj + 1) \
        - n_atoms * math.log(2.0)
    w = np.exp(logw)
    return float(w[lo:hi + 1].sum() / w.sum())


class _Tables:
    """Precomputed matrix-element factors on the padded (sector, n_e) grid."""

    def __init__(self, state: SectoredState):
        n_sec, width = state.amps.shape
        self.shape = (n_sec, width)
        nj = state.nj.astype(float)[:, None]
        ne = np.arange(width, dtype=float)[None, :]
        n = float(state.n_atoms)
        mask = ne <= nj
        self.mask = mask
        nd = np.where(mask, nj - ne, 0.0)
        self.ne = np.where(mask, ne, 0.0)
        self.nd = nd
        self.nu = np.where(mask, n - nj, 0.0)
        # within-sector lowering: (s, n) -> (s, n-1)
        self.f_de = np.sqrt(np.where(mask, (nd + 1.0) * ne, 0.0))
        # within-sector raising: (s, n) -> (s, n+1)
        self.f_ed = np.sqrt(np.where(mask, (ne + 1.0) * nd, 0.0))
        # shelf couplings: sector changes by one
        self.f_ud = np.sqrt(np.where(mask, (n - nj + 1.0) * nd, 0.0))
        self.f_du = np.sqrt(np.where(mask, (nd + 1.0) * (n - nj), 0.0))
        self.f_ue = np.sqrt(np.where(mask, (n - nj + 1.0) * ne, 0.0))
        self.f_eu = np.sqrt(np.where(mask, (ne + 1.0) * (n - nj), 0.0))


def apply_bilinear(state: SectoredState, m: np.ndarray,
                   tables: _Tables | None = None) -> tuple[SectoredState, float]:
    """Apply sum_{mu nu} M[mu, nu] a_mu^dag a_nu; returns (unnormalized image,
    leakage norm dropped outside the sector window)."""
    if tables is None:
        tables = _Tables(state)
    a = state.amps
    out = (m[D, D] * tables.nd + m[E, E] * tables.ne + m[U, U] * tables.nu) * a
    leak2 = 0.0
    if m[D, E] != 0:  # d^dag e: n_e -> n_e - 1
        out[:, :-1] += m[D, E] * tables.f_de[:, 1:] * a[:, 1:]
    if m[E, D] != 0:  # e^dag d: n_e -> n_e + 1
        out[:, 1:] += m[E, D] * tables.f_ed[:, :-1] * a[:, :-1]
    if m[U, D] != 0:  # u^dag d: sector drops by one
        out[:-1, :] += m[U, D] * tables.f_ud[1:, :] * a[1:, :]
        leak2 += abs(m[U, D]) ** 2 * float(np.sum(np.abs(tables.f_ud[0] * a[0]) ** 2))
    if m[D, U] != 0:  # d^dag u: sector grows by one
        out[1:, :] += m[D, U] * tables.f_du[:-1, :] * a[:-1, :]
        leak2 += abs(m[D, U]) ** 2 * float(np.sum(np.abs(tables.f_du[-1] * a[-1]) ** 2))
    if m[U, E] != 0:  # u^dag e: sector and excitation both drop
        out[:-1, :-1] += m[U, E] * tables.f_ue[1:, 1:] * a[1:, 1:]
        leak2 += abs(m[U, E]) ** 2 * float(np.sum(np.abs(tables.f_ue[0] * a[0]) ** 2))
    if m[E, U] != 0:  # e^dag u: sector and excitation both grow
        out[1:, 1:] += m[E, U] * tables.f_eu[:-1, :-1] * a[:-1, :-1]
        leak2 += abs(m[E, U]) ** 2 * float(np.sum(np.abs(tables.f_eu[-1] * a[-1]) ** 2))
    return replace(state, amps=out), math.sqrt(leak2)


# ---------------------------------------------------------------------------
# schedule and per-trajectory evolution

@dataclass(frozen=True)
class Schedule:
    """Drive timing, stepper controls, and ensemble bookkeeping."""

    t_off: float
    t_end: float
    n_traj: int
    d_n: int
    seed: int
    dt_base: float | None = None       # default: the 1/(250 N gamma) cap
    dt_shrink_factor: float = 5.0
    shrink_window_steps: int = 500
    dt_sample: float | None = None     # default: t_end / 160
    max_jump_prob: float = 0.05
    second_order: bool = False
    unshifted: bool = False            # unravel with l = J- and the drive in H
    varphi: float = 0.0

    def resolved_dt(self, n_atoms: int, gamma: float) -> float:
        cap = 1.0 / (DT_CAP_FACTOR * n_atoms * gamma)
        if self.dt_base is None:
            return cap
        if self.dt_base > cap * (1 + 1e-12):
            raise InvalidParameterError(
                f"dt_base {self.dt_base} exceeds the cap {cap}")
        return self.dt_base

    def sample_times(self) -> np.ndarray:
        dt = self.dt_sample if self.dt_sample is not None else self.t_end / 160.0
        n = max(int(round(self.t_end / dt)), 1)
        times = np.linspace(0.0, self.t_end, n + 1)
        if not np.any(np.isclose(times, self.t_off, rtol=0, atol=1e-12)):
            times = np.sort(np.append(times, self.t_off))
        return times


@dataclass
class MomentSeries:
    """Per-trajectory quantum expectations sampled on a fixed time grid."""

    times: np.ndarray
    values: dict[str, np.ndarray]
    sector_norms: np.ndarray
    coherences: np.ndarray | None
    max_jump_prob: float
    n_jumps: int
    leakage: float
    final: SectoredState


def _traj_rng(seed: int, traj_index: int) -> np.random.Generator:
    # counter-based streams: one Philox key per (master seed, trajectory)
    return np.random.Generator(np.random.Philox(key=[seed, traj_index]))


class _Uniforms:
    """Buffered draws from one trajectory stream; one uniform per step."""

    def __init__(self, rng, block=4096):
        self._rng = rng
        self._block = block
        self._buf = rng.random(block)
        self._i = 0

    def next(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self._rng.random(self._block)
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


def _moment_set(state: SectoredState, tables: _Tables, flucts: dict,
                uds: dict, phases: np.ndarray) -> tuple[dict, float]:
    """First and symmetrized second moments in the rotated measurement frame."""
    psi = state.amps * phases[:, None]
    rotated = replace(state, amps=psi)
    leak = 0.0
    images = {}
    for key in FLUCTUATION_KEYS:
        img, lk = apply_bilinear(rotated, flucts[key], tables)
        images[key] = img.amps
        leak += lk
    nc_img, lk = apply_bilinear(rotated, flucts["nc"], tables)
    leak += lk
    for key in UPDOWN_KEYS:
        img, lk = apply_bilinear(rotated, uds[key], tables)
        images[key] = img.amps
        leak += lk
    out = {}
    conj = psi.conj()
    for key, img in images.items():
        out[key] = float(np.real(np.sum(conj * img)))
    out["nc"] = float(np.real(np.sum(conj * nc_img.amps)))
    out["ne"] = float(np.real(np.sum(conj * tables.ne * psi)))
    keys = FLUCTUATION_KEYS
    for i, a in enumerate(keys):
        for b in keys[i:]:
            out[f"m2_{a}_{b}"] = float(np.real(np.sum(images[a].conj() * images[b])))
    for i, a in enumerate(UPDOWN_KEYS):
        for b in UPDOWN_KEYS[i:]:
            out[f"m2_{a}_{b}"] = float(np.real(np.sum(images[a].conj() * images[b])))
    return out, leak


MOMENT_KEYS = tuple(
    list(FLUCTUATION_KEYS) + ["nc", "ne"] + list(UPDOWN_KEYS)
    + [f"m2_{a}_{b}" for i, a in enumerate(FLUCTUATION_KEYS)
       for b in FLUCTUATION_KEYS[i:]]
    + [f"m2_{a}_{b}" for i, a in enumerate(UPDOWN_KEYS) for b in UPDOWN_KEYS[i:]]
)


def evolve_trajectory(state: SectoredState, params: EffectiveSpinParams,
                      sched: Schedule, traj_index: int = 0,
                      rotation: ModeRotation | None = None,
                      omega_frame: float = 0.0,
                      coherence_pairs: tuple = ()) -> MomentSeries:
    """One Monte Carlo wavefunction trajectory of the driven-dissipative model.

    Deterministic non-Hermitian steps with per-step renormalization alternate
    with jumps applying the shifted collective operator; the drive switches off
    at t_off.  The step size starts from the base value, shrinks by
    dt_shrink_factor for a window after each drive switch, and halves whenever
    the per-step jump probability would exceed the cap.
    """
    n = state.n_atoms
    gamma = params.gamma
    dt_base = sched.resolved_dt(n, gamma)
    dt_floor = DT_UNDERFLOW_FACTOR / (n * gamma)
    tables = _Tables(state)
    flucts = (rotation or ModeRotation.from_angles(0.0, math.pi / 2)) \
        .fluctuation_matrices()
    uds = updown_matrices()
    uniforms = _Uniforms(_traj_rng(sched.seed, traj_index))

    psi = state.normalized().amps.copy()
    shift_on = 1j * params.omega / gamma   # drive term inside the jump operator
    h_extra_on = None
    if sched.unshifted:
        shift_on = 0j
        h_extra_on = (0.5 * params.omega, 0.5 * np.conj(params.omega))
    h_diag = -params.delta * tables.ne

    sample_times = sched.sample_times()
    n_keys = len(MOMENT_KEYS)
    values = np.zeros((n_keys, len(sample_times)))
    sector_norms = np.zeros((len(sample_times), state.n_sectors))
    coh = (np.zeros((len(coherence_pairs), len(sample_times)), dtype=complex)
           if coherence_pairs else None)

    f_de = tables.f_de
    lpsi = np.empty_like(psi)
    work = np.empty_like(psi)
    nj_rel = (state.nj - n / 2.0)

    def measure(idx, t_now):
        t_eff = min(t_now, sched.t_off)
        phases = np.exp(1j * omega_frame * nj_rel * t_eff)
        cur = replace(state, amps=psi)
        mom, _leak = _moment_set(cur, tables, flucts, uds, phases)
        for k, key in enumerate(MOMENT_KEYS):
            values[k, idx] = mom[key]
        sector_norms[idx] = np.sum(np.abs(psi) ** 2, axis=1)
        if coh is not None:
            for q, (nj_a, ne_a, nj_b, ne_b) in enumerate(coherence_pairs):
                sa, sb = nj_a - state.nj_min, nj_b - state.nj_min
                coh[q, idx] = psi[sa, ne_a] * np.conj(psi[sb, ne_b])
        return _leak

    leakage = measure(0, 0.0)
    t = 0.0
    drive_on = sched.t_off > 0.0
    shift = shift_on if drive_on else 0j
    h_extra = h_extra_on if drive_on else None
    shrink_left = sched.shrink_window_steps
    max_p = 0.0
    n_jumps = 0
    next_sample = 1
    eps = 1e-15 * sched.t_end

    while t < sched.t_end - eps:
        boundary = sched.t_end
        if next_sample < len(sample_times):
            boundary = min(boundary, sample_times[next_sample])
        if drive_on:
            boundary = min(boundary, sched.t_off)

        # l psi (shift enters only while the drive is on)
        np.multiply(f_de[:, 1:], psi[:, 1:], out=lpsi[:, :-1])
        lpsi[:, -1] = 0.0
        if shift != 0j:
            lpsi += shift * psi
        ll = float(np.sum(np.abs(lpsi) ** 2))

        dt = dt_base / sched.dt_shrink_factor if shrink_left > 0 else dt_base
        dt = min(dt, boundary - t)
        p = gamma * dt * ll
        while p > sched.max_jump_prob:
            dt *= 0.5
            p *= 0.5
            if dt < dt_floor:
                raise TrajectoryAborted(
                    f"dt underflow at t = {t:.3g} (traj {traj_index})")

        def deterministic_step(src, h):
            # -i h [H src] - (gamma h / 2) l^dag l src
            np.multiply(f_de[:, 1:], src[:, 1:], out=lpsi[:, :-1])
            lpsi[:, -1] = 0.0
            if shift != 0j:
                np.add(lpsi, shift * src, out=lpsi)
            np.multiply(f_de[:, 1:], lpsi[:, :-1], out=work[:, 1:])
            work[:, 0] = 0.0
            if shift != 0j:
                np.add(work, np.conj(shift) * lpsi, out=work)
            out = -1j * h * h_diag * src - (0.5 * gamma * h) * work
            if h_extra is not None:
                om_p, om_m = h_extra
                out[:, 1:] += (-1j * h * om_p) * tables.f_ed[:, :-1] * src[:, :-1]
                out[:, :-1] += (-1j * h * om_m) * tables.f_de[:, 1:] * src[:, 1:]
            return out

        if sched.second_order:
            # midpoint flow, with the jump probability taken from the exact
            # norm loss of the candidate step (second-order accurate ensemble)
            candidate = psi + deterministic_step(psi + 0.5
                                                 * deterministic_step(psi, dt),
                                                 dt)
            cand_norm2 = float(np.sum(np.abs(candidate) ** 2))
            p = max(1.0 - cand_norm2, 0.0)
        else:
            candidate = None
        max_p = max(max_p, p)

        if uniforms.next() < p:
            np.multiply(f_de[:, 1:], psi[:, 1:], out=lpsi[:, :-1])
            lpsi[:, -1] = 0.0
            if shift != 0j:
                lpsi += shift * psi
            psi = lpsi / math.sqrt(float(np.sum(np.abs(lpsi) ** 2)))
            lpsi = np.empty_like(psi)
            n_jumps += 1
        elif candidate is not None:
            psi = candidate / math.sqrt(cand_norm2)
        else:
            # first-order: psi - i dt H psi - (gamma dt / 2) l^dag l psi
            np.multiply(f_de[:, 1:], lpsi[:, :-1], out=work[:, 1:])
            work[:, 0] = 0.0
            if shift != 0j:
                work += np.conj(shift) * lpsi
            step = -1j * dt * h_diag * psi - (0.5 * gamma * dt) * work
            if h_extra is not None:
                om_p, om_m = h_extra
                step[:, 1:] += (-1j * dt * om_p) * tables.f_ed[:, :-1] * psi[:, :-1]
                step[:, :-1] += (-1j * dt * om_m) * tables.f_de[:, 1:] * psi[:, 1:]
            psi = psi + step
            psi /= math.sqrt(float(np.sum(np.abs(psi) ** 2)))

        t += dt
        if shrink_left > 0:
            shrink_left -= 1

        if drive_on and t >= sched.t_off - eps:
            drive_on = False
            shift = 0j
            h_extra = None
            shrink_left = sched.shrink_window_steps
        while (next_sample < len(sample_times)
               and t >= sample_times[next_sample] - eps):
            leakage = max(leakage, measure(next_sample, sample_times[next_sample]))
            next_sample += 1

    return MomentSeries(
        times=sample_times,
        values={key: values[k] for k, key in enumerate(MOMENT_KEYS)},
        sector_norms=sector_norms,
        coherences=coh,
        max_jump_prob=max_p,
        n_jumps=n_jumps,
        leakage=leakage,
        final=replace(state, amps=psi),
    )


# ---------------------------------------------------------------------------
# covariance reports

@dataclass
class CovarianceReport:
    """Generalized squeezing from the 4x4 fluctuation covariance."""

    c: np.ndarray
    bloch_length: float
    eigenvalues: np.ndarray   # spectrum of N C / (bloch_length)^2, ascending
    xi2: float
    xi2_s_block: float        # restriction to the reduced-spin quadrature pair

    @property
    def xi2_db(self) -> float:
        return 10.0 * math.log10(self.xi2)


class DegenerateStateError(RuntimeError):
    pass


def covariance_report(moments: dict, n_atoms: int) -> CovarianceReport:
    """Assemble the symmetrized covariance of the four fluctuation operators."""
    keys = FLUCTUATION_KEYS
    means = np.array([moments[k] for k in keys])
    c = np.empty((4, 4))
    for i, a in enumerate(keys):
        for j, b in enumerate(keys):
            key = f"m2_{a}_{b}" if i <= j else f"m2_{b}_{a}"
            c[i, j] = moments[key] - means[i] * means[j]
    nc = moments["nc"]
    if nc <= 0:
        raise DegenerateStateError("empty Bloch vector: <N_c> <= 0")
    scaled = n_atoms * c / (nc / 2.0) ** 2
    evals = np.linalg.eigvalsh(scaled)
    s_block = scaled[2:, 2:]
    s_evals = np.linalg.eigvalsh(s_block)
    return CovarianceReport(c=c, bloch_length=nc / 2.0, eigenvalues=evals,
                            xi2=float(evals[0]), xi2_s_block=float(s_evals[0]))


def updown_squeezing(moments: dict, n_atoms: int) -> float:
    """Wineland parameter of the shelf/ground pseudo-spin from recorded moments."""
    mean = np.array([moments[k] for k in UPDOWN_KEYS])
    cov = np.empty((3, 3))
    for i, a in enumerate(UPDOWN_KEYS):
        for j, b in enumerate(UPDOWN_KEYS):
            key = f"m2_{a}_{b}" if i <= j else f"m2_{b}_{a}"
            cov[i, j] = moments[key] - mean[i] * mean[j]
    length = float(np.linalg.norm(mean))
    if length <= 0:
        raise DegenerateStateError("vanishing pseudo-spin length")
    nhat = mean / length
    # orthonormal basis of the plane perpendicular to the mean spin
    trial = np.array([1.0, 0.0, 0.0])
    if abs(nhat @ trial) > 0.9:
        trial = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(nhat, trial)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nhat, e1)
    basis = np.stack([e1, e2], axis=1)
    block = basis.T @ cov @ basis
    min_var = float(np.linalg.eigvalsh(block)[0])
    return n_atoms * min_var / length ** 2


# ---------------------------------------------------------------------------
# ensemble driver

@dataclass
class EnsembleResult:
    times: np.ndarray
    mean: dict                 # ensemble-averaged moments, each shape (n_times,)
    stderr: dict               # standard errors of the plain moments
    per_traj: np.ndarray       # (n_traj, n_keys, n_times) raw moment stack
    xi2_gen: np.ndarray
    xi2_gen_stderr_db: np.ndarray
    xi2_s_block: np.ndarray
    xi2_updown: np.ndarray
    e_fraction: np.ndarray
    e_fraction_stderr: np.ndarray
    max_jump_prob: float
    leakage: float
    coherences: np.ndarray | None = None   # (n_traj, n_pairs, n_times)

    @property
    def xi2_gen_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.xi2_gen)

    @property
    def xi2_updown_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.xi2_updown)

    def to_csv(self, path) -> None:
        from .io_utils import write_csv
        write_csv(path, {
            "t_Gamma": self.times,
            "xi2_gen_dB": self.xi2_gen_db,
            "xi2_gen_stderr_dB": self.xi2_gen_stderr_db,
            "xi2_updown_dB": self.xi2_updown_db,
            "e_fraction": self.e_fraction,
            "e_fraction_stderr": self.e_fraction_stderr,
            "max_jump_prob": np.full_like(self.times, self.max_jump_prob),
            "xi2_s_dB": 10.0 * np.log10(self.xi2_s_block),
        })


def _moments_to_dict(stack_mean: np.ndarray) -> list[dict]:
    n_times = stack_mean.shape[1]
    return [{key: stack_mean[k, i] for k, key in enumerate(MOMENT_KEYS)}
            for i in range(n_times)]


_WORKER_STATE: dict = {}


def _init_worker(payload):
    _WORKER_STATE["payload"] = payload


def _run_one(traj_index: int):
    params, sched, state, rotation, omega_frame, pairs = _WORKER_STATE["payload"]
    try:
        res = evolve_trajectory(state, params, sched, traj_index,
                                rotation=rotation, omega_frame=omega_frame,
                                coherence_pairs=pairs)
    except TrajectoryAborted as exc:
        return traj_index, None, str(exc)
    stack = np.array([res.values[key] for key in MOMENT_KEYS])
    return traj_index, (stack, res.max_jump_prob, res.leakage, res.coherences), ""


def resolve_threads(threads: int | None = None) -> int:
    if threads is not None and threads > 0:
        return threads
    env = os.environ.get("THREADS", "")
    if env.strip():
        try:
            v = int(env)
            if v > 0:
                return v
        except ValueError:
            pass
    return os.cpu_count() or 1


def run_ensemble(params: EffectiveSpinParams, sched: Schedule,
                 threads: int | None = None,
                 rotation: ModeRotation | None = None,
                 omega_frame: float | None = None,
                 coherence_pairs: tuple = (),
                 max_abort_fraction: float = 0.01) -> EnsembleResult:
    """Average many trajectories; deterministic for a fixed (seed, n_traj).

    Trajectory i draws from the stream keyed by (seed, i); results are reduced
    in trajectory order, so the output is independent of the worker count.
    """
    n = params.n_atoms
    if rotation is None or omega_frame is None:
        ss = solve_steady_state(params, n // 2)
        rotation = rotation or ModeRotation.from_angles(ss.theta_j, ss.phi_j)
        omega_frame = ss.omega_b if omega_frame is None else omega_frame
    state = init_state(n, sched.d_n, sched.varphi)
    payload = (params, sched, state, rotation, omega_frame, tuple(coherence_pairs))

    results: list = [None] * sched.n_traj
    errors: list[str] = []
    workers = min(resolve_threads(threads), sched.n_traj)
    if workers <= 1:
        _init_worker(payload)
        for i in range(sched.n_traj):
            idx, data, err = _run_one(i)
            results[idx] = data
            if err:
                errors.append(err)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(payload,)) as pool:
            for idx, data, err in pool.map(_run_one, range(sched.n_traj),
                                           chunksize=max(1, sched.n_traj // (4 * workers))):
                results[idx] = data
                if err:
                    errors.append(err)

    good = [r for r in results if r is not None]
    if len(errors) > max_abort_fraction * sched.n_traj:
        raise TrajectoryAborted(
            f"{len(errors)} of {sched.n_traj} trajectories aborted: {errors[:3]}")
    stack = np.stack([g[0] for g in good])            # (n_traj, n_keys, n_times)
    max_p = max(g[1] for g in good)
    leakage = max(g[2] for g in good)
    coh = None
    if coherence_pairs:
        coh = np.stack([g[3] for g in good])

    n_traj = stack.shape[0]
    mean_stack = stack.mean(axis=0)
    std_stack = stack.std(axis=0, ddof=1) / math.sqrt(n_traj) if n_traj > 1 \
        else np.zeros_like(mean_stack)
    mean = {key: mean_stack[k] for k, key in enumerate(MOMENT_KEYS)}
    stderr = {key: std_stack[k] for k, key in enumerate(MOMENT_KEYS)}

    moments_t = _moments_to_dict(mean_stack)
    reports = [covariance_report(m, n) for m in moments_t]
    xi2_gen = np.array([r.xi2 for r in reports])
    xi2_s = np.array([r.xi2_s_block for r in reports])
    xi2_ud = np.array([updown_squeezing(m, n) for m in moments_t])

    # jackknife over trajectories for the generalized squeezing error bar
    stderr_db = np.zeros_like(xi2_gen)
    if n_traj > 2:
        total = stack.sum(axis=0)
        for i_t in range(len(moments_t)):
            loo_vals = np.empty(n_traj)
            for i in range(n_traj):
                loo = (total[:, i_t] - stack[i, :, i_t]) / (n_traj - 1)
                mom = {key: loo[k] for k, key in enumerate(MOMENT_KEYS)}
                loo_vals[i] = covariance_report(mom, n).xi2
            mu = loo_vals.mean()
            var = (n_traj - 1) / n_traj * float(np.sum((loo_vals - mu) ** 2))
            stderr_db[i_t] = 10.0 / math.log(10.0) * math.sqrt(var) / xi2_gen[i_t]

    ne_idx = MOMENT_KEYS.index("ne")
    return EnsembleResult(
        times=sched.sample_times(), mean=mean, stderr=stderr, per_traj=stack,
        xi2_gen=xi2_gen, xi2_gen_stderr_db=stderr_db, xi2_s_block=xi2_s,
        xi2_updown=xi2_ud,
        e_fraction=mean_stack[ne_idx] / n,
        e_fraction_stderr=std_stack[ne_idx] / n,
        max_jump_prob=max_p, leakage=leakage, coherences=coh)
