"""Numerically exact small-N master-equation integrators used as ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .params import EffectiveSpinParams
from .trajectories import (FLUCTUATION_KEYS, MOMENT_KEYS, UPDOWN_KEYS,
                           ModeRotation, Schedule, updown_matrices)

MAX_DENSE_DIM = 1200


class DimensionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# three-level sectored basis

@dataclass(frozen=True)
class SectorBasis:
    """Symmetric three-level states indexed by (sector size, excitation number)."""

    n_atoms: int

    @property
    def states(self) -> list[tuple[int, int]]:
        return [(nj, ne) for nj in range(self.n_atoms + 1) for ne in range(nj + 1)]

    @property
    def dim(self) -> int:
        return (self.n_atoms + 1) * (self.n_atoms + 2) // 2

    def index(self, nj: int, ne: int) -> int:
        return nj * (nj + 1) // 2 + ne

    def bilinear(self, m: np.ndarray) -> np.ndarray:
        """Dense matrix of sum_{mu nu} M[mu, nu] a_mu^dag a_nu on this basis."""
        n = self.n_atoms
        dim = self.dim
        out = np.zeros((dim, dim), dtype=complex)
        for nj, ne in self.states:
            i = self.index(nj, ne)
            nd, nu = nj - ne, n - nj
            out[i, i] += m[0, 0] * nd + m[1, 1] * ne + m[2, 2] * nu
            if ne >= 1:  # d^dag e
                out[self.index(nj, ne - 1), i] += m[0, 1] * math.sqrt((nd + 1) * ne)
            if nd >= 1:  # e^dag d
                out[self.index(nj, ne + 1), i] += m[1, 0] * math.sqrt((ne + 1) * nd)
            if nd >= 1:  # u^dag d
                out[self.index(nj - 1, ne), i] += m[2, 0] * math.sqrt((nu + 1) * nd)
            if nu >= 1:  # d^dag u
                out[self.index(nj + 1, ne), i] += m[0, 2] * math.sqrt((nd + 1) * nu)
            if ne >= 1:  # u^dag e
                out[self.index(nj - 1, ne - 1), i] += m[2, 1] * math.sqrt((nu + 1) * ne)
            if nu >= 1:  # e^dag u
                out[self.index(nj + 1, ne + 1), i] += m[1, 2] * math.sqrt((ne + 1) * nu)
        return out

    def lowering(self) -> np.ndarray:
        m = np.zeros((3, 3), dtype=complex)
        m[0, 1] = 1.0
        return self.bilinear(m)

    def number_e(self) -> np.ndarray:
        return self.bilinear(np.diag([0.0, 1.0, 0.0]).astype(complex))

    def number_j(self) -> np.ndarray:
        return self.bilinear(np.diag([1.0, 1.0, 0.0]).astype(complex))

    def initial_superposition(self, varphi: float = 0.0) -> np.ndarray:
        """Equal shelf/ground product state over all sectors, no excitation."""
        from scipy.special import gammaln
        n = self.n_atoms
        nj = np.arange(n + 1)
        logw = gammaln(n + 1) - gammaln(nj + 1) - gammaln(n - nj + 1) \
            - n * math.log(2.0)
        amps = np.sqrt(np.exp(logw)) * np.exp(1j * nj * varphi)
        psi = np.zeros(self.dim, dtype=complex)
        for k in range(n + 1):
            psi[self.index(k, 0)] = amps[k]
        return psi / np.linalg.norm(psi)


def _lindblad_rhs(h: np.ndarray, l_op: np.ndarray, gamma: float):
    l_dag = l_op.conj().T
    ll = l_dag @ l_op

    def rhs(_t, y):
        dim = h.shape[0]
        rho = y.reshape(dim, dim)
        out = -1j * (h @ rho - rho @ h)
        out += gamma * (l_op @ rho @ l_dag - 0.5 * (ll @ rho + rho @ ll))
        return out.ravel()

    return rhs


@dataclass
class ThreeLevelResult:
    times: np.ndarray
    rho: np.ndarray            # (n_times, dim, dim)
    basis: SectorBasis
    moments: list[dict]        # same keys as the trajectory moment set

    def moment(self, key: str) -> np.ndarray:
        return np.array([m[key] for m in self.moments])


def lindblad_threelevel(params: EffectiveSpinParams, sched: Schedule,
                        rotation: ModeRotation | None = None,
                        omega_frame: float = 0.0,
                        psi0: np.ndarray | None = None,
                        rtol: float = 1e-9, atol: float = 1e-12) -> ThreeLevelResult:
    """Exact master equation for the driven three-level ensemble (no unraveling).

    Uses the shifted jump operator and the detuning Hamiltonian; the drive
    switches off at sched.t_off.  Moments are evaluated in the same rotated
    measurement frame as the trajectory engine.
    """
    n = params.n_atoms
    basis = SectorBasis(n)
    if basis.dim > MAX_DENSE_DIM:
        raise DimensionError(f"dense basis dim {basis.dim} exceeds {MAX_DENSE_DIM}")
    j_minus = basis.lowering()
    n_e = basis.number_e()
    eye = np.eye(basis.dim, dtype=complex)
    h = -params.delta * n_e
    shift = 1j * params.omega / params.gamma
    l_on = j_minus + shift * eye
    psi = basis.initial_superposition() if psi0 is None else psi0
    rho0 = np.outer(psi, psi.conj())

    times = sched.sample_times()
    on = times[times <= sched.t_off + 1e-15]
    off = times[times > sched.t_off + 1e-15]

    rhos = [rho0]
    y = rho0.ravel()
    if len(on) > 1:
        sol = solve_ivp(_lindblad_rhs(h, l_on, params.gamma),
                        (0.0, float(on[-1])), y, t_eval=on, rtol=rtol, atol=atol,
                        method="DOP853")
        rhos = [sol.y[:, i].reshape(basis.dim, basis.dim) for i in range(len(on))]
        y = sol.y[:, -1]
    if len(off):
        sol = solve_ivp(_lindblad_rhs(h, j_minus, params.gamma),
                        (float(on[-1]), float(off[-1])), y, t_eval=off,
                        rtol=rtol, atol=atol, method="DOP853")
        rhos += [sol.y[:, i].reshape(basis.dim, basis.dim) for i in range(len(off))]
    rho = np.array(rhos)

    rotation = rotation or ModeRotation.from_angles(0.0, math.pi / 2)
    ops = {}
    for key, m in rotation.fluctuation_matrices().items():
        ops[key] = basis.bilinear(m)
    for key, m in updown_matrices().items():
        ops[key] = basis.bilinear(m)
    ops["ne"] = n_e

    nj_vals = np.array([nj for nj, _ in basis.states], dtype=float)
    moments = []
    for i, t in enumerate(times):
        t_eff = min(t, sched.t_off)
        phases = np.exp(1j * omega_frame * (nj_vals - n / 2.0) * t_eff)
        r = phases[:, None] * rho[i] * phases.conj()[None, :]
        mom = {}
        for key in FLUCTUATION_KEYS + ("nc", "ne") + UPDOWN_KEYS:
            mom[key] = float(np.real(np.trace(ops[key] @ r)))
        for a_i, a in enumerate(FLUCTUATION_KEYS):
            for b in FLUCTUATION_KEYS[a_i:]:
                mom[f"m2_{a}_{b}"] = float(np.real(np.trace(ops[a] @ ops[b] @ r)))
        for a_i, a in enumerate(UPDOWN_KEYS):
            for b in UPDOWN_KEYS[a_i:]:
                mom[f"m2_{a}_{b}"] = float(np.real(np.trace(ops[a] @ ops[b] @ r)))
        moments.append(mom)
    return ThreeLevelResult(times=times, rho=rho, basis=basis, moments=moments)


def coherence_block_supports(result: ThreeLevelResult) -> float:
    """Largest matrix element that appeared outside the initially supported
    (ket sector, bra sector) blocks; exactly zero under sector-conserving flow."""
    basis = result.basis
    nj_vals = np.array([nj for nj, _ in basis.states])
    blocks0 = np.abs(result.rho[0]) > 1e-14
    ket = nj_vals[:, None] * np.ones_like(nj_vals)[None, :]
    bra = np.ones_like(nj_vals)[:, None] * nj_vals[None, :]
    seen = set()
    idx_i, idx_j = np.nonzero(blocks0)
    for i, j in zip(idx_i, idx_j):
        seen.add((int(ket[i, j]), int(bra[i, j])))
    worst = 0.0
    for r in result.rho:
        mask = np.abs(r) > 0
        for i, j in zip(*np.nonzero(mask)):
            if (int(ket[i, j]), int(bra[i, j])) not in seen:
                worst = max(worst, abs(r[i, j]))
    return worst


# ---------------------------------------------------------------------------
# permutation-symmetric two-level solver

def _cg_sq_minus(s: float, m: np.ndarray):
    """Squared Clebsch-Gordan factors for the lowering component, target m - 1."""
    up = (s - m + 1.0) * (s - m + 2.0) / ((2 * s + 1.0) * (2 * s + 2.0))
    same = (s + m) * (s - m + 1.0) / (2 * s * (s + 1.0)) if s > 0 else np.zeros_like(m)
    down = (s + m) * (s + m - 1.0) / (2 * s * (2 * s + 1.0)) if s > 0 else np.zeros_like(m)
    return up, same, down


def _cg_signed_zero(s: float, m: np.ndarray):
    """Signed Clebsch-Gordan factors for the z component (within-row signs only)."""
    up = np.sqrt((s - m + 1.0) * (s + m + 1.0) / ((2 * s + 1.0) * (s + 1.0)))
    if s > 0:
        same = m / math.sqrt(s * (s + 1.0))
        down = -np.sqrt(np.clip((s - m) * (s + m), 0.0, None) / (s * (2 * s + 1.0)))
    else:
        same = np.zeros_like(m)
        down = np.zeros_like(m)
    return up, same, down


def _cg_signed_minus(s: float, m: np.ndarray):
    up = np.sqrt((s - m + 1.0) * (s - m + 2.0) / ((2 * s + 1.0) * (2 * s + 2.0)))
    if s > 0:
        same = np.sqrt(np.clip((s + m) * (s - m + 1.0), 0.0, None)
                       / (2 * s * (s + 1.0)))
        down = np.sqrt(np.clip((s + m) * (s + m - 1.0), 0.0, None)
                       / (2 * s * (2 * s + 1.0)))
    else:
        same = np.zeros_like(m)
        down = np.zeros_like(m)
    return up, same, down


def _solve_kappa(n: int, s: float) -> tuple[float, float, float]:
    """Reduced one-body coupling strengths into the S+1, S, S-1 blocks.

    Determined by the sum rule sum_i <sigma_i^+ sigma_i^-> = N/2 + m applied at
    three magnetizations; the z-channel sum rule then holds automatically and
    is asserted by the constructor as a consistency check.
    """
    if s == 0:
        return float(n), 0.0, 0.0
    ms = np.array([s, s - 1.0, -s]) if s >= 1 else np.array([s, -s, -s])
    up, same, down = _cg_sq_minus(s, ms)
    a = 0.5 * np.stack([up, same, down], axis=1)
    b = n / 2.0 + ms
    if s == 0.5:
        sol, *_ = np.linalg.lstsq(a[:2, :2], b[:2], rcond=None)
        return float(sol[0]), float(sol[1]), 0.0
    sol = np.linalg.solve(a, b)
    return float(sol[0]), float(sol[1]), float(sol[2])


@dataclass
class DickeBlocks:
    """Permutation-symmetric density matrix as total-spin blocks.

    Normalization: expectation of any collective operator is the sum of the
    per-block traces; local channels move weight between neighboring blocks.
    """

    n_atoms: int
    blocks: dict     # s -> (2s+1, 2s+1) complex matrix

    def trace(self) -> float:
        return float(sum(np.trace(b).real for b in self.blocks.values()))


class DickeLindblad:
    """Exact collective + single-particle master equation for N <= ~40 atoms.

    Channels: twisting chi S_z^2 (signed), frame rotation, collective dephasing
    on S_z, single-particle dephasing on the excited projector, and
    single-particle decay toward the shelf state.
    """

    def __init__(self, n_atoms: int, chi_signed: float, gamma_collective: float,
                 gamma_d: float = 0.0, gamma_minus: float = 0.0,
                 omega_frame: float = 0.0):
        self.n = n_atoms
        self.chi = chi_signed
        self.gcoll = gamma_collective
        self.gd = gamma_d
        self.gm = gamma_minus
        self.omega = omega_frame
        self.s_values = [n_atoms / 2.0 - k for k in range(int(n_atoms // 2) + 1)
                         if n_atoms / 2.0 - k >= 0.0 or abs(n_atoms / 2.0 - k) < 1e-9]
        self.s_values = [s for s in self.s_values if s >= -1e-9]
        self._prep()

    def _prep(self):
        self.kappa = {}
        self.cg_m = {}
        self.cg_z = {}
        for s in self.s_values:
            m = np.arange(-s, s + 1.0)
            self.kappa[s] = _solve_kappa(self.n, s)
            self.cg_m[s] = _cg_signed_minus(s, m)
            self.cg_z[s] = _cg_signed_zero(s, m)
            # consistency: the z-channel sum rule must follow from the same kappas
            k_up, k_same, k_down = self.kappa[s]
            zu, zs, zd = self.cg_z[s]
            total = k_up * zu ** 2 + k_same * zs ** 2 + k_down * zd ** 2
            if not np.allclose(total, self.n, rtol=1e-9, atol=1e-9):
                raise AssertionError("transfer coefficients violate the z sum rule")

    def initial_css(self) -> DickeBlocks:
        n = self.n
        s = n / 2.0
        from scipy.special import gammaln
        k = np.arange(n + 1)
        logb = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        c = np.exp(0.5 * (logb - n * math.log(2.0)))
        top = np.outer(c, c).astype(complex)
        blocks = {sv: np.zeros((int(2 * sv) + 1, int(2 * sv) + 1), dtype=complex)
                  for sv in self.s_values}
        blocks[s] = top
        return DickeBlocks(n_atoms=n, blocks=blocks)

    def _rhs_blocks(self, blocks: dict) -> dict:
        out = {s: np.zeros_like(b) for s, b in blocks.items()}
        n = self.n
        for s in self.s_values:
            p = blocks[s]
            if not p.any():
                continue
            m = np.arange(-s, s + 1.0)
            mm = m[:, None]
            mmp = m[None, :]
            d = out[s]
            # coherent phases and purely collective dephasing
            d += (-1j * (self.chi * (mm ** 2 - mmp ** 2) - self.omega * (mm - mmp))
                  - 0.5 * self.gcoll * (mm - mmp) ** 2) * p
            # single-particle anticommutator parts
            if self.gm:
                d += -0.5 * self.gm * ((n / 2.0 + mm) + (n / 2.0 + mmp)) * p
            if self.gd:
                d += -0.25 * self.gd * n * p
            k_up, k_same, k_down = self.kappa[s]
            if self.gm:
                cu, cs, cd = self.cg_m[s]
                # recycling into target blocks at (m-1, m'-1)
                for target, k_val, c_vec in (
                        (s + 1.0, k_up, cu), (s, k_same, cs), (s - 1.0, k_down, cd)):
                    if k_val == 0.0 or target not in out or target < 0:
                        continue
                    g = 0.5 * self.gm * k_val * np.outer(c_vec, c_vec)
                    contrib = g * p
                    tgt = out[target]
                    off = int(round(target - s))  # -1, 0, +1
                    # target index of source m is (m - 1) + target_s = i + off - 1
                    idx = np.arange(len(m)) + off - 1
                    sel = (idx >= 0) & (idx < tgt.shape[0])
                    ii = idx[sel]
                    jj = idx[sel]
                    tgt[np.ix_(ii, jj)] += contrib[np.ix_(sel, sel)]
            if self.gd:
                zu, zs, zd = self.cg_z[s]
                for target, k_val, c_vec in (
                        (s + 1.0, k_up, zu), (s, k_same, zs), (s - 1.0, k_down, zd)):
                    if k_val == 0.0 or target not in out or target < 0:
                        continue
                    g = 0.25 * self.gd * k_val * np.outer(c_vec, c_vec)
                    contrib = g * p
                    tgt = out[target]
                    off = int(round(target - s))
                    idx = np.arange(len(m)) + off   # same m, shifted block offset
                    sel = (idx >= 0) & (idx < tgt.shape[0])
                    ii = idx[sel]
                    tgt[np.ix_(ii, ii)] += contrib[np.ix_(sel, sel)]
        return out

    def _pack(self, blocks: dict) -> np.ndarray:
        return np.concatenate([blocks[s].ravel() for s in self.s_values])

    def _unpack(self, y: np.ndarray) -> dict:
        blocks = {}
        pos = 0
        for s in self.s_values:
            d = int(2 * s) + 1
            blocks[s] = y[pos:pos + d * d].reshape(d, d)
            pos += d * d
        return blocks

    def evolve(self, t_eval, rtol: float = 1e-10, atol: float = 1e-13) -> list[DickeBlocks]:
        t_eval = np.asarray(t_eval, dtype=float)
        y0 = self._pack(self.initial_css().blocks)

        def rhs(_t, y):
            return self._pack(self._rhs_blocks(self._unpack(y)))

        sol = solve_ivp(rhs, (float(t_eval[0]), float(t_eval[-1])), y0,
                        t_eval=t_eval, rtol=rtol, atol=atol, method="DOP853")
        if not sol.success:
            raise RuntimeError(f"block integration failed: {sol.message}")
        return [DickeBlocks(self.n, self._unpack(sol.y[:, i].copy()))
                for i in range(sol.y.shape[1])]

    def spin_moments(self, state: DickeBlocks) -> dict:
        """Collective first and second moments (z up = excited convention)."""
        n = self.n
        sx = sy = sz = 0.0
        szz = 0.0
        sp2 = 0.0 + 0.0j
        sp = 0.0 + 0.0j
        sp_sz = 0.0 + 0.0j
        s2tot = 0.0
        for s in self.s_values:
            p = state.blocks[s]
            if not p.any():
                continue
            m = np.arange(-s, s + 1.0)
            pop = np.diag(p).real
            sz += float(np.sum(pop * m))
            szz += float(np.sum(pop * m ** 2))
            s2tot += float(np.sum(pop)) * s * (s + 1.0)
            lad1 = np.sqrt((s - m[:-1]) * (s + m[:-1] + 1.0))
            coh1 = np.array([p[i, i + 1] for i in range(len(m) - 1)])
            sp += np.sum(coh1 * lad1)
            sp_sz += np.sum(coh1 * lad1 * (2.0 * m[:-1] + 1.0))
            if len(m) > 2:
                lad2 = np.sqrt((s - m[:-2]) * (s + m[:-2] + 1.0)
                               * (s - m[:-2] - 1.0) * (s + m[:-2] + 2.0))
                coh2 = np.array([p[i, i + 2] for i in range(len(m) - 2)])
                sp2 += np.sum(coh2 * lad2)
        sx = float(np.real(sp))
        sy = float(np.imag(sp))
        sxx = 0.5 * (s2tot - szz + float(np.real(sp2)))
        syy = 0.5 * (s2tot - szz - float(np.real(sp2)))
        sxy = 0.5 * float(np.imag(sp2))
        sxz = 0.5 * float(np.real(sp_sz))
        syz = 0.5 * float(np.imag(sp_sz))
        return {"sx": sx, "sy": sy, "sz": sz,
                "m2_sx_sx": sxx, "m2_sy_sy": syy, "m2_sz_sz": szz,
                "m2_sx_sy": sxy, "m2_sx_sz": sxz, "m2_sy_sz": syz}

    def wineland(self, state: DickeBlocks) -> float:
        from .trajectories import updown_squeezing
        return updown_squeezing(self.spin_moments(state), self.n)


def lindblad_effective(n_atoms: int, model, t_eval,
                       rtol: float = 1e-10, atol: float = 1e-13) -> np.ndarray:
    """Exact squeezing curve of the reduced twisting model for N <= ~40."""
    solver = DickeLindblad(n_atoms, model.chi_signed, model.gamma_check,
                           gamma_d=model.gamma_d, gamma_minus=model.gamma_minus)
    states = solver.evolve(np.asarray(t_eval, dtype=float), rtol=rtol, atol=atol)
    return np.array([solver.wineland(st) for st in states])
