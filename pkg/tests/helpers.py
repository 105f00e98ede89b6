"""Brute-force product-space references shared by the test modules."""

import numpy as np
from scipy.integrate import solve_ivp

# single-site three-level operators; basis order (d, e, u)
def site_op(n_atoms, i, op):
    mats = [np.eye(3, dtype=complex)] * n_atoms
    mats[i] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def transfer(a, b):
    op = np.zeros((3, 3), dtype=complex)
    op[a, b] = 1.0
    return op


def collective_bilinear(n_atoms, m):
    """sum_i sum_{mu nu} M[mu nu] |mu_i><nu_i| on the full 3^N space."""
    dim = 3 ** n_atoms
    out = np.zeros((dim, dim), dtype=complex)
    for i in range(n_atoms):
        site = np.zeros((3, 3), dtype=complex)
        for mu in range(3):
            for nu in range(3):
                if m[mu, nu] != 0:
                    site[mu, nu] += m[mu, nu]
        out += site_op(n_atoms, i, site)
    return out


def product_state(n_atoms, amps):
    """(a_d |d> + a_e |e> + a_u |u>)^{otimes N}, normalized."""
    v = np.array(amps, dtype=complex)
    v = v / np.linalg.norm(v)
    out = v
    for _ in range(n_atoms - 1):
        out = np.kron(out, v)
    return out


def symmetric_embedding(n_atoms):
    """Map (nj, ne) sector amplitudes into the 3^N product space.

    Returns a dict (nj, ne) -> normalized symmetric basis vector.
    """
    from itertools import product as iproduct
    dim = 3 ** n_atoms
    vecs = {}
    for labels in iproduct(range(3), repeat=n_atoms):
        nd = labels.count(0)
        ne = labels.count(1)
        nj = nd + ne
        idx = 0
        for lab in labels:
            idx = idx * 3 + lab
        key = (nj, ne)
        if key not in vecs:
            vecs[key] = np.zeros(dim, dtype=complex)
        vecs[key][idx] += 1.0
    return {k: v / np.linalg.norm(v) for k, v in vecs.items()}


def lindblad_integrate(h, jumps, rho0, t_eval, rtol=1e-10, atol=1e-13):
    """Dense master equation with a list of (rate, operator) jump channels."""
    dim = h.shape[0]
    prepped = [(g, op, op.conj().T, op.conj().T @ op) for g, op in jumps]

    def rhs(_t, y):
        rho = y.reshape(dim, dim)
        out = -1j * (h @ rho - rho @ h)
        for g, op, op_dag, op2 in prepped:
            out += g * (op @ rho @ op_dag - 0.5 * (op2 @ rho + rho @ op2))
        return out.ravel()

    sol = solve_ivp(rhs, (t_eval[0], t_eval[-1]), rho0.ravel(), t_eval=t_eval,
                    rtol=rtol, atol=atol, method="DOP853")
    assert sol.success, sol.message
    return [sol.y[:, i].reshape(dim, dim) for i in range(sol.y.shape[1])]


# two-level (qubit) product-space pieces for the reduced-model oracle checks;
# basis order (|0> shelf, |1> excited), z = (n_1 - n_0)/2
def qubit_site(n_atoms, i, op):
    mats = [np.eye(2, dtype=complex)] * n_atoms
    mats[i] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


SZ = 0.5 * np.diag([-1.0, 1.0]).astype(complex)
SX = 0.5 * np.array([[0, 1], [1, 0]], dtype=complex)
# basis order is (|0>, |1>) = (m = -1/2, m = +1/2), so the y matrix flips
SY = 0.5 * np.array([[0, 1j], [-1j, 0]], dtype=complex)
LOWER = np.array([[0, 1], [0, 0]], dtype=complex)   # |0><1|
P_EXC = np.diag([0.0, 1.0]).astype(complex)


def qubit_collective(n_atoms, op):
    return sum(qubit_site(n_atoms, i, op) for i in range(n_atoms))


def qubit_css_x(n_atoms):
    return product_state_qubit(n_atoms, [1.0, 1.0])


def product_state_qubit(n_atoms, amps):
    v = np.array(amps, dtype=complex)
    v = v / np.linalg.norm(v)
    out = v
    for _ in range(n_atoms - 1):
        out = np.kron(out, v)
    return out


def qubit_moments(rho, n_atoms):
    sx = qubit_collective(n_atoms, SX)
    sy = qubit_collective(n_atoms, SY)
    sz = qubit_collective(n_atoms, SZ)
    ops = {"sx": sx, "sy": sy, "sz": sz}
    mom = {k: float(np.real(np.trace(op @ rho))) for k, op in ops.items()}
    for i, a in enumerate(("sx", "sy", "sz")):
        for b in ("sx", "sy", "sz")[i:]:
            mom[f"m2_{a}_{b}"] = float(np.real(np.trace(ops[a] @ ops[b] @ rho)))
    return mom
