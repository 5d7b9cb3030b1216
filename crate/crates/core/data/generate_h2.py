"""Two-qubit H2 / STO-3G Hamiltonians over a range of bond distances.

The minimal-basis problem has two spatial orbitals (sigma_g, sigma_u) fixed
by symmetry. Qubit encoding: |01> is the closed-shell sigma_g^2 reference,
|10> the doubly excited sigma_u^2 configuration, |00> and |11> the singly
excited triplet and open-shell singlet. The (|01>, |10>) block is the
singlet CI matrix, coupled by K_gu through (X0X1 + Y0Y1) / 2.

Usage: python generate_h2.py > h2_sto3g.json
"""
import json
import math

import numpy as np
from scipy.special import erf

BOHR_PER_ANGSTROM = 1.0 / 0.52917721092
ALPHA = np.array([3.42525091, 0.62391373, 0.16885540])
COEF = np.array([0.15432897, 0.53532814, 0.44463454])
NORM = (2.0 * ALPHA / math.pi) ** 0.75


def boys0(t):
    return 1.0 if t < 1e-12 else 0.5 * math.sqrt(math.pi / t) * erf(math.sqrt(t))


def primitives(center):
    return [(a, c * n, center) for a, c, n in zip(ALPHA, COEF, NORM)]


def overlap(p, q):
    (a, ca, A), (b, cb, B) = p, q
    ab2 = (A - B) ** 2
    return ca * cb * (math.pi / (a + b)) ** 1.5 * math.exp(-a * b / (a + b) * ab2)


def kinetic(p, q):
    (a, ca, A), (b, cb, B) = p, q
    ab2 = (A - B) ** 2
    r = a * b / (a + b)
    return ca * cb * r * (3 - 2 * r * ab2) * (math.pi / (a + b)) ** 1.5 * math.exp(-r * ab2)


def nuclear(p, q, C):
    (a, ca, A), (b, cb, B) = p, q
    ab2 = (A - B) ** 2
    P = (a * A + b * B) / (a + b)
    return -ca * cb * 2 * math.pi / (a + b) * math.exp(-a * b / (a + b) * ab2) * boys0((a + b) * (P - C) ** 2)


def eri(p, q, r, s):
    (a, ca, A), (b, cb, B), (c, cc, C), (d, cd, D) = p, q, r, s
    P = (a * A + b * B) / (a + b)
    Q = (c * C + d * D) / (c + d)
    pre = 2 * math.pi ** 2.5 / ((a + b) * (c + d) * math.sqrt(a + b + c + d))
    e = math.exp(-a * b / (a + b) * (A - B) ** 2 - c * d / (c + d) * (C - D) ** 2)
    t = (a + b) * (c + d) / (a + b + c + d) * (P - Q) ** 2
    return ca * cb * cc * cd * pre * e * boys0(t)


def contracted(f, basis, *idx):
    fs = [basis[i] for i in idx]
    total = 0.0
    if len(fs) == 2:
        for p in fs[0]:
            for q in fs[1]:
                total += f(p, q)
    else:
        for p in fs[0]:
            for q in fs[1]:
                for r in fs[2]:
                    for s in fs[3]:
                        total += f(p, q, r, s)
    return total


def h2(r_angstrom):
    R = r_angstrom * BOHR_PER_ANGSTROM
    centers = [0.0, R]
    basis = [primitives(c) for c in centers]
    S = np.array([[contracted(overlap, basis, i, j) for j in range(2)] for i in range(2)])
    T = np.array([[contracted(kinetic, basis, i, j) for j in range(2)] for i in range(2)])
    V = np.zeros((2, 2))
    for C in centers:
        V += np.array([[contracted(lambda p, q: nuclear(p, q, C), basis, i, j) for j in range(2)] for i in range(2)])
    h_ao = T + V
    g_ao = np.zeros((2, 2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    g_ao[i, j, k, l] = contracted(eri, basis, i, j, k, l)
    s12 = S[0, 1]
    C = np.array([[1, 1], [1, -1]], dtype=float)
    C[:, 0] /= math.sqrt(2 * (1 + s12))
    C[:, 1] /= math.sqrt(2 * (1 - s12))
    h = C.T @ h_ao @ C
    g = np.einsum("pi,qj,rk,sl,pqrs->ijkl", C, C, C, C, g_ao)
    e_nuc = 1.0 / R
    hgg, huu = h[0, 0], h[1, 1]
    jgg, juu, jgu, kgu = g[0, 0, 0, 0], g[1, 1, 1, 1], g[0, 0, 1, 1], g[0, 1, 0, 1]
    e01 = 2 * hgg + jgg + e_nuc
    e10 = 2 * huu + juu + e_nuc
    e00 = hgg + huu + jgu - kgu + e_nuc
    e11 = hgg + huu + jgu + kgu + e_nuc
    g0 = (e01 + e10 + e00 + e11) / 4
    g1 = (e01 - e10 + e00 - e11) / 4
    g2 = (-e01 + e10 + e00 - e11) / 4
    g3 = (-e01 - e10 + e00 + e11) / 4
    g4 = kgu / 2
    terms = [
        {"pauli": "II", "coeff": g0},
        {"pauli": "ZI", "coeff": g1},
        {"pauli": "IZ", "coeff": g2},
        {"pauli": "ZZ", "coeff": g3},
        {"pauli": "XX", "coeff": g4},
        {"pauli": "YY", "coeff": g4},
    ]
    H = np.zeros((4, 4), dtype=complex)
    P = {
        "I": np.eye(2),
        "X": np.array([[0, 1], [1, 0]]),
        "Y": np.array([[0, -1j], [1j, 0]]),
        "Z": np.diag([1, -1]),
    }
    for t in terms:
        H += t["coeff"] * np.kron(P[t["pauli"][0]], P[t["pauli"][1]])
    fci = float(np.linalg.eigvalsh(H)[0])
    return {
        "n_qubits": 2,
        "unit": "hartree",
        "terms": terms,
        "metadata": {
            "molecule": "H2",
            "basis": "STO-3G",
            "bond_distance_angstrom": round(r_angstrom, 4),
            "hf_state": "01",
            "hartree_fock_energy": float(e01),
            "fci_energy": fci,
        },
    }


if __name__ == "__main__":
    distances = sorted({round(0.3 + 0.05 * k, 4) for k in range(45)} | {0.74})
    print(json.dumps({"series": [h2(r) for r in distances]}, indent=1))
