"""Per-cluster effective Hamiltonians: hyperfine diagonal plus the six-term
dipolar alphabet, with per-term masks and a secular (high-field) mode.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import BathRealization, PairGeometry, pair_geometry
from .spinops import SpinMatrices, embed, spin_matrices


class HamiltonianError(ValueError):
    pass


@dataclass(frozen=True)
class TermMask:
    """Switches for the dipolar terms: zz (A), flip-flop (B), single-quantum
    (C, D) and double-quantum (E, F). C/D and E/F toggle together so every
    emitted operator stays Hermitian."""
    enable_A: bool = True
    enable_B: bool = True
    enable_CD: bool = True
    enable_EF: bool = True

    @classmethod
    def full(cls) -> "TermMask":
        return cls()

    @classmethod
    def secular(cls) -> "TermMask":
        """High-field mode: only the total-Mz-conserving terms A and B."""
        return cls(enable_CD=False, enable_EF=False)

    def union(self, other: "TermMask") -> "TermMask":
        return TermMask(self.enable_A or other.enable_A,
                        self.enable_B or other.enable_B,
                        self.enable_CD or other.enable_CD,
                        self.enable_EF or other.enable_EF)


@dataclass(frozen=True)
class EffectiveParams:
    """Central-spin projections entering the averaged effective Hamiltonian;
    the hyperfine diagonal is scaled by (|P+| + |P-|)/2."""
    P_plus: float = 0.5
    P_minus: float = -0.5

    @property
    def c_hf(self) -> float:
        return 0.5 * (abs(self.P_plus) + abs(self.P_minus))


def alphabet_coefficients(geom: PairGeometry, mask: TermMask):
    """Scalar coefficients (including the r^-3 prefactor) of the four
    independent alphabet structures: zz, flip-flop, and the complex
    single-/double-quantum weights (their adjoints carry the conjugates).
    """
    c = np.cos(geom.theta_ij)
    s = np.sin(geom.theta_ij)
    pref = geom.prefactor
    cA = pref * (3.0 * c * c - 1.0) if mask.enable_A else 0.0
    cB = pref * (1.0 - 3.0 * c * c) / 4.0 if mask.enable_B else 0.0
    cC = pref * 0.75 * np.sin(2.0 * geom.theta_ij) * np.exp(-1j * geom.phi_ij) \
        if mask.enable_CD else 0.0
    cE = pref * 0.75 * s * s * np.exp(-2j * geom.phi_ij) if mask.enable_EF else 0.0
    return cA, cB, cC, cE


def pair_structures(spins: SpinMatrices):
    """The four structural two-spin operators the alphabet coefficients
    multiply: Iz Iz, (I+I- + I-I+), (I+Iz + IzI+), I+I+."""
    Iz, Ip, Im = spins.Iz, spins.Iplus, spins.Iminus
    zz = np.kron(Iz, Iz)
    ff = np.kron(Ip, Im) + np.kron(Im, Ip)
    sq = np.kron(Ip, Iz) + np.kron(Iz, Ip)
    dq = np.kron(Ip, Ip)
    return zz, ff, sq, dq


def dipolar_pair_hamiltonian(geom: PairGeometry, spins: SpinMatrices,
                             mask: TermMask = TermMask.full()) -> np.ndarray:
    """Two-spin dipolar Hamiltonian on the (2I+1)^2 product space, Hermitian by
    construction (C/D and E/F are mutual adjoints)."""
    zz, ff, sq, dq = pair_structures(spins)
    cA, cB, cC, cE = alphabet_coefficients(geom, mask)
    H = cA * zz + cB * ff
    H = H + cC * sq + np.conj(cC) * sq.conj().T
    H = H + cE * dq + np.conj(cE) * dq.conj().T
    return H


def total_bath_operator(cluster, realization: BathRealization) -> np.ndarray:
    """Overhauser operator sum_i A_i Iz_i restricted to the cluster."""
    cluster = tuple(cluster)
    if not cluster:
        raise HamiltonianError("empty cluster")
    return np.diag(bath_operator_diagonal(cluster, realization)).astype(complex)


def bath_operator_diagonal(cluster, realization: BathRealization) -> np.ndarray:
    """Diagonal of sum_i A_i Iz_i in the product basis (it is diagonal there)."""
    mz = mz_table(realization.species.spin_I, len(cluster))
    A = realization.hf_couplings_A[np.asarray(cluster, dtype=int)]
    return mz @ A


def mz_table(spin_I: float, n: int) -> np.ndarray:
    """(d^n, n) array of per-slot Iz quantum numbers, slot 0 slowest."""
    d = int(round(2 * spin_I)) + 1
    m = spin_I - np.arange(d)
    grids = np.meshgrid(*([m] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def cluster_hamiltonian(cluster, realization: BathRealization,
                        params: EffectiveParams = EffectiveParams(),
                        mask: TermMask = TermMask.full()) -> np.ndarray:
    """Effective cluster Hamiltonian: c_hf * sum A_i Iz_i plus all pairwise
    dipolar terms, embedded in the cluster tensor space."""
    cluster = tuple(cluster)
    if not cluster:
        raise HamiltonianError("empty cluster")
    if len(set(cluster)) != len(cluster):
        raise HamiltonianError(f"duplicate site indices in cluster {cluster}")
    spins = spin_matrices(realization.species.spin_I)
    d = spins.dim
    n = len(cluster)
    H = np.diag(params.c_hf * bath_operator_diagonal(cluster, realization)).astype(complex)
    for a in range(n):
        for b in range(a + 1, n):
            geom = pair_geometry(realization.positions[cluster[a]],
                                 realization.positions[cluster[b]],
                                 realization.hf_axis, realization.species)
            Hp = dipolar_pair_hamiltonian(geom, spins, mask)
            H += embed_pair(Hp, a, b, n, d)
    return H


def embed_pair(pair_op: np.ndarray, a: int, b: int, n: int, d: int) -> np.ndarray:
    """Embed a two-spin operator acting on slots (a, b), a < b, into d^n."""
    if not 0 <= a < b < n:
        raise HamiltonianError(f"bad slot pair ({a}, {b}) for {n} slots")
    # decompose the pair operator on outer-product components of slot a
    op = pair_op.reshape(d, d, d, d)          # (a_row, b_row, a_col, b_col)
    total = np.zeros((d ** n, d ** n), dtype=complex)
    for i in range(d):
        for j in range(d):
            Ea = np.zeros((d, d), dtype=complex)
            Ea[i, j] = 1.0
            block = op[i, :, j, :]
            if not block.any():
                continue
            total += embed(Ea, a, n, d) @ embed(block, b, n, d)
    return total
