"""Diamond-lattice bath construction, spinful-site sampling and hyperfine geometry.

All energies are angular frequencies (rad/s, hbar = 1 internally); all lengths
are meters. The central spin sits at the box center and occupies no lattice
site.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: mu_0 / 4 pi, T m / A (exact by pre-2019-SI definition, accurate far beyond
#: the precision needed here)
MU0_OVER_4PI = 1.0e-7
#: reduced Planck constant, J s (2018 CODATA)
HBAR = 1.054571817e-34

# conventional diamond cell: two interpenetrating FCC sublattices offset by
# a0/4 (1,1,1); fractional coordinates, basis index varies fastest last
_FCC = np.array([[0.0, 0.0, 0.0],
                 [0.0, 0.5, 0.5],
                 [0.5, 0.0, 0.5],
                 [0.5, 0.5, 0.0]])
DIAMOND_BASIS = np.vstack([_FCC, _FCC + 0.25])


class LatticeError(ValueError):
    """Invalid lattice/bath specification or geometry."""


@dataclass(frozen=True)
class SpeciesParams:
    """Single nuclear species: spin quantum number, gyromagnetic ratio and
    the electron-envelope hyperfine model parameters (peak coupling A0 and
    confinement radius L0)."""
    spin_I: float
    gamma: float          # rad s^-1 T^-1
    A0: float             # rad/s, peak hyperfine coupling
    L0: float             # m, electron confinement radius

    def __post_init__(self):
        twoI = 2.0 * self.spin_I
        if abs(twoI - round(twoI)) > 1e-12 or round(twoI) < 1:
            raise LatticeError(f"spin_I must be a positive half-integer, got {self.spin_I}")
        if self.A0 <= 0:
            raise LatticeError("A0 must be positive")
        if self.L0 <= 0:
            raise LatticeError("L0 must be positive")


@dataclass(frozen=True)
class LatticeSpec:
    """Computational box of conventional diamond cells populated with one
    nuclear species at fractional abundance ``abundance_rho``."""
    lattice_constant_a0: float
    box_dims: tuple[int, int, int]
    species: SpeciesParams
    abundance_rho: float
    seed: int = 0
    explicit_sites: tuple[int, ...] | None = None   # bypasses the PRNG

    def __post_init__(self):
        if self.lattice_constant_a0 <= 0:
            raise LatticeError("lattice_constant_a0 must be positive")
        if len(self.box_dims) != 3 or any(int(n) != n or n < 1 for n in self.box_dims):
            raise LatticeError(f"box_dims must be three integers >= 1, got {self.box_dims}")
        if not 0.0 <= self.abundance_rho <= 1.0:
            raise LatticeError(f"abundance must lie in [0, 1], got {self.abundance_rho}")

    @property
    def n_sites(self) -> int:
        nx, ny, nz = self.box_dims
        return 8 * nx * ny * nz


@dataclass(frozen=True)
class PairGeometry:
    """Relative geometry of one spin pair in the hyperfine frame."""
    r_ij_norm: float      # m
    theta_ij: float       # rad, polar angle w.r.t. hf axis
    phi_ij: float         # rad, in [0, 2 pi)
    prefactor: float      # rad/s, (mu0/4pi) hbar gamma_i gamma_j / r^3

    def __post_init__(self):
        if not (0.0 <= self.theta_ij <= np.pi):
            raise LatticeError(f"theta_ij out of range: {self.theta_ij}")
        if self.prefactor <= 0:
            raise LatticeError("prefactor must be positive")


@dataclass(frozen=True)
class BathRealization:
    """One spinful-site draw: positions (central spin at origin), hyperfine
    couplings, the hyperfine axis and derived scales."""
    positions: np.ndarray        # (N, 3), m
    hf_couplings_A: np.ndarray   # (N,), rad/s
    hf_axis: np.ndarray          # unit 3-vector
    E_dd: float                  # rad/s
    A_bar: float                 # rad/s
    species: SpeciesParams
    a0: float
    site_indices: tuple[int, ...] = field(default=())

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        A = np.asarray(self.hf_couplings_A, dtype=float).ravel()
        axis = np.asarray(self.hf_axis, dtype=float).ravel()
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "hf_couplings_A", A)
        object.__setattr__(self, "hf_axis", axis)
        if len(A) != len(pos):
            raise LatticeError("positions and hf couplings disagree in length")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise LatticeError("hf_axis must be a unit vector")
        if len(A) and (np.any(A <= 0) or np.any(A > self.species.A0 * (1 + 1e-12))):
            raise LatticeError("hyperfine couplings must satisfy 0 < A_i <= A0")
        if len(A) and abs(self.A_bar - A.mean()) > 1e-12 * abs(self.A_bar):
            raise LatticeError("A_bar inconsistent with couplings")

    @property
    def n_spins(self) -> int:
        return len(self.hf_couplings_A)

    @property
    def sigma_hf(self) -> float:
        return float(np.std(self.hf_couplings_A))


def build_diamond_lattice(spec: LatticeSpec) -> np.ndarray:
    """All 8 * prod(box_dims) diamond sites, box center translated to the origin.

    Ordering is lexicographic in cell index (x, then y, then z), then basis
    index, so seeded sampling is reproducible.
    """
    nx, ny, nz = spec.box_dims
    a0 = spec.lattice_constant_a0
    cells = np.array([(i, j, k) for i in range(nx) for j in range(ny) for k in range(nz)],
                     dtype=float)
    frac = cells[:, None, :] + DIAMOND_BASIS[None, :, :]
    pos = frac.reshape(-1, 3) * a0
    center = 0.5 * a0 * np.array([nx, ny, nz], dtype=float)
    return pos - center


def sample_spinful_sites(positions: np.ndarray, rho: float, seed: int) -> np.ndarray:
    """Bernoulli draw of spinful sites, one uniform variate per site in lattice
    order from a PCG64 stream, so identical (seed, spec) gives identical subsets.
    """
    if not 0.0 <= rho <= 1.0:
        raise LatticeError(f"abundance must lie in [0, 1], got {rho}")
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(len(positions))
    return np.nonzero(u < rho)[0]


def assign_hf_couplings(positions: np.ndarray, species: SpeciesParams):
    """Gaussian-envelope hyperfine couplings A_i = A0 exp(-r_i^2 / L0^2).

    Returns (couplings, mean, standard deviation).
    """
    r2 = np.einsum("ij,ij->i", positions, positions)
    A = species.A0 * np.exp(-r2 / species.L0 ** 2)
    return A, float(A.mean()) if len(A) else 0.0, float(A.std()) if len(A) else 0.0


def compute_E_dd(species: SpeciesParams, a0: float) -> float:
    """Dipole-dipole energy scale (rad/s) of two like spins one bond length
    a0 sqrt(3)/4 apart."""
    if a0 <= 0:
        raise LatticeError("a0 must be positive")
    bond = a0 * np.sqrt(3.0) / 4.0
    return MU0_OVER_4PI * HBAR * species.gamma ** 2 / bond ** 3


def rotation_to_axis(axis: np.ndarray) -> np.ndarray:
    """Rotation matrix mapping [001] onto ``axis`` by the minimal rotation
    (about z cross axis). Antiparallel axis rotates about x by pi."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    c = n[2]
    if c > 1.0 - 1e-14:
        return np.eye(3)
    if c < -1.0 + 1e-14:
        # rotate about x by pi
        return np.diag([1.0, -1.0, -1.0])
    v = np.array([-n[1], n[0], 0.0])       # z cross n
    s = np.linalg.norm(v)
    v = v / s
    angle = np.arccos(np.clip(c, -1.0, 1.0))
    K = np.array([[0, -v[2], v[1]],
                  [v[2], 0, -v[0]],
                  [-v[1], v[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def pair_geometry(r_i: np.ndarray, r_j: np.ndarray, hf_axis: np.ndarray,
                  species: SpeciesParams) -> PairGeometry:
    """Polar/azimuthal angles of r_j - r_i in the rotated frame whose z-axis is
    the hyperfine axis, plus the dipolar prefactor."""
    r = np.asarray(r_j, dtype=float) - np.asarray(r_i, dtype=float)
    norm = np.linalg.norm(r)
    if norm == 0.0:
        raise LatticeError("coincident sites have no pair geometry")
    R = rotation_to_axis(hf_axis)
    local = R.T @ r
    theta = float(np.arccos(np.clip(local[2] / norm, -1.0, 1.0)))
    phi = float(np.arctan2(local[1], local[0])) % (2.0 * np.pi)
    pref = MU0_OVER_4PI * HBAR * species.gamma ** 2 / norm ** 3
    return PairGeometry(r_ij_norm=float(norm), theta_ij=theta, phi_ij=phi, prefactor=pref)


def hf_axis_from_miller(h: float, k: float, l: float) -> np.ndarray:
    v = np.array([h, k, l], dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise LatticeError("Miller direction cannot be the zero vector")
    return v / n


def hf_axis_from_angles(theta_deg: float, phi_deg: float) -> np.ndarray:
    """Unit vector at polar angle theta from [001] and azimuth phi, degrees."""
    th = np.deg2rad(theta_deg)
    ph = np.deg2rad(phi_deg)
    return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


def build_realization(spec: LatticeSpec, hf_axis: np.ndarray) -> BathRealization:
    """Build the lattice, draw (or take) the spinful subset and assign couplings."""
    pos = build_diamond_lattice(spec)
    if spec.explicit_sites is not None:
        idx = np.asarray(spec.explicit_sites, dtype=int)
        if len(idx) and (idx.min() < 0 or idx.max() >= len(pos)):
            raise LatticeError("explicit site index out of range")
    else:
        idx = sample_spinful_sites(pos, spec.abundance_rho, spec.seed)
    sub = pos[idx]
    A, A_bar, _ = assign_hf_couplings(sub, spec.species)
    axis = np.asarray(hf_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    e_dd = compute_E_dd(spec.species, spec.lattice_constant_a0)
    return BathRealization(positions=sub, hf_couplings_A=A, hf_axis=axis,
                           E_dd=e_dd, A_bar=A_bar, species=spec.species,
                           a0=spec.lattice_constant_a0,
                           site_indices=tuple(int(i) for i in idx))


def save_realization(path, real: BathRealization) -> None:
    """Comma-separated text export: one header line
    (a0, L0, A0/E_dd, spin_I, gamma, hf_axis), then index,x,y,z,A per site,
    floats at 17 significant digits."""
    f17 = "{:.16e}".format
    with open(path, "w") as fh:
        head = [f17(real.a0), f17(real.species.L0), f17(real.species.A0 / real.E_dd),
                f17(real.species.spin_I), f17(real.species.gamma)]
        head += [f17(c) for c in real.hf_axis]
        fh.write(",".join(head) + "\n")
        idx = real.site_indices if len(real.site_indices) == real.n_spins \
            else tuple(range(real.n_spins))
        for i, (p, a) in enumerate(zip(real.positions, real.hf_couplings_A)):
            fh.write(",".join([str(idx[i]), f17(p[0]), f17(p[1]), f17(p[2]), f17(a)]) + "\n")


def load_realization(path) -> BathRealization:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = [float(x) for x in lines[0].split(",")]
    if len(head) != 8:
        raise LatticeError("malformed realization header")
    a0, L0, ratio, spin_I, gamma = head[:5]
    axis = np.array(head[5:8])
    idx, rows = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        idx.append(int(parts[0]))
        rows.append([float(x) for x in parts[1:5]])
    rows = np.array(rows).reshape(-1, 4)
    # A0 stored as a ratio to E_dd so the header round-trips the model spec
    tmp_species = SpeciesParams(spin_I=spin_I, gamma=gamma, A0=1.0, L0=L0)
    e_dd = compute_E_dd(tmp_species, a0)
    species = SpeciesParams(spin_I=spin_I, gamma=gamma, A0=ratio * e_dd, L0=L0)
    A = rows[:, 3]
    return BathRealization(positions=rows[:, :3], hf_couplings_A=A, hf_axis=axis,
                           E_dd=e_dd, A_bar=float(A.mean()), species=species, a0=a0,
                           site_indices=tuple(idx))
