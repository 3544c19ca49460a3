"""Operator substrate: spin Hamiltonians, spectra, Bohr decompositions, Gibbs states.

Conventions used throughout the package:

- qubit basis ``|0>, |1>`` with ``Z|0> = +|0>``; site 0 is the leftmost
  tensor factor,
- operators are dense complex numpy arrays in the computational basis,
- hbar = 1 and energies are dimensionless (the couplings set the unit),
- a "Bohr frequency" is an eigenvalue difference ``E_c - E_d``; the matrix
  component of an operator at Bohr frequency ``nu`` collects exactly the
  eigenbasis entries ``(c, d)`` with ``E_c - E_d`` in the ``nu`` cluster.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ConfigError, InvariantViolation

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

HERMITICITY_TOL = 1e-12
DENSITY_HERMITICITY_TOL = 1e-10
DENSITY_TRACE_TOL = 1e-10
DENSITY_EIGENVALUE_FLOOR = -1e-9


def kron_chain(ops) -> np.ndarray:
    """Kronecker product of a sequence of matrices, leftmost factor first."""
    return reduce(np.kron, ops)


def site_operator(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Embed a single-qubit operator on ``site`` of an ``n_sites`` register."""
    if not 0 <= site < n_sites:
        raise ConfigError(f"site {site} outside register of {n_sites} qubits")
    factors = [IDENTITY_2] * n_sites
    factors[site] = op
    return kron_chain(factors)


def as_matrix(op) -> np.ndarray:
    """Accept either a raw array or one of the operator wrapper types."""
    matrix = getattr(op, "matrix", op)
    return np.asarray(matrix, dtype=complex)


def _check_square_qubit_dim(matrix: np.ndarray, what: str) -> int:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ConfigError(f"{what} must be a square matrix, got shape {matrix.shape}")
    dim = matrix.shape[0]
    if dim < 1 or (dim & (dim - 1)) != 0:
        raise ConfigError(f"{what} dimension {dim} is not a power of two")
    return dim


@dataclass(frozen=True)
class HermitianOperator:
    """A validated Hermitian matrix on an n-qubit register."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        _check_square_qubit_dim(matrix, "operator")
        deviation = np.max(np.abs(matrix - matrix.conj().T))
        if deviation > HERMITICITY_TOL:
            raise InvariantViolation(
                f"operator is not Hermitian: max |A - A^dag| = {deviation:.3e}"
            )
        matrix = 0.5 * (matrix + matrix.conj().T)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.dim.bit_length() - 1


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density matrix (Hermitian, unit trace, positive up to noise)."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        _check_square_qubit_dim(matrix, "density matrix")
        herm = np.max(np.abs(matrix - matrix.conj().T))
        if herm > DENSITY_HERMITICITY_TOL:
            raise InvariantViolation(f"density matrix not Hermitian: {herm:.3e}")
        matrix = 0.5 * (matrix + matrix.conj().T)
        trace_err = abs(np.trace(matrix).real - 1.0) + abs(np.trace(matrix).imag)
        if trace_err > DENSITY_TRACE_TOL:
            raise InvariantViolation(f"density matrix trace off by {trace_err:.3e}")
        min_eig = float(np.linalg.eigvalsh(matrix)[0])
        if min_eig < DENSITY_EIGENVALUE_FLOOR:
            raise InvariantViolation(
                f"density matrix has negative eigenvalue {min_eig:.3e}"
            )
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def expectation(self, op) -> float:
        value = np.trace(as_matrix(op) @ self.matrix)
        return complex(value).real


def build_mixed_field_ising(
    n_sites: int, g: float, h: float, periodic: bool = False
) -> HermitianOperator:
    """Nearest-neighbour Ising chain with transverse field g and parallel field h.

    H = sum_i Z_i Z_{i+1} + sum_i (g X_i + h Z_i).  Open boundary by default;
    ``periodic=True`` adds the wrap-around Z_{n-1} Z_0 bond (n >= 3).
    """
    if n_sites < 1:
        raise ConfigError("need at least one site")
    dim = 2**n_sites
    ham = np.zeros((dim, dim), dtype=complex)
    for i in range(n_sites):
        ham += g * site_operator(SIGMA_X, i, n_sites)
        ham += h * site_operator(SIGMA_Z, i, n_sites)
    for i in range(n_sites - 1):
        ham += site_operator(SIGMA_Z, i, n_sites) @ site_operator(
            SIGMA_Z, i + 1, n_sites
        )
    if periodic:
        if n_sites < 3:
            raise ConfigError("periodic boundary needs at least 3 sites")
        ham += site_operator(SIGMA_Z, n_sites - 1, n_sites) @ site_operator(
            SIGMA_Z, 0, n_sites
        )
    return HermitianOperator(ham)


def _fix_eigenvector_phases(vectors: np.ndarray) -> np.ndarray:
    """Make each eigenvector's first non-negligible component real positive."""
    fixed = vectors.copy()
    for k in range(fixed.shape[1]):
        column = fixed[:, k]
        magnitudes = np.abs(column)
        idx = int(np.argmax(magnitudes > 1e-8 * magnitudes.max()))
        phase = column[idx] / abs(column[idx])
        fixed[:, k] = column * np.conj(phase)
    return fixed


def _cluster_symmetric(values: np.ndarray, delta: float):
    """Cluster a negation-symmetric multiset of reals by gap-merging.

    Returns (representatives ascending, cluster index per input element).
    The input multiset is symmetric under negation, and gap-based merging of
    the sorted values preserves that symmetry; representatives are
    re-symmetrized to cancel float rounding.
    """
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    new_cluster = np.ones(len(sorted_vals), dtype=bool)
    new_cluster[1:] = np.diff(sorted_vals) > delta
    ids_sorted = np.cumsum(new_cluster) - 1
    n_clusters = int(ids_sorted[-1]) + 1
    sums = np.bincount(ids_sorted, weights=sorted_vals, minlength=n_clusters)
    counts = np.bincount(ids_sorted, minlength=n_clusters)
    reps = sums / counts
    reps = 0.5 * (reps - reps[::-1])
    ids = np.empty_like(ids_sorted)
    ids[order] = ids_sorted
    return reps, ids


@dataclass(frozen=True)
class SpectralSystem:
    """Diagonalized Hamiltonian with its clustered Bohr-frequency structure."""

    hamiltonian: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    bohr_frequencies: np.ndarray
    cluster_index: np.ndarray = field(repr=False)
    delta: float

    def __post_init__(self):
        for name in ("hamiltonian", "energies", "vectors", "bohr_frequencies"):
            getattr(self, name).setflags(write=False)
        self.cluster_index.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    @property
    def omega(self) -> np.ndarray:
        """Matrix of raw eigenvalue differences E_c - E_d."""
        return self.energies[:, None] - self.energies[None, :]

    def to_eigenbasis(self, op) -> np.ndarray:
        mat = as_matrix(op)
        return self.vectors.conj().T @ mat @ self.vectors

    def from_eigenbasis(self, op_eig: np.ndarray) -> np.ndarray:
        return self.vectors @ op_eig @ self.vectors.conj().T

    def bohr_index(self, nu: float) -> int:
        """Index of the Bohr cluster containing ``nu`` (within delta)."""
        idx = int(np.argmin(np.abs(self.bohr_frequencies - nu)))
        if abs(self.bohr_frequencies[idx] - nu) > self.delta + 1e-15:
            raise ConfigError(
                f"{nu} is not a Bohr frequency of this system "
                f"(nearest is {self.bohr_frequencies[idx]})"
            )
        return idx


def spectral_decompose(op, delta_bohr: float = 1e-9) -> SpectralSystem:
    """Diagonalize a Hermitian operator and cluster its Bohr frequencies.

    ``delta_bohr`` is relative to the spectral width.  Eigenvector phases are
    fixed deterministically (first non-negligible component real positive).
    """
    ham = as_matrix(op)
    dim = _check_square_qubit_dim(ham, "hamiltonian")
    if np.max(np.abs(ham - ham.conj().T)) > HERMITICITY_TOL:
        raise InvariantViolation("cannot decompose a non-Hermitian operator")
    energies, vectors = np.linalg.eigh(ham)
    vectors = _fix_eigenvector_phases(vectors)

    residual = np.max(np.abs((vectors * energies) @ vectors.conj().T - ham))
    scale = max(1.0, float(np.max(np.abs(ham))))
    if residual > 1e-10 * scale * dim:
        raise InvariantViolation(f"eigendecomposition residual {residual:.3e}")

    width = float(energies[-1] - energies[0])
    delta = delta_bohr * max(width, 1.0)
    differences = (energies[:, None] - energies[None, :]).reshape(-1)
    reps, ids = _cluster_symmetric(differences, delta)
    # negation closure of the clustered set
    if np.max(np.abs(reps + reps[::-1])) > 1e-12 * max(width, 1.0):
        raise InvariantViolation("Bohr frequency set is not closed under negation")
    return SpectralSystem(
        hamiltonian=ham.copy(),
        energies=energies,
        vectors=vectors,
        bohr_frequencies=reps,
        cluster_index=ids.reshape(dim, dim),
        delta=delta,
    )


def bohr_project(system: SpectralSystem, op, nu: float) -> np.ndarray:
    """Component of an operator at Bohr frequency ``nu`` (computational basis).

    Collects the eigenbasis entries |w1><w1| A |w2><w2| with w1 - w2 in the
    ``nu`` cluster.  Components over the full Bohr set sum back to ``op``.
    """
    idx = system.bohr_index(nu)
    op_eig = system.to_eigenbasis(op)
    projected = np.where(system.cluster_index == idx, op_eig, 0.0)
    return system.from_eigenbasis(projected)


def gibbs_state(system: SpectralSystem, beta: float) -> DensityMatrix:
    """Thermal state exp(-beta H)/Z, computed stably in the eigenbasis."""
    if not np.isfinite(beta):
        raise ConfigError("beta must be finite")
    if beta < 0:
        raise ConfigError("beta must be non-negative")
    weights = np.exp(-beta * (system.energies - system.energies.min()))
    populations = weights / weights.sum()
    rho = (system.vectors * populations) @ system.vectors.conj().T
    return DensityMatrix(rho)
