"""Detailed-balance Lindbladian construction from a Gaussian correlation filter.

The central objects are the filter

    f(t) = sqrt(2/(pi sigma_f^2)) exp(-2 (t - i beta/4)^2 / sigma_f^2),

the jump operators L_a = integral f(t) A_a(t) dt (Heisenberg picture), and two
choices of coherent term: the detailed-balance one G_DB built from tanh-weighted
Bohr components of L_a^dag L_a, and the second-order collision coherent term
G_LS built from the sign-kernel double integral.  G_DB makes the generator
satisfy the Kubo-Martin-Schwinger detailed-balance condition exactly, so the
Gibbs state is an exact fixed point; G_LS is what weak system-bath collisions
actually generate.

Fourier conventions (fixed here once for the whole package):

- ``filter_fourier`` returns fhat(nu) = integral f(t) exp(-i nu t) dt, which has
  the closed form exp(beta nu / 4) exp(-sigma_f^2 nu^2 / 8) and satisfies the
  detailed-balance ratio fhat(nu)/fhat(-nu) = exp(beta nu / 2).
- The weight multiplying the Bohr component of A at frequency nu inside L_a is
  integral f(t) exp(+i nu t) dt = fhat(-nu), because the Heisenberg evolution
  contributes exp(+i nu t) at frequency nu.  Energy-lowering components are
  therefore favoured, as thermalization requires.

Vectorization convention (fixed here once for the whole package):
column-stacking, vec(M)[j*D + i] = M[i, j], so vec(A X B) = (B^T kron A) vec(X)
and a Kraus operator E contributes kron(conj(E), E) to the channel matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import dawsn

from .errors import ConfigError, ConvergenceFailure, InvariantViolation
from .operators import (
    SIGMA_X,
    SIGMA_Z,
    SpectralSystem,
    as_matrix,
    site_operator,
)

# ---------------------------------------------------------------------------
# vectorization helpers (single source of truth for the convention)
# ---------------------------------------------------------------------------


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-stack a D x D matrix into a length-D^2 vector."""
    return np.asarray(matrix, dtype=complex).reshape(-1, order="F")


def unvec(vector: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`."""
    vector = np.asarray(vector, dtype=complex)
    dim = math.isqrt(vector.size)
    if dim * dim != vector.size:
        raise ConfigError(f"vector of length {vector.size} is not a square matrix")
    return vector.reshape(dim, dim, order="F")


def left_right_superoperator(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Matrix of rho -> left @ rho @ right in the vec convention."""
    return np.kron(np.asarray(right, dtype=complex).T, np.asarray(left, dtype=complex))


def kraus_to_superoperator(kraus_ops) -> np.ndarray:
    """Channel matrix sum_k kron(conj(E_k), E_k)."""
    ops = [np.asarray(k, dtype=complex) for k in kraus_ops]
    dim = ops[0].shape[0]
    total = np.zeros((dim * dim, dim * dim), dtype=complex)
    for op in ops:
        total += np.kron(op.conj(), op)
    return total


def superoperator_to_choi(superop: np.ndarray) -> np.ndarray:
    """Reshuffle a channel matrix into its Choi matrix sum_k vec(E_k) vec(E_k)^dag."""
    mat = np.asarray(superop, dtype=complex)
    dim = math.isqrt(mat.shape[0])
    tensor = mat.reshape(dim, dim, dim, dim)
    return tensor.swapaxes(0, 3).reshape(dim * dim, dim * dim)


def choi_to_kraus(choi: np.ndarray, cutoff: float = 1e-12, cp_floor: float = -1e-8):
    """Kraus operators from the eigendecomposition of a Choi matrix.

    Eigenvalues below ``cutoff`` are dropped; an eigenvalue below ``cp_floor``
    means the map is not completely positive and is reported, never clipped.
    """
    choi = np.asarray(choi, dtype=complex)
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (choi + choi.conj().T))
    if eigenvalues[0] < cp_floor:
        raise InvariantViolation(
            f"map is not completely positive: Choi eigenvalue {eigenvalues[0]:.3e}"
        )
    kraus = []
    for value, vector in zip(eigenvalues, eigenvectors.T):
        if value > cutoff:
            kraus.append(math.sqrt(float(value)) * unvec(vector))
    return kraus


# ---------------------------------------------------------------------------
# the Gaussian filter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianFilter:
    """Gaussian correlation filter of width sigma_f at inverse temperature beta."""

    sigma_f: float
    beta: float

    def __post_init__(self):
        if self.sigma_f <= 0:
            raise ConfigError("filter width sigma_f must be positive")
        if self.beta < 0 or not np.isfinite(self.beta):
            raise ConfigError("beta must be finite and non-negative")


def filter_value(filt: GaussianFilter, t) -> np.ndarray:
    """f(t), complex for beta > 0."""
    t = np.asarray(t, dtype=float)
    sigma2 = filt.sigma_f**2
    norm = math.sqrt(2.0 / (math.pi * sigma2))
    return norm * np.exp(-2.0 * (t - 0.25j * filt.beta) ** 2 / sigma2)


def filter_fourier(filt: GaussianFilter, nu) -> np.ndarray:
    """fhat(nu) = integral f(t) exp(-i nu t) dt = exp(beta nu/4 - sigma_f^2 nu^2/8)."""
    nu = np.asarray(nu, dtype=float)
    return np.exp(0.25 * filt.beta * nu - 0.125 * filt.sigma_f**2 * nu**2)


def jump_weight(filt: GaussianFilter, nu) -> np.ndarray:
    """Weight of the Bohr-nu component inside L = integral f(t) A(t) dt."""
    return filter_fourier(filt, -np.asarray(nu, dtype=float))


def filter_l1_norm(filt: GaussianFilter) -> float:
    """integral |f(t)| dt = exp(beta^2 / (8 sigma_f^2))."""
    return math.exp(filt.beta**2 / (8.0 * filt.sigma_f**2))


# ---------------------------------------------------------------------------
# jump sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpSet:
    """Labelled system coupling operators, closed under Hermitian conjugation."""

    ops: tuple

    def __post_init__(self):
        ops = tuple((str(label), np.asarray(a, dtype=complex)) for label, a in self.ops)
        if not ops:
            raise ConfigError("jump set must not be empty")
        dim = ops[0][1].shape[0]
        for label, a in ops:
            if a.shape != (dim, dim):
                raise ConfigError(f"jump operator {label!r} has shape {a.shape}")
            a.setflags(write=False)
        for label, a in ops:
            adjoint = a.conj().T
            if not any(np.allclose(adjoint, b, atol=1e-12) for _, b in ops):
                raise InvariantViolation(
                    f"jump set is not closed under conjugation ({label!r})"
                )
        object.__setattr__(self, "ops", ops)

    @property
    def dim(self) -> int:
        return self.ops[0][1].shape[0]

    @property
    def labels(self):
        return [label for label, _ in self.ops]

    @property
    def operators(self):
        return [a for _, a in self.ops]

    @property
    def norms(self):
        return [float(np.linalg.norm(a, 2)) for _, a in self.ops]

    def __len__(self) -> int:
        return len(self.ops)


def mixed_field_jumps(n_sites: int, normalized: bool = False) -> JumpSet:
    """One coupling operator X_a + Z_a per site (self-adjoint, so trivially closed).

    ``normalized=True`` rescales each operator to unit spectral norm, the
    convention under which the analytic norm bounds are stated; the default
    keeps the bare X_a + Z_a so that quoted coupling strengths J reproduce the
    reference numerical experiments.
    """
    scale = 1.0 / math.sqrt(2.0) if normalized else 1.0
    ops = []
    for a in range(n_sites):
        op = scale * (
            site_operator(SIGMA_X, a, n_sites) + site_operator(SIGMA_Z, a, n_sites)
        )
        ops.append((f"site{a}", op))
    return JumpSet(tuple(ops))


# ---------------------------------------------------------------------------
# generator construction
# ---------------------------------------------------------------------------


def build_jump_operators(system: SpectralSystem, jumps: JumpSet, filt: GaussianFilter):
    """L_a = sum over Bohr frequencies of fhat(-nu) times the nu-component of A_a.

    Equivalent to the time integral of f(t) A_a(t); energy-lowering components
    carry the larger weight.
    """
    if jumps.dim != system.dim:
        raise ConfigError("jump operators and system have mismatched dimensions")
    weights = jump_weight(filt, system.bohr_frequencies)[system.cluster_index]
    result = []
    for a in jumps.operators:
        a_eig = system.to_eigenbasis(a)
        result.append(system.from_eigenbasis(weights * a_eig))
    return result


def build_coherent_db(
    system: SpectralSystem, jumps: JumpSet, filt: GaussianFilter
) -> np.ndarray:
    """Detailed-balance coherent term (i/2) sum_a sum_nu tanh(beta nu/4) (L_a^dag L_a)_nu."""
    weights = jump_weight(filt, system.bohr_frequencies)[system.cluster_index]
    tanh_factor = np.tanh(0.25 * filt.beta * system.bohr_frequencies)[
        system.cluster_index
    ]
    total = np.zeros((system.dim, system.dim), dtype=complex)
    for a in jumps.operators:
        l_eig = weights * system.to_eigenbasis(a)
        total += l_eig.conj().T @ l_eig
    g_eig = 0.5j * tanh_factor * total
    g = system.from_eigenbasis(g_eig)
    deviation = np.max(np.abs(g - g.conj().T))
    if deviation > 1e-12 * max(1.0, np.max(np.abs(g))):
        raise InvariantViolation(f"coherent term not Hermitian: {deviation:.3e}")
    return 0.5 * (g + g.conj().T)


def _ls_kernel(filt: GaussianFilter, mu, nu):
    """Closed-form sign-kernel coefficient multiplying (A^dag)_mu (A)_nu in G_LS.

    Comes from the Gaussian double integral of sign(t1 - t2) f*(t2) f(t1)
    exp(i mu t2 + i nu t1): the centre-of-mass direction gives a Gaussian in
    (mu + nu) and the relative direction gives the principal-value structure,
    a Dawson function of (nu - mu)/2 + beta/sigma_f^2.
    """
    sigma = filt.sigma_f
    beta = filt.beta
    prefactor = -math.exp(beta**2 / (4.0 * sigma**2)) / math.sqrt(math.pi)
    gauss = np.exp(-((mu + nu) ** 2) * sigma**2 / 16.0)
    return prefactor * gauss * dawsn(0.25 * sigma * (nu - mu) + 0.5 * beta / sigma)


def _coherent_ls_frequency(system, jumps, filt) -> np.ndarray:
    omega = system.omega
    total = np.zeros((system.dim, system.dim), dtype=complex)
    for a in jumps.operators:
        a_eig = system.to_eigenbasis(a)
        a_dag = a_eig.conj().T
        for e in range(system.dim):
            mu = omega[:, e][:, None]  # omega_ce
            nu = omega[e, :][None, :]  # omega_ed
            total += a_dag[:, e][:, None] * a_eig[e, :][None, :] * _ls_kernel(
                filt, mu, nu
            )
    return system.from_eigenbasis(total)


def _cumulative_quartic(values: np.ndarray, step: float) -> np.ndarray:
    """Fourth-order cumulative integral of sampled values along axis 0.

    Each sub-interval is integrated with the cubic through its four nearest
    nodes (Newton-Cotes), matching composite-Simpson accuracy at every prefix.
    """
    n = values.shape[0]
    if n < 4:
        raise ConfigError("need at least 4 quadrature nodes")
    increments = np.empty_like(values)
    increments[0] = (
        step
        / 24.0
        * (9.0 * values[0] + 19.0 * values[1] - 5.0 * values[2] + values[3])
    )
    increments[1:-2] = (
        step
        / 24.0
        * (
            -values[:-3]
            + 13.0 * values[1:-2]
            + 13.0 * values[2:-1]
            - values[3:]
        )
    )
    increments[-2] = (
        step
        / 24.0
        * (values[-4] - 5.0 * values[-3] + 19.0 * values[-2] + 9.0 * values[-1])
    )
    prefix = np.zeros_like(values)
    np.cumsum(increments[:-1], axis=0, out=prefix[1:])
    return prefix


def _simpson_weights(n_nodes: int, step: float) -> np.ndarray:
    if n_nodes % 2 == 0:
        raise ConfigError("Simpson rule needs an odd node count")
    weights = np.full(n_nodes, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    return weights * step / 3.0


def _ls_time_on_grid(system, jumps, filt, half_width: float, n_nodes: int):
    """Sign-kernel double integral on a truncated grid, split at t1 = t2.

    The inner integral over t2 < t1 (and its complement) is a smooth prefix
    integral of f*(t2) A^dag(t2), so the sign discontinuity never crosses a
    quadrature cell.
    """
    ts = np.linspace(-half_width, half_width, n_nodes)
    step = ts[1] - ts[0]
    f_vals = filter_value(filt, ts)
    phases = np.exp(1j * np.outer(ts, system.energies))  # e^{+i E t}
    total = np.zeros((system.dim, system.dim), dtype=complex)
    for a in jumps.operators:
        a_eig = system.to_eigenbasis(a)
        # A(t) in the eigenbasis is a phase mask; build f*(t) A^dag(t) samples
        heis = phases[:, :, None] * a_eig[None, :, :] * phases.conj()[:, None, :]
        samples_dag = f_vals.conj()[:, None, None] * heis.conj().swapaxes(1, 2)
        prefix = _cumulative_quartic(samples_dag, step)
        inner = 2.0 * prefix - prefix[-1][None, :, :]
        outer = (f_vals[:, None, None] * heis) * _simpson_weights(n_nodes, step)[
            :, None, None
        ]
        total += np.einsum("tij,tjk->ik", inner, outer)
    return system.from_eigenbasis((-1.0 / 2.0j) * total)


def _coherent_ls_time(system, jumps, filt, tol: float = 1e-9) -> np.ndarray:
    half_width = 12.0 * filt.sigma_f + filt.beta
    previous = None
    for n_nodes in (1601, 3201, 6401, 12801, 25601):
        current = _ls_time_on_grid(system, jumps, filt, half_width, n_nodes)
        if previous is not None:
            residual = float(np.max(np.abs(current - previous)))
            if residual < tol:
                return 0.5 * (current + current.conj().T)
        previous = current
    raise ConvergenceFailure(
        f"sign-kernel quadrature did not stabilize below {tol} "
        f"(last halving changed by {residual:.3e})"
    )


def build_coherent_ls(
    system: SpectralSystem,
    jumps: JumpSet,
    filt: GaussianFilter,
    method: str = "frequency_domain",
) -> np.ndarray:
    """Second-order collision coherent term from the sign-kernel double integral.

    ``frequency_domain`` evaluates the closed-form kernel in the eigenbasis;
    ``time_quadrature`` integrates the truncated double integral directly and
    exists as an independent cross-check.
    """
    if method == "frequency_domain":
        g = _coherent_ls_frequency(system, jumps, filt)
    elif method == "time_quadrature":
        g = _coherent_ls_time(system, jumps, filt)
    else:
        raise ConfigError(f"unknown coherent-term method {method!r}")
    deviation = np.max(np.abs(g - g.conj().T))
    if deviation > 1e-9 * max(1.0, np.max(np.abs(g))):
        raise InvariantViolation(f"coherent term not Hermitian: {deviation:.3e}")
    return 0.5 * (g + g.conj().T)


@dataclass(frozen=True)
class LindbladGenerator:
    """Jump operators plus a coherent term; applies the standard dissipator form."""

    jump_ops: tuple
    coherent: np.ndarray
    kind: str

    def __post_init__(self):
        ops = tuple(np.asarray(op, dtype=complex) for op in self.jump_ops)
        for op in ops:
            op.setflags(write=False)
        coherent = np.asarray(self.coherent, dtype=complex)
        coherent.setflags(write=False)
        object.__setattr__(self, "jump_ops", ops)
        object.__setattr__(self, "coherent", coherent)

    @property
    def dim(self) -> int:
        return self.coherent.shape[0]

    def apply(self, rho) -> np.ndarray:
        rho = as_matrix(rho)
        g = self.coherent
        out = -1j * (g @ rho - rho @ g)
        for op in self.jump_ops:
            op_dag = op.conj().T
            gram = op_dag @ op
            out += op @ rho @ op_dag - 0.5 * (gram @ rho + rho @ gram)
        return out


@dataclass(frozen=True)
class Superoperator:
    """A linear map on operators stored as its D^2 x D^2 vec-convention matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        dim = math.isqrt(matrix.shape[0])
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or dim * dim != matrix.shape[0]:
            raise ConfigError(f"superoperator matrix has shape {matrix.shape}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return math.isqrt(self.matrix.shape[0])

    def apply(self, op) -> np.ndarray:
        return unvec(self.matrix @ vec(as_matrix(op)))


def assemble_generator(
    kind: str,
    system: SpectralSystem,
    jumps: JumpSet,
    filt: GaussianFilter,
    ls_method: str = "frequency_domain",
) -> LindbladGenerator:
    """Build the ``db`` (exact detailed balance) or ``ls`` (collision) generator."""
    jump_ops = build_jump_operators(system, jumps, filt)
    if kind == "db":
        coherent = build_coherent_db(system, jumps, filt)
    elif kind == "ls":
        coherent = build_coherent_ls(system, jumps, filt, method=ls_method)
    else:
        raise ConfigError(f"unknown generator kind {kind!r}")
    return LindbladGenerator(tuple(jump_ops), coherent, kind)


def to_superoperator(generator: LindbladGenerator) -> Superoperator:
    dim = generator.dim
    eye = np.eye(dim, dtype=complex)
    g = generator.coherent
    matrix = -1j * (
        left_right_superoperator(g, eye) - left_right_superoperator(eye, g)
    )
    for op in generator.jump_ops:
        gram = op.conj().T @ op
        matrix += left_right_superoperator(op, op.conj().T)
        matrix -= 0.5 * left_right_superoperator(gram, eye)
        matrix -= 0.5 * left_right_superoperator(eye, gram)
    return Superoperator(matrix)


def kms_residual(generator: LindbladGenerator, rho_beta) -> float:
    """Frobenius deviation from detailed balance with respect to ``rho_beta``.

    Zero exactly when the adjoint generator equals Gamma^{-1} L Gamma with
    Gamma the two-sided multiplication by rho_beta^{1/2}.
    """
    rho = as_matrix(rho_beta)
    eigenvalues, eigenvectors = np.linalg.eigh(rho)
    if eigenvalues[0] <= 0 or eigenvalues[-1] / eigenvalues[0] > 1e80:
        raise InvariantViolation(
            "reference state is numerically rank deficient; beta too large"
        )
    sqrt_rho = (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.conj().T
    inv_sqrt = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.conj().T
    lmat = to_superoperator(generator).matrix
    gamma = left_right_superoperator(sqrt_rho, sqrt_rho)
    gamma_inv = left_right_superoperator(inv_sqrt, inv_sqrt)
    residual = lmat.conj().T - gamma_inv @ lmat @ gamma
    return float(np.linalg.norm(residual))
