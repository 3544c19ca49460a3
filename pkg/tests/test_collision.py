"""Tests for the joint-register propagation and the collision channels.

The oracles here are deliberately independent of the module under test:
column evolution is checked against a dense ``scipy.linalg.expm`` of the
joint Hamiltonian, and the weak-coupling reference channel is rebuilt
from its definition (free half-cycle, dissipative semigroup, free
half-cycle plus shift) out of raw superoperator matrices.
"""

import numpy as np
import pytest
import scipy.linalg

from thermalsim import (
    ConfigError,
    GaussianFilter,
    ProtocolParams,
    assemble_generator,
    bath_gibbs_weights,
    channel_averaged,
    channel_kls,
    channel_randomized_bath,
    channel_single,
    channel_table,
    free_unitary,
    gibbs_state,
    mixed_field_jumps,
    propagate_columns,
    quadrature_shifts,
    system_bath_hamiltonian,
    to_superoperator,
)

from support import make_params


def random_density(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------------------
# joint Hamiltonian
# ---------------------------------------------------------------------------


def test_joint_hamiltonian_is_hermitian(two_site_system):
    params = make_params(coupling=0.3)
    for t in (-3.0, -0.5, 0.0, 0.7, 2.0):
        h = system_bath_hamiltonian(two_site_system, params, t).matrix
        assert np.max(np.abs(h - h.conj().T)) < 1e-12


def test_joint_hamiltonian_decoupled_at_zero_coupling(two_site_system):
    """J = 0 leaves H x I_B + I_S x H_B with an identity bath term."""
    params = make_params(coupling=0.0)
    dim_b = 2 ** params.n_bath
    expected = np.kron(two_site_system.hamiltonian, np.eye(dim_b)) + np.kron(
        np.eye(two_site_system.dim), np.eye(dim_b)
    )
    h = system_bath_hamiltonian(two_site_system, params, 1.3).matrix
    assert np.max(np.abs(h - expected)) == 0.0


def test_coupling_term_negligible_outside_filter_window(two_site_system):
    # |f(t)| decays like e^{-2 t^2 / sigma^2}: at t = 10 sigma the
    # interaction is ~1e-87 of its peak and the Hamiltonian is free.
    params = make_params(coupling=0.5)
    h_far = system_bath_hamiltonian(two_site_system, params, 10.0).matrix
    h_free = system_bath_hamiltonian(
        two_site_system, make_params(coupling=0.0), 10.0
    ).matrix
    assert np.max(np.abs(h_far - h_free)) < 1e-50


def test_joint_hamiltonian_bath_variant_has_z_splitting(single_qubit_z):
    params = make_params(n_sites=1, coupling=0.0, bath_omega_max=2.0)
    omega = 1.4
    h = system_bath_hamiltonian(single_qubit_z, params, 0.0, bath_frequency=omega)
    z = np.diag([1.0, -1.0])
    expected = np.kron(single_qubit_z.hamiltonian, np.eye(2)) + np.kron(
        np.eye(2), -0.5 * omega * z
    )
    assert np.max(np.abs(h.matrix - expected)) < 1e-12


# ---------------------------------------------------------------------------
# column propagation
# ---------------------------------------------------------------------------


def test_propagation_matches_expm_at_zero_coupling(single_qubit_z):
    """Free evolution oracle: dense expm of the joint Hamiltonian.

    The stepper drops the identity bath term (a global phase), so the
    comparison aligns the overall phase on the largest entry first.
    """
    params = make_params(n_sites=1, coupling=0.0)
    x = 0.37
    block = propagate_columns(single_qubit_z, params, [x])[0]
    h_joint = np.kron(single_qubit_z.hamiltonian, np.eye(2))
    u = scipy.linalg.expm(-1j * h_joint * (params.mean_time + x))
    cols = np.zeros((4, 2), dtype=complex)
    cols[0, 0] = 1.0
    cols[2, 1] = 1.0
    oracle = u @ cols
    k = np.argmax(np.abs(oracle))
    phase = block.ravel()[k] / oracle.ravel()[k]
    assert abs(abs(phase) - 1.0) < 1e-12
    assert np.max(np.abs(block - phase * oracle)) < 1e-9


def test_propagation_preserves_column_orthonormality(single_qubit_z):
    params = make_params(n_sites=1, coupling=0.2)
    block = propagate_columns(single_qubit_z, params, [0.0])[0]
    gram = block.conj().T @ block
    assert np.max(np.abs(gram - np.eye(2))) < 1e-8


def test_propagation_step_halving_converged(two_site_system):
    """Halving the integrator step moves the result by < 1e-8.

    The stepper is fourth order, so at the default step the remaining
    error is ~16x the difference to the half-step run.
    """
    coarse = make_params(coupling=0.25)
    fine = make_params(coupling=0.25, integrator_step=coarse.integrator_step / 2)
    block_coarse = propagate_columns(two_site_system, coarse, [0.0])[0]
    block_fine = propagate_columns(two_site_system, fine, [0.0])[0]
    assert np.max(np.abs(block_coarse - block_fine)) < 1e-8


def test_propagation_rejects_bad_shift_lists(single_qubit_z):
    params = make_params(n_sites=1)
    with pytest.raises(ConfigError):
        propagate_columns(single_qubit_z, params, [])
    with pytest.raises(ConfigError):
        propagate_columns(single_qubit_z, params, [0.5, -0.5])
    with pytest.raises(ConfigError):
        propagate_columns(single_qubit_z, params, [6.5])  # beyond 6 T_0
    with pytest.raises(ConfigError):
        propagate_columns(single_qubit_z, params, [0.0], initial_bath_state=5)


def test_shift_rejected_when_randomization_disabled(single_qubit_z):
    # T_0 = 0 admits only x = 0
    params = make_params(n_sites=1, randomization_time=0.0)
    with pytest.raises(ConfigError):
        channel_single(single_qubit_z, params, 0.3)
    channel_single(single_qubit_z, params, 0.0)  # allowed


def test_total_qubit_guard(two_site_system):
    params = make_params(max_total_qubits=3)
    with pytest.raises(ConfigError):
        params.dims(two_site_system)


# ---------------------------------------------------------------------------
# single-shift channel
# ---------------------------------------------------------------------------


def test_single_channel_is_unitary_at_zero_coupling(single_qubit_z):
    params = make_params(n_sites=1, coupling=0.0)
    x = 0.2
    channel = channel_single(single_qubit_z, params, x)
    u = free_unitary(single_qubit_z, params.mean_time + x)
    rho = random_density(2, seed=3)
    assert np.max(np.abs(channel.apply(rho) - u @ rho @ u.conj().T)) < 1e-9


def test_single_channel_is_cptp(two_site_system):
    # construction already enforces trace preservation; validate() returns
    # the smallest Choi eigenvalue, which must not be meaningfully negative
    channel = channel_single(two_site_system, make_params(coupling=0.25), 0.4)
    assert channel.validate() > -1e-8
    probe = random_density(4, seed=11)
    out = channel.apply(probe)
    assert abs(np.trace(out).real - 1.0) < 1e-10
    assert np.max(np.abs(out - out.conj().T)) < 1e-10


def test_single_channel_approaches_reference_at_fourth_order(two_site_system):
    """||K_x - U(T/2+x) e^{J^2 L} U(T/2)|| shrinks like J^4.

    The reference is rebuilt by hand from superoperator matrices rather
    than through the packaged reference-channel constructor.
    """
    jumps = mixed_field_jumps(2)
    gen = assemble_generator("ls", two_site_system, jumps, GaussianFilter(1.0, 1.0))
    lmat = to_superoperator(gen).matrix
    x = 0.3
    couplings = (0.05, 0.1, 0.2)
    distances = []
    for coupling in couplings:
        params = make_params(coupling=coupling)
        kx = channel_single(two_site_system, params, x).superoperator().matrix
        semigroup = scipy.linalg.expm(coupling**2 * lmat)
        u_half = free_unitary(two_site_system, 0.5 * params.mean_time)
        u_tail = free_unitary(two_site_system, 0.5 * params.mean_time + x)
        reference = (
            np.kron(u_tail.conj(), u_tail)
            @ semigroup
            @ np.kron(u_half.conj(), u_half)
        )
        distances.append(np.linalg.norm(kx - reference, 2))
    slope = np.polyfit(np.log(couplings), np.log(distances), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.3)


# ---------------------------------------------------------------------------
# shift quadrature and the averaged channel
# ---------------------------------------------------------------------------


def test_quadrature_collapses_without_randomization():
    params = make_params(randomization_time=0.0)
    nodes, weights = quadrature_shifts(params)
    assert nodes.tolist() == [0.0]
    assert weights.tolist() == [1.0]


def test_quadrature_matches_shift_distribution_moments():
    # p(x) = e^{-(x/T_0)^2} / sqrt(pi T_0^2): mean 0, variance T_0^2 / 2
    params = make_params(randomization_time=1.7)
    nodes, weights = quadrature_shifts(params)
    assert abs(weights.sum() - 1.0) < 1e-12
    assert abs(float(weights @ nodes)) < 1e-12
    assert float(weights @ nodes**2) == pytest.approx(1.7**2 / 2.0, rel=1e-12)


def test_quadrature_truncates_far_nodes():
    params = make_params(nodes=61)
    nodes, weights = quadrature_shifts(params)
    assert len(nodes) < 61
    assert np.all(np.abs(nodes) <= 6.0 * params.randomization_time + 1e-12)
    assert abs(weights.sum() - 1.0) < 1e-12


def test_averaged_channel_single_component_when_deterministic(single_qubit_z):
    params = make_params(n_sites=1, randomization_time=0.0)
    channel = channel_averaged(single_qubit_z, params)
    assert len(channel.components) == 1
    assert channel.components[0][0] == 1.0


def test_averaged_channel_node_count_converged(two_site_system):
    """21 vs 41 quadrature nodes: superoperators agree to 1e-8."""
    coarse = channel_averaged(two_site_system, make_params(nodes=21))
    fine = channel_averaged(two_site_system, make_params(nodes=41))
    diff = np.linalg.norm(
        coarse.superoperator().matrix - fine.superoperator().matrix, 2
    )
    assert diff < 1e-8


def test_averaged_channel_fixes_thermal_state_at_zero_coupling(two_site_system):
    # every component is free evolution, which commutes with the thermal state
    params = make_params(coupling=0.0)
    channel = channel_averaged(two_site_system, params)
    rho_beta = gibbs_state(two_site_system, 1.0).matrix
    assert np.max(np.abs(channel.apply(rho_beta) - rho_beta)) < 1e-9


def test_averaged_channel_distance_to_reference_grows_with_coupling(two_site_system):
    jumps = mixed_field_jumps(2)
    gen = assemble_generator("ls", two_site_system, jumps, GaussianFilter(1.0, 1.0))

    def distance(coupling):
        params = make_params(coupling=coupling)
        k_avg = channel_averaged(two_site_system, params).superoperator().matrix
        k_ref = channel_kls(two_site_system, params, gen).superoperator().matrix
        return np.linalg.norm(k_avg - k_ref, 2)

    assert distance(0.05) <= distance(0.2)


def test_reference_channel_dimension_guard(single_qubit_z, two_site_system):
    jumps = mixed_field_jumps(2)
    gen = assemble_generator("ls", two_site_system, jumps, GaussianFilter(1.0, 1.0))
    with pytest.raises(ConfigError):
        channel_kls(single_qubit_z, make_params(n_sites=1), gen)


def test_channel_table_matches_individual_channels(single_qubit_z):
    shifts = [-0.4, 0.0, 0.55]
    params = make_params(n_sites=1, coupling=0.2)
    table = channel_table(single_qubit_z, params, shifts)
    for shift, channel in zip(shifts, table):
        single = channel_single(single_qubit_z, params, shift)
        diff = np.max(
            np.abs(
                channel.superoperator().matrix - single.superoperator().matrix
            )
        )
        assert diff < 1e-10


# ---------------------------------------------------------------------------
# randomized-bath variant
# ---------------------------------------------------------------------------


def test_bath_weights_are_a_product_gibbs_distribution():
    params = make_params(bath_omega_max=2.0)
    omega, beta = 1.5, 2.0
    weights = bath_gibbs_weights(params, omega, beta)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    # one excited bath qubit costs a Boltzmann factor e^{-beta omega}
    assert weights[1] / weights[0] == pytest.approx(np.exp(-beta * omega), rel=1e-12)
    uniform = bath_gibbs_weights(params, omega, 0.0)
    assert np.allclose(uniform, 0.25)


def test_randomized_bath_channel_is_unitary_at_zero_coupling(single_qubit_z):
    params = make_params(n_sites=1, coupling=0.0, bath_omega_max=2.0)
    channel = channel_randomized_bath(single_qubit_z, params, omega=1.3, x=0.2)
    u = free_unitary(single_qubit_z, params.mean_time + 0.2)
    rho = random_density(2, seed=7)
    assert np.max(np.abs(channel.apply(rho) - u @ rho @ u.conj().T)) < 1e-9


def test_randomized_bath_channel_cptp_at_zero_frequency(single_qubit_z):
    params = make_params(n_sites=1, coupling=0.25, bath_omega_max=2.0)
    channel = channel_randomized_bath(single_qubit_z, params, omega=0.0)
    assert channel.validate() > -1e-8


def test_randomized_bath_frequency_window_enforced(single_qubit_z):
    params = make_params(n_sites=1, coupling=0.1, bath_omega_max=2.0)
    with pytest.raises(ConfigError):
        channel_randomized_bath(single_qubit_z, params, omega=2.5)
    with pytest.raises(ConfigError):
        channel_randomized_bath(single_qubit_z, params, omega=-0.1)


# ---------------------------------------------------------------------------
# parameter validation
# ---------------------------------------------------------------------------


def test_protocol_params_reject_bad_values():
    with pytest.raises(ConfigError):
        make_params(coupling=-0.1)
    with pytest.raises(ConfigError):
        make_params(mean_time=0.0)
    with pytest.raises(ConfigError):
        make_params(randomization_time=-1.0)
    with pytest.raises(ConfigError):
        make_params(nodes=4)  # must be odd
    with pytest.raises(ConfigError):
        make_params(integrator_step=0.5)  # coarser than sigma_f / 4


def test_regime_warnings_emitted():
    with pytest.warns(UserWarning):
        make_params(mean_time=0.5)  # sigma_f < T violated
