"""Filter functions, jump/coherent construction, generators, vectorization.

The frequency-domain construction is cross-checked against direct numerical
quadrature of the defining time integrals throughout; those quadratures are
the oracles, not the module's own closed forms.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from thermalsim import (
    ConfigError,
    GaussianFilter,
    InvariantViolation,
    JumpSet,
    assemble_generator,
    build_coherent_db,
    build_coherent_ls,
    build_jump_operators,
    choi_to_kraus,
    filter_fourier,
    filter_l1_norm,
    filter_value,
    gibbs_state,
    jump_weight,
    kms_residual,
    kraus_to_superoperator,
    mixed_field_jumps,
    spectral_decompose,
    superoperator_to_choi,
    to_superoperator,
    unvec,
    vec,
)
from thermalsim.operators import SIGMA_X, SIGMA_Z


def _fourier_by_quadrature(filt, nu):
    """Oracle: adaptive quadrature of fhat(nu) = integral f(t) e^{-i nu t} dt.

    The e^{-i nu t} kernel is the transform convention under which the
    filter factorizes as e^{beta nu / 4} q(nu) with q real and even.
    """
    width = 12.0 * filt.sigma_f
    real = quad(lambda t: (filter_value(filt, t) * np.exp(-1j * nu * t)).real,
                -width, width, limit=400)[0]
    imag = quad(lambda t: (filter_value(filt, t) * np.exp(-1j * nu * t)).imag,
                -width, width, limit=400)[0]
    return real + 1j * imag


# ---------------------------------------------------------------------------
# filter values


def test_filter_peak_beta_zero():
    filt = GaussianFilter(sigma_f=1.0, beta=0.0)
    assert abs(filter_value(filt, 0.0) - math.sqrt(2.0 / math.pi)) < 1e-14


def test_filter_time_integral_is_one():
    filt = GaussianFilter(sigma_f=1.0, beta=1.0)
    total = _fourier_by_quadrature(filt, 0.0)
    assert abs(total - 1.0) < 1e-10


def test_filter_kms_factorization_even_and_real():
    # fhat(nu) e^{-beta nu / 4} must be even and real
    filt = GaussianFilter(sigma_f=1.0, beta=1.0)
    for nu in (0.5, 1.0, 2.0):
        plus = _fourier_by_quadrature(filt, nu) * math.exp(-filt.beta * nu / 4.0)
        minus = _fourier_by_quadrature(filt, -nu) * math.exp(filt.beta * nu / 4.0)
        assert abs(plus.imag) < 1e-10
        assert abs(minus.imag) < 1e-10
        assert abs(plus - minus) < 1e-10


def test_filter_fourier_at_zero():
    assert abs(filter_fourier(GaussianFilter(2.0, 3.0), 0.0) - 1.0) < 1e-14


def test_filter_fourier_against_quadrature_oracle():
    filt = GaussianFilter(sigma_f=1.0, beta=1.0)
    oracle = _fourier_by_quadrature(filt, 2.0)
    assert abs(filter_fourier(filt, 2.0) - oracle) < 1e-8


def test_filter_fourier_quadrature_grid():
    filt = GaussianFilter(sigma_f=0.7, beta=1.3)
    for nu in np.linspace(-10.0, 10.0, 9):
        oracle = _fourier_by_quadrature(filt, nu)
        assert abs(filter_fourier(filt, nu) - oracle) < 1e-8


def test_filter_fourier_kms_ratio():
    filt = GaussianFilter(sigma_f=1.0, beta=1.0)
    for nu in (0.5, 1.0, 3.0):
        ratio = filter_fourier(filt, nu) / filter_fourier(filt, -nu)
        assert abs(ratio - math.exp(filt.beta * nu / 2.0)) < 1e-12


def test_filter_l1_norm_matches_quadrature():
    filt = GaussianFilter(sigma_f=1.0, beta=2.0)
    oracle = quad(lambda t: abs(filter_value(filt, t)), -15, 15, limit=400)[0]
    assert abs(filter_l1_norm(filt) - oracle) < 1e-10


def test_filter_rejects_bad_width():
    with pytest.raises(ConfigError):
        GaussianFilter(sigma_f=0.0, beta=1.0)


# ---------------------------------------------------------------------------
# jump operators


def test_jump_set_requires_conjugation_closure():
    lower = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    with pytest.raises((ConfigError, InvariantViolation)):
        JumpSet((("lower", lower),))
    both = JumpSet((("lower", lower), ("raise", lower.conj().T)))
    assert len(both.operators) == 2


def test_jump_operators_symmetric_weights_at_beta_zero(single_qubit_z):
    filt = GaussianFilter(sigma_f=1.0, beta=0.0)
    jumps = JumpSet((("x", SIGMA_X.astype(complex)),))
    (op,) = build_jump_operators(single_qubit_z, jumps, filt)
    assert np.max(np.abs(op - math.exp(-0.5) * SIGMA_X)) < 1e-12


def test_jump_operators_match_time_quadrature(single_qubit_z):
    # oracle: L = integral f(t) e^{iHt} A e^{-iHt} dt on a 2001-node Simpson grid
    filt = GaussianFilter(sigma_f=1.0, beta=1.0)
    jumps = JumpSet((("x", SIGMA_X.astype(complex)),))
    (op,) = build_jump_operators(single_qubit_z, jumps, filt)

    ts = np.linspace(-12.0, 12.0, 2001)
    h = np.diag([1.0, -1.0])
    acc = np.zeros((2, 2), dtype=complex)
    weights = np.full(ts.size, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    weights *= (ts[1] - ts[0]) / 3.0
    for t, w in zip(ts, weights):
        u = np.diag(np.exp(1j * np.diag(h) * t))
        acc += w * filter_value(filt, t) * (u @ SIGMA_X @ u.conj().T)
    assert np.max(np.abs(op - acc)) < 1e-8


def test_jump_weight_is_fourier_at_negated_frequency():
    filt = GaussianFilter(sigma_f=1.0, beta=1.0)
    nus = np.array([-2.0, -0.5, 0.0, 1.0, 3.0])
    assert np.allclose(jump_weight(filt, nus), filter_fourier(filt, -nus))


# ---------------------------------------------------------------------------
# coherent terms


def test_coherent_db_vanishes_at_beta_zero(two_site_system):
    filt = GaussianFilter(sigma_f=1.0, beta=0.0)
    g = build_coherent_db(two_site_system, mixed_field_jumps(2), filt)
    assert np.max(np.abs(g)) == 0.0


def test_coherent_db_hermitian(two_site_system):
    for beta in (0.3, 1.0, 2.5):
        g = build_coherent_db(
            two_site_system, mixed_field_jumps(2), GaussianFilter(1.0, beta)
        )
        assert np.max(np.abs(g - g.conj().T)) < 1e-12


def test_coherent_db_against_quadruple_loop_oracle(two_site_system):
    # oracle: raw eigenpair sums with no Bohr clustering or matrix products
    system = two_site_system
    filt = GaussianFilter(sigma_f=1.0, beta=1.0)
    jumps = mixed_field_jumps(2)
    dim = system.dim
    energies = system.energies

    g_eig = np.zeros((dim, dim), dtype=complex)
    for op in jumps.operators:
        a_eig = system.to_eigenbasis(op)
        for c in range(dim):
            for d in range(dim):
                for e in range(dim):
                    l_ec = filter_fourier(
                        filt, -(energies[e] - energies[c])
                    ) * a_eig[e, c]
                    l_ed = filter_fourier(
                        filt, -(energies[e] - energies[d])
                    ) * a_eig[e, d]
                    tanh_f = math.tanh(0.25 * filt.beta * (energies[c] - energies[d]))
                    g_eig[c, d] += 0.5j * tanh_f * np.conj(l_ec) * l_ed
    oracle = system.from_eigenbasis(g_eig)

    g = build_coherent_db(system, jumps, filt)
    assert np.max(np.abs(g - oracle)) < 1e-12


def test_coherent_ls_hermitian_both_methods(single_qubit_z):
    jumps = JumpSet((("x", SIGMA_X.astype(complex)),))
    filt = GaussianFilter(1.0, 1.0)
    for method in ("frequency_domain", "time_quadrature"):
        g = build_coherent_ls(single_qubit_z, jumps, filt, method=method)
        assert np.max(np.abs(g - g.conj().T)) < 1e-9


def test_coherent_ls_methods_agree_single_qubit(single_qubit_z):
    jumps = JumpSet((("x", SIGMA_X.astype(complex)),))
    filt = GaussianFilter(1.0, 1.0)
    freq = build_coherent_ls(single_qubit_z, jumps, filt, method="frequency_domain")
    time = build_coherent_ls(single_qubit_z, jumps, filt, method="time_quadrature")
    assert np.max(np.abs(freq - time)) < 1e-6


def test_coherent_ls_rejects_unknown_method(single_qubit_z):
    with pytest.raises(ConfigError):
        build_coherent_ls(
            single_qubit_z,
            JumpSet((("x", SIGMA_X.astype(complex)),)),
            GaussianFilter(1.0, 1.0),
            method="magic",
        )


# ---------------------------------------------------------------------------
# generators and superoperators


def test_generator_annihilates_trace(two_site_system):
    rng = np.random.default_rng(5)
    for kind in ("db", "ls"):
        gen = assemble_generator(
            kind, two_site_system, mixed_field_jumps(2), GaussianFilter(1.0, 1.0)
        )
        matrix = to_superoperator(gen).matrix
        for _ in range(20):
            a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            rho = a @ a.conj().T
            rho /= np.trace(rho)
            out = unvec(matrix @ vec(rho))
            assert abs(np.trace(out)) < 1e-10
            # Hermiticity preservation
            assert np.max(np.abs(out - out.conj().T)) < 1e-10


def test_generator_hermitian_coherent_part(two_site_system):
    gen = assemble_generator(
        "ls", two_site_system, mixed_field_jumps(2), GaussianFilter(1.0, 1.0)
    )
    assert np.max(np.abs(gen.coherent - gen.coherent.conj().T)) < 1e-10


def test_ls_norm_bound_normalized_jumps(two_site_system):
    # with unit-norm jump operators: ||L_LS[rho]||_1 <= 3 n_B e^{beta^2/(4 sigma^2)}
    filt = GaussianFilter(1.0, 1.0)
    jumps = mixed_field_jumps(2, normalized=True)
    gen = assemble_generator("ls", two_site_system, jumps, filt)
    matrix = to_superoperator(gen).matrix
    bound = 3.0 * len(jumps.operators) * math.exp(filt.beta**2 / (4 * filt.sigma_f**2))
    rng = np.random.default_rng(9)
    for _ in range(10):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        out = unvec(matrix @ vec(rho))
        norm_out = np.sum(np.abs(np.linalg.eigvalsh(out)))
        assert norm_out <= bound + 1e-9


def test_superoperator_zero_generator():
    from thermalsim import LindbladGenerator

    gen = LindbladGenerator(
        jump_ops=(), coherent=np.zeros((2, 2), dtype=complex), kind="db"
    )
    assert np.max(np.abs(to_superoperator(gen).matrix)) == 0.0


def test_superoperator_single_jump_oracle():
    # oracle: elementwise application of L rho L^+ - {L^+L, rho}/2 - i[G, rho]
    from thermalsim import LindbladGenerator

    rng = np.random.default_rng(21)
    l_op = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    g_herm = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    g_herm = 0.5 * (g_herm + g_herm.conj().T)
    gen = LindbladGenerator(jump_ops=(l_op,), coherent=g_herm, kind="ls")
    matrix = to_superoperator(gen).matrix

    rho = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    expected = (
        l_op @ rho @ l_op.conj().T
        - 0.5 * (l_op.conj().T @ l_op @ rho + rho @ l_op.conj().T @ l_op)
        - 1j * (g_herm @ rho - rho @ g_herm)
    )
    assert np.max(np.abs(unvec(matrix @ vec(rho)) - expected)) < 1e-12


def test_superoperator_identity_coherent_is_pure_dissipator():
    from thermalsim import LindbladGenerator

    rng = np.random.default_rng(2)
    l_op = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    with_g = LindbladGenerator(
        jump_ops=(l_op,), coherent=np.eye(2, dtype=complex), kind="ls"
    )
    without = LindbladGenerator(
        jump_ops=(l_op,), coherent=np.zeros((2, 2), dtype=complex), kind="ls"
    )
    assert np.max(np.abs(
        to_superoperator(with_g).matrix - to_superoperator(without).matrix
    )) < 1e-14


# ---------------------------------------------------------------------------
# detailed balance


def test_db_generator_fixes_gibbs(two_site_system):
    gen = assemble_generator(
        "db", two_site_system, mixed_field_jumps(2), GaussianFilter(1.0, 1.0)
    )
    rho_beta = gibbs_state(two_site_system, 1.0).matrix
    image = unvec(to_superoperator(gen).matrix @ vec(rho_beta))
    assert np.sum(np.abs(np.linalg.eigvalsh(0.5 * (image + image.conj().T)))) < 1e-9


def test_kms_residual_db_small_ls_large(two_site_system):
    filt = GaussianFilter(1.0, 1.0)
    jumps = mixed_field_jumps(2)
    rho_beta = gibbs_state(two_site_system, 1.0).matrix
    gen_db = assemble_generator("db", two_site_system, jumps, filt)
    gen_ls = assemble_generator("ls", two_site_system, jumps, filt)
    assert kms_residual(gen_db, rho_beta) <= 1e-8
    assert kms_residual(gen_ls, rho_beta) > 1e-4


def test_kms_residual_beta_zero(two_site_system):
    filt = GaussianFilter(1.0, 0.0)
    gen = assemble_generator("db", two_site_system, mixed_field_jumps(2), filt)
    rho = np.eye(4, dtype=complex) / 4.0
    assert kms_residual(gen, rho) <= 1e-10


# ---------------------------------------------------------------------------
# vectorization plumbing


def test_vec_unvec_roundtrip():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.array_equal(unvec(vec(a)), a)
    # column-stacking convention: vec stacks columns
    assert np.array_equal(vec(a)[:3], a[:, 0])


def test_kraus_choi_roundtrip():
    rng = np.random.default_rng(4)
    raw = [rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(2)]
    total = sum(k.conj().T @ k for k in raw)
    scale = np.linalg.inv(np.linalg.cholesky(total).conj().T)
    kraus = [k @ scale for k in raw]
    matrix = kraus_to_superoperator(kraus)
    rebuilt = choi_to_kraus(superoperator_to_choi(matrix))
    assert np.max(np.abs(kraus_to_superoperator(rebuilt) - matrix)) < 1e-10
