"""Shared constants and builders for the test suite."""

from thermalsim import GaussianFilter, ProtocolParams, mixed_field_jumps

# reference 2-site model parameters used across the suite
G_FIELD = 0.9045
H_FIELD = 0.809


def make_params(n_sites=2, coupling=0.1, mean_time=10.0, randomization_time=1.0,
                beta=1.0, sigma_f=1.0, nodes=21, bath_omega_max=0.0, **kwargs):
    return ProtocolParams(
        coupling=coupling,
        mean_time=mean_time,
        randomization_time=randomization_time,
        filter=GaussianFilter(sigma_f=sigma_f, beta=beta),
        jumps=mixed_field_jumps(n_sites),
        quadrature_nodes=nodes,
        bath_omega_max=bath_omega_max,
        **kwargs,
    )
