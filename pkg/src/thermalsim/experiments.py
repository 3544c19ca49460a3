"""Named experiments: deterministic CSV + manifest emission for each figure.

Each experiment function maps a resolved :class:`ExperimentConfig` to an
ordered mapping ``{filename: (header, rows)}`` plus a manifest ``extras``
dict (fit slopes, runtime notes).  ``run_experiment`` owns the output
directory: it refuses to overwrite a previous run (presence of
``manifest.json``) unless forced, writes RFC-4180 CSVs with 17-significant-
digit floats, and records the fully resolved configuration so a rerun is
byte-identical apart from the manifest timestamp.

Eigenstate labels in resonance outputs follow the descending convention
(label 1 is the highest-energy eigenstate), so the resonant pair of the
2-site model is (1, 2) and the tracked non-resonant population is labelled
3; columns are named accordingly.
"""

from __future__ import annotations

import csv
import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy.linalg

from . import __version__
from .analysis import fixed_point, resonance_solve, spectral_gap, trace_distance
from .collision import (
    ProtocolParams,
    channel_averaged,
    channel_kls,
    channel_randomized_bath,
    channel_single,
)
from .config import ExperimentConfig, default_j_values, default_n_steps
from .errors import ConfigError, InvariantViolation
from .operators import (
    SIGMA_Z,
    DensityMatrix,
    build_mixed_field_ising,
    gibbs_state,
    site_operator,
    spectral_decompose,
)
from .sampler import (
    GaussianFilter,
    assemble_generator,
    kms_residual,
    kraus_to_superoperator,
    mixed_field_jumps,
    superoperator_to_choi,
    to_superoperator,
    vec,
)
from .trajectories import (
    ensemble_stats,
    fit_contraction,
    randomized_bath_ensemble,
    variance_bound,
)

__all__ = ["run_experiment", "experiment_names"]

_FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# shared setup helpers


def _system_for(config: ExperimentConfig, n_sites: int):
    ham = build_mixed_field_ising(n_sites, config.g, config.h, config.periodic)
    return spectral_decompose(ham)


def _params_for(
    config: ExperimentConfig,
    coupling: float,
    n_sites: int,
    *,
    mean_time: float | None = None,
    beta: float | None = None,
    nodes: int | None = None,
    with_bath: bool = False,
) -> ProtocolParams:
    filt = GaussianFilter(
        sigma_f=config.sigma_f, beta=config.beta if beta is None else beta
    )
    return ProtocolParams(
        coupling=coupling,
        mean_time=config.mean_time if mean_time is None else mean_time,
        randomization_time=config.randomization_time,
        filter=filt,
        jumps=mixed_field_jumps(n_sites),
        quadrature_nodes=config.quadrature_nodes if nodes is None else nodes,
        bath_omega_max=config.bath_omega_max if with_bath else 0.0,
    )


def _observables(system, n_sites: int):
    """The two reported observables: total energy and the Z_1 Z_2 correlator."""
    zz = site_operator(SIGMA_Z, 0, n_sites) @ site_operator(SIGMA_Z, 1, n_sites)
    return system.hamiltonian, zz


def _maximally_mixed(dim: int) -> DensityMatrix:
    return DensityMatrix(np.eye(dim, dtype=complex) / dim)


def _resonant_bohr(system) -> float:
    """The Bohr frequency between descending levels 1 and 2 (the top pair)."""
    energies = system.energies
    return float(energies[-1] - energies[-2])


def _resonance_time(system, k: int) -> float:
    return 2.0 * math.pi * k / _resonant_bohr(system)


def _loglog_slope(xs, ys):
    """Least-squares log-log slope; None when the grid is too short to fit."""
    if len(xs) < 2:
        return None
    return float(np.polyfit(np.log(np.asarray(xs)), np.log(np.asarray(ys)), 1)[0])


def _pool_map(function, items, threads: int):
    """Map preserving order; a thread pool only when threads > 1."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(function, items))
    return [function(item) for item in items]


def _gap_of(channel_or_matrix) -> float:
    rho_fix = fixed_point(channel_or_matrix)
    return spectral_gap(channel_or_matrix, rho_fix).lambda_gap


# ---------------------------------------------------------------------------
# experiments


def _run_gap_sweep(config: ExperimentConfig):
    n_sites = 6 if config.large else config.n_sites
    if config.large:
        print(
            "gap_sweep_j --large: 12-qubit propagation and dense 4096^2 "
            "spectra; estimated 2-4 hours",
            flush=True,
        )
    system = _system_for(config, n_sites)
    js = default_j_values(config)
    gen_ls = to_superoperator(
        assemble_generator("ls", system, mixed_field_jumps(n_sites),
                           GaussianFilter(config.sigma_f, config.beta))
    ).matrix
    gen_db = to_superoperator(
        assemble_generator("db", system, mixed_field_jumps(n_sites),
                           GaussianFilter(config.sigma_f, config.beta))
    ).matrix

    def one_point(coupling: float):
        params = _params_for(config, coupling, n_sites)
        gap_k = _gap_of(channel_averaged(system, params))
        gap_k0 = _gap_of(channel_single(system, params, 0.0))
        gap_ls = _gap_of(scipy.linalg.expm(coupling**2 * gen_ls))
        gap_db = _gap_of(scipy.linalg.expm(coupling**2 * gen_db))
        return coupling, gap_k, gap_k0, gap_ls, gap_db

    rows = _pool_map(one_point, js, config.threads)
    columns = list(zip(*rows))
    extras = {
        "slope_gap_K": _loglog_slope(columns[0], columns[1]),
        "slope_gap_K0": _loglog_slope(columns[0], columns[2]),
        "slope_gap_expLLS": _loglog_slope(columns[0], columns[3]),
        "slope_gap_expLDB": _loglog_slope(columns[0], columns[4]),
        "n_sites": n_sites,
    }
    header = ["J", "gap_K", "gap_K0", "gap_expLLS", "gap_expLDB"]
    return {"gap_vs_J.csv": (header, rows)}, extras


def _run_fixpoint_sweep(config: ExperimentConfig):
    n_sites = config.n_sites
    system = _system_for(config, n_sites)
    rho_beta = gibbs_state(system, config.beta).matrix
    js = default_j_values(config)

    def one_point(coupling: float):
        params = _params_for(config, coupling, n_sites)
        dist_k = trace_distance(
            fixed_point(channel_averaged(system, params)).matrix, rho_beta
        )
        dist_k0 = trace_distance(
            fixed_point(channel_single(system, params, 0.0)).matrix, rho_beta
        )
        return coupling, dist_k, dist_k0

    rows = _pool_map(one_point, js, config.threads)
    columns = list(zip(*rows))
    extras = {
        "slope_dist_K": _loglog_slope(columns[0], columns[1]),
        "slope_dist_K0": _loglog_slope(columns[0], columns[2]),
        "n_sites": n_sites,
    }
    header = ["J", "dist_K", "dist_K0"]
    return {"fixpoint_vs_J.csv": (header, rows)}, extras


def _resonance_grid(config: ExperimentConfig, system) -> np.ndarray:
    """Linear T grid with the exact resonance times T_k spliced in."""
    grid = np.linspace(config.t_min, config.t_max, config.t_points)
    bohr = _resonant_bohr(system)
    k_lo = math.ceil(bohr * config.t_min / (2.0 * math.pi))
    k_hi = math.floor(bohr * config.t_max / (2.0 * math.pi))
    exact = [2.0 * math.pi * k / bohr for k in range(k_lo, k_hi + 1)]
    return np.unique(np.concatenate([grid, np.asarray(exact)]))


def _run_resonance_sweep_t(config: ExperimentConfig):
    system = _system_for(config, config.n_sites)
    times = _resonance_grid(config, system)
    top = system.dim - 1  # descending labels 1, 2 = ascending indices top, top-1

    def one_point(mean_time: float):
        params = _params_for(config, config.coupling, config.n_sites,
                             mean_time=float(mean_time))
        rho_k0 = fixed_point(channel_single(system, params, 0.0)).matrix
        rho_k = fixed_point(channel_averaged(system, params)).matrix
        off_k0 = abs(system.to_eigenbasis(rho_k0)[top, top - 1])
        off_k = abs(system.to_eigenbasis(rho_k)[top, top - 1])
        return float(mean_time), off_k0, off_k

    rows = _pool_map(one_point, times, config.threads)
    header = ["T", "abs_rho12_K0", "abs_rho12_K"]
    extras = {"resonant_bohr_frequency": _resonant_bohr(system)}
    return {"offdiag_vs_T.csv": (header, rows)}, extras


def _run_resonance_sweep_beta(config: ExperimentConfig):
    system = _system_for(config, config.n_sites)
    t_res = _resonance_time(system, config.resonance_index)
    betas = np.linspace(config.beta_min, config.beta_max, config.beta_points)
    top = system.dim - 1
    tracked = [(top, top), (top, top - 1), (top - 2, top - 2)]

    def one_point(beta: float):
        beta = float(beta)
        params = _params_for(config, config.coupling, config.n_sites,
                             mean_time=t_res, beta=beta)
        gen_ls = assemble_generator(
            "ls", system, params.jumps, GaussianFilter(config.sigma_f, beta)
        )
        prediction = resonance_solve(system, gen_ls, t_res)
        rho_pred = system.to_eigenbasis(prediction.rho0)
        rho_k0 = system.to_eigenbasis(
            fixed_point(channel_single(system, params, 0.0)).matrix
        )
        rho_k = system.to_eigenbasis(
            fixed_point(channel_averaged(system, params)).matrix
        )
        rho_th = system.to_eigenbasis(gibbs_state(system, beta).matrix)
        row = [beta]
        for a, b in tracked:
            row.extend(
                [abs(m[a, b]) for m in (rho_k0, rho_pred, rho_k, rho_th)]
            )
        return tuple(row)

    rows = _pool_map(one_point, betas, config.threads)
    header = ["beta"]
    for label in ("rho11", "rho12", "rho33"):
        header.extend(
            [f"abs_{label}_K0", f"abs_{label}_pred",
             f"abs_{label}_K", f"abs_{label}_thermal"]
        )
    extras = {"resonance_time": t_res, "resonance_index": config.resonance_index}
    return {"resonance_vs_beta.csv": (header, rows)}, extras


def _run_resonance_trace_dist(config: ExperimentConfig):
    system = _system_for(config, config.n_sites)
    t_res = _resonance_time(system, config.resonance_index)
    rho_beta = gibbs_state(system, config.beta).matrix
    js = default_j_values(config)

    def one_point(coupling: float):
        params = _params_for(config, coupling, config.n_sites, mean_time=t_res)
        dist_k0 = trace_distance(
            fixed_point(channel_single(system, params, 0.0)).matrix, rho_beta
        )
        dist_k = trace_distance(
            fixed_point(channel_averaged(system, params)).matrix, rho_beta
        )
        return coupling, dist_k0, dist_k

    rows = _pool_map(one_point, js, config.threads)
    header = ["J", "dist_K0", "dist_K"]
    extras = {"resonance_time": t_res}
    return {"trace_dist_resonance.csv": (header, rows)}, extras


def _reference_series(channel, rho0: np.ndarray, observables, recorded_steps):
    """Tr[O K^m rho0] at the recorded steps, by superoperator power iteration."""
    matrix = channel.superoperator().matrix
    state = vec(rho0)
    recorded = set(int(step) for step in recorded_steps)
    dim = rho0.shape[0]
    values = np.empty((len(recorded_steps), len(observables)))
    row = 0
    for step in range(1, max(recorded) + 1):
        state = matrix @ state
        if step in recorded:
            rho = state.reshape(dim, dim, order="F")
            for k, obs in enumerate(observables):
                values[row, k] = np.trace(obs @ rho).real
            row += 1
    return values


def _trajectory_files(tag, obs_names, ens, reference):
    """Wide per-(J, observable) CSV blocks for a trajectory ensemble."""
    files = {}
    n_traj = ens.series.shape[0]
    for k, name in enumerate(obs_names):
        header = ["step", "kpower", "mean", "std", "stderr"]
        header += [f"traj_{i:02d}" for i in range(n_traj)]
        rows = []
        for row_idx, step in enumerate(ens.recorded_steps):
            row = [int(step), reference[row_idx, k], ens.mean[row_idx, k],
                   ens.std[row_idx, k], ens.stderr[row_idx, k]]
            row.extend(ens.series[:, row_idx, k])
            rows.append(tuple(row))
        files[f"{tag}_{name}.csv"] = (header, rows)
    return files


_SUMMARY_HEADER = [
    "J", "observable", "n_sites", "n_steps", "final_std", "plateaued",
    "thermal_value", "fixed_point_value", "c_estimate", "tau_mix",
    "var_bound", "var_empirical", "shot_noise", "sequence_variance",
]


def _summary_row(coupling, name, n_sites, n_steps, ens, k, thermal, fix_value,
                 fit, report):
    return (
        coupling, name, n_sites, n_steps, ens.final_std[k],
        int(bool(ens.plateaued[k])), thermal, fix_value,
        fit.c_estimate, fit.tau_mix, report.bound, report.empirical,
        report.shot_noise, report.sequence_variance,
    )


def _run_trajectories(config: ExperimentConfig):
    system = _system_for(config, config.n_sites)
    ham, zz = _observables(system, config.n_sites)
    obs_names = ("H", "ZZ")
    rho0 = _maximally_mixed(system.dim)
    rho_beta = gibbs_state(system, config.beta).matrix
    files: dict = {}
    summary_rows = []
    for coupling in default_j_values(config):
        params = _params_for(config, coupling, config.n_sites)
        n_steps = default_n_steps(config, coupling)
        ens = ensemble_stats(
            system, params, config.n_traj, n_steps, rho0, [ham, zz],
            config.seed, record_stride=config.record_stride,
            cache_grid=config.cache_grid,
        )
        channel = channel_averaged(system, params)
        reference = _reference_series(
            channel, rho0.matrix, [ham, zz], ens.recorded_steps
        )
        files.update(_trajectory_files(f"traj_J{coupling:g}", obs_names, ens,
                                       reference))
        rho_fix = fixed_point(channel).matrix
        for k, (name, obs) in enumerate(zip(obs_names, (ham, zz))):
            fit = fit_contraction(channel, obs, DensityMatrix(rho_fix))
            report = variance_bound(
                system, params, obs, min(n_steps, 2000), fit.c_estimate,
                fit.tau_mix, n_traj=config.n_traj, rho0=rho0,
                base_seed=config.seed,
            )
            summary_rows.append(_summary_row(
                coupling, name, config.n_sites, n_steps, ens, k,
                float(np.trace(obs @ rho_beta).real),
                float(np.trace(obs @ rho_fix).real), fit, report,
            ))
    extras = {}
    if config.large:
        print("trajectories --large: 6-site ensembles, estimated 25-40 min",
              flush=True)
        files_6, rows_6 = _run_trajectories_large(config)
        files.update(files_6)
        summary_rows.extend(rows_6)
        extras["large"] = True
    files["trajectory_summary.csv"] = (_SUMMARY_HEADER, summary_rows)
    return files, extras


def _run_trajectories_large(config: ExperimentConfig):
    """6-site Z1 Z2 ensembles (phase-advance engine, batched)."""
    system = _system_for(config, 6)
    _, zz = _observables(system, 6)
    rho0 = _maximally_mixed(system.dim)
    rho_beta = gibbs_state(system, config.beta).matrix
    files: dict = {}
    rows = []
    for coupling in default_j_values(config):
        params = _params_for(config, coupling, 6)
        n_steps = config.n_steps if config.n_steps is not None else 2000
        ens = ensemble_stats(
            system, params, config.n_traj, n_steps, rho0, [zz],
            config.seed, record_stride=config.record_stride,
            cache_grid=config.cache_grid,
        )
        channel = channel_averaged(system, params)
        reference = _reference_series(
            channel, rho0.matrix, [zz], ens.recorded_steps
        )
        files.update(_trajectory_files(f"traj6_J{coupling:g}", ("ZZ",), ens,
                                       reference))
        rho_fix = fixed_point(channel).matrix
        fit = fit_contraction(channel, zz, DensityMatrix(rho_fix))
        report = variance_bound(
            system, params, zz, n_steps, fit.c_estimate, fit.tau_mix,
            ensemble=None, n_traj=config.n_traj, rho0=rho0,
            base_seed=config.seed,
        )
        rows.append(_summary_row(
            coupling, "ZZ", 6, n_steps, ens, 0,
            float(np.trace(zz @ rho_beta).real),
            float(np.trace(zz @ rho_fix).real), fit, report,
        ))
    return files, rows


def _run_randomized_bath(config: ExperimentConfig):
    system = _system_for(config, config.n_sites)
    ham, zz = _observables(system, config.n_sites)
    obs_names = ("H", "ZZ")
    rho0 = _maximally_mixed(system.dim)
    files: dict = {}
    header = _SUMMARY_HEADER[:6] + ["timeonly_final_std", "mean_final"]
    summary_rows = []
    for coupling in default_j_values(config):
        n_steps = default_n_steps(config, coupling)
        params = _params_for(config, coupling, config.n_sites, with_bath=True)
        ens = randomized_bath_ensemble(
            system, params, config.n_traj, n_steps, rho0, [ham, zz],
            config.seed, record_stride=config.record_stride,
            cache_grid=config.cache_grid, freq_grid=config.freq_grid,
        )
        matched = ensemble_stats(
            system, _params_for(config, coupling, config.n_sites),
            config.n_traj, n_steps, rho0, [ham, zz], config.seed,
            record_stride=config.record_stride, cache_grid=config.cache_grid,
        )
        reference = np.zeros((len(ens.recorded_steps), 2))
        files.update(_trajectory_files(f"rb_J{coupling:g}", obs_names, ens,
                                       reference))
        for k, name in enumerate(obs_names):
            summary_rows.append((
                coupling, name, config.n_sites, n_steps, ens.final_std[k],
                int(bool(ens.plateaued[k])), matched.final_std[k],
                ens.mean[-1, k],
            ))
    return {"rb_summary.csv": (header, summary_rows), **files}, {}


def _channel_validation_rows(label, kraus_ops, dim):
    total = sum(op.conj().T @ op for op in kraus_ops)
    tp_defect = float(np.max(np.abs(total - np.eye(dim))))
    choi = superoperator_to_choi(kraus_to_superoperator(kraus_ops))
    choi_min = float(np.linalg.eigvalsh(choi)[0])
    return [
        (f"tp_defect_{label}", tp_defect, 1e-8, "<="),
        (f"choi_min_{label}", choi_min, -1e-8, ">="),
    ]


def _run_validate(config: ExperimentConfig):
    system = _system_for(config, config.n_sites)
    jumps = mixed_field_jumps(config.n_sites)
    checks = []
    for beta in (0.5, 1.0, 2.0):
        filt = GaussianFilter(config.sigma_f, beta)
        gen_db = assemble_generator("db", system, jumps, filt)
        rho_beta = gibbs_state(system, beta).matrix
        image = to_superoperator(gen_db).matrix @ vec(rho_beta)
        fixed_defect = float(
            np.sum(np.abs(scipy.linalg.svdvals(
                image.reshape(system.dim, system.dim, order="F")
            )))
        )
        checks.append((f"db_fixes_gibbs_beta{beta:g}", fixed_defect, 1e-8, "<="))
        checks.append(
            (f"kms_residual_beta{beta:g}", kms_residual(gen_db, rho_beta),
             1e-8, "<=")
        )
    base = _params_for(config, 0.1, config.n_sites, with_bath=True)
    gen_ls = assemble_generator(
        "ls", system, jumps, GaussianFilter(config.sigma_f, config.beta)
    )
    channels = {
        "Kx": channel_single(system, base, 0.7),
        "K0": channel_single(system, base, 0.0),
        "K": channel_averaged(system, base),
        "KLS": channel_kls(system, base, gen_ls),
        "Kbath": channel_randomized_bath(system, base, 1.7, 0.3),
    }
    for label, channel in channels.items():
        if hasattr(channel, "kraus_ops"):
            checks.extend(
                _channel_validation_rows(label, channel.kraus_ops, system.dim)
            )
        else:
            for i, (_, comp) in enumerate(channel.components):
                if i >= 1:
                    break  # one representative component; mixture re-checked below
                checks.extend(
                    _channel_validation_rows(
                        f"{label}_comp0", comp.kraus_ops, system.dim
                    )
                )
            matrix = channel.superoperator().matrix
            target = vec(np.eye(system.dim))
            tp = float(np.max(np.abs(matrix.conj().T @ target - target)))
            choi_min = float(
                np.linalg.eigvalsh(superoperator_to_choi(matrix))[0]
            )
            checks.append((f"tp_defect_{label}", tp, 1e-8, "<="))
            checks.append((f"choi_min_{label}", choi_min, -1e-8, ">="))
    coarse = channel_averaged(system, base).superoperator().matrix
    fine = channel_averaged(
        system, replace(base, quadrature_nodes=41)
    ).superoperator().matrix
    checks.append(
        ("quadrature_21_vs_41",
         float(np.linalg.norm(coarse - fine, 2)), 1e-8, "<=")
    )
    rows = []
    failures = []
    for name, value, threshold, relation in checks:
        passed = value <= threshold if relation == "<=" else value >= threshold
        rows.append((name, value, threshold, relation, "pass" if passed else "fail"))
        if not passed:
            failures.append(name)
    header = ["check", "value", "threshold", "relation", "status"]
    extras = {"failures": failures}
    return {"validate_report.csv": (header, rows)}, extras


_EXPERIMENTS = {
    "gap_sweep_j": _run_gap_sweep,
    "fixpoint_sweep_j": _run_fixpoint_sweep,
    "resonance_sweep_t": _run_resonance_sweep_t,
    "resonance_sweep_beta": _run_resonance_sweep_beta,
    "resonance_trace_dist": _run_resonance_trace_dist,
    "trajectories": _run_trajectories,
    "randomized_bath": _run_randomized_bath,
    "validate": _run_validate,
}


def experiment_names():
    return tuple(_EXPERIMENTS)


# ---------------------------------------------------------------------------
# serialization


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _FLOAT_FMT % float(value)
    return str(value)


def _write_csv(path: Path, header, rows) -> int:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(cell) for cell in row])
    return len(rows)


def _version_string() -> str:
    version = __version__
    try:
        described = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if described.returncode == 0 and described.stdout.strip():
            return f"{version}+g{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return version


def run_experiment(config: ExperimentConfig, out_dir) -> dict:
    """Run one experiment and write its CSVs and manifest under ``out_dir``.

    Returns the manifest mapping.  Raises ``ConfigError`` for unknown
    experiments, ``FileExistsError`` when the directory already holds a run
    manifest and ``config.force`` is not set, and lets numerical-invariant
    errors propagate.
    """
    runner = _EXPERIMENTS.get(config.experiment)
    if runner is None:
        raise ConfigError(f"unknown experiment {config.experiment!r}")
    out_path = Path(out_dir)
    manifest_path = out_path / "manifest.json"
    if manifest_path.exists() and not config.force:
        raise FileExistsError(
            f"{manifest_path} exists; re-run with --force to overwrite"
        )
    out_path.mkdir(parents=True, exist_ok=True)
    started = time.time()
    files, extras = runner(config)
    counts = {}
    for name, (header, rows) in files.items():
        counts[name] = _write_csv(out_path / name, header, rows)
    manifest = {
        "experiment": config.experiment,
        "version": _version_string(),
        "config": config.resolved(),
        "wall_seconds": round(time.time() - started, 3),
        "files": counts,
        "extras": extras,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    with open(manifest_path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    if config.experiment == "validate" and extras.get("failures"):
        raise InvariantViolation(
            "validation failures: " + ", ".join(extras["failures"])
        )
    return manifest
