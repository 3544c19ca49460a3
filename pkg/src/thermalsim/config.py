"""Flat key=value experiment configuration.

Grammar (documented in README): one ``key = value`` pair per line; ``#``
starts a comment (full-line or trailing); blank lines are skipped.  Keys are
snake_case and typed; unknown keys are a hard error, not a warning.  Command
line ``--set key=value`` overrides are applied after the file in the order
given (later wins).

A handful of keys have experiment-dependent defaults (``j_values``,
``n_steps``); the sentinel ``auto`` selects them.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, fields

from .errors import ConfigError

EXPERIMENTS = (
    "gap_sweep_j",
    "fixpoint_sweep_j",
    "resonance_sweep_t",
    "resonance_sweep_beta",
    "resonance_trace_dist",
    "trajectories",
    "randomized_bath",
    "validate",
)

_SENTINEL_AUTO = "auto"


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_float_list(text: str):
    if text.strip().lower() == _SENTINEL_AUTO:
        return None
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise ConfigError("expected at least one number in the list")
    return values


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {text!r}") from exc


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {text!r}") from exc


def _parse_steps(text: str):
    if text.strip().lower() == _SENTINEL_AUTO:
        return None
    return _parse_int(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved settings for one experiment run."""

    experiment: str
    n_sites: int = 2
    g: float = 0.9045
    h: float = 0.809
    periodic: bool = False
    beta: float = 1.0
    sigma_f: float = 1.0
    mean_time: float = 10.0
    randomization_time: float = 1.0
    coupling: float = 0.01
    quadrature_nodes: int = 21
    bath_omega_max: float = 3.0
    j_values: tuple | None = None  # auto: per-experiment default
    t_min: float = 6.0
    t_max: float = 14.0
    t_points: int = 81
    resonance_index: int = 4
    beta_min: float = 0.2
    beta_max: float = 2.0
    beta_points: int = 10
    n_traj: int = 50
    n_steps: int | None = None  # auto: per-experiment, per-J default
    record_stride: int = 10
    cache_grid: float = 1e-4
    freq_grid: float = 1e-3
    seed: int = 20260813
    threads: int = 0
    large: bool = False
    force: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; "
                f"choose one of {', '.join(EXPERIMENTS)}"
            )
        if self.n_sites < 1 or self.n_sites > 6:
            raise ConfigError("n_sites must be between 1 and 6")
        if self.n_traj < 2:
            raise ConfigError("n_traj must be at least 2")
        if self.t_points < 2 or self.beta_points < 2:
            raise ConfigError("sweep grids need at least 2 points")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0 (0 = auto)")

    def resolved(self) -> dict:
        """Plain JSON-serializable mapping of every setting (for the manifest)."""
        out = {}
        for field in fields(self):
            value = getattr(self, field.name)
            if isinstance(value, tuple):
                value = list(value)
            out[field.name] = value
        return out


_PARSERS = {
    "n_sites": _parse_int,
    "g": _parse_float,
    "h": _parse_float,
    "periodic": _parse_bool,
    "beta": _parse_float,
    "sigma_f": _parse_float,
    "mean_time": _parse_float,
    "randomization_time": _parse_float,
    "coupling": _parse_float,
    "quadrature_nodes": _parse_int,
    "bath_omega_max": _parse_float,
    "j_values": _parse_float_list,
    "t_min": _parse_float,
    "t_max": _parse_float,
    "t_points": _parse_int,
    "resonance_index": _parse_int,
    "beta_min": _parse_float,
    "beta_max": _parse_float,
    "beta_points": _parse_int,
    "n_traj": _parse_int,
    "n_steps": _parse_steps,
    "record_stride": _parse_int,
    "cache_grid": _parse_float,
    "freq_grid": _parse_float,
    "seed": _parse_int,
    "threads": _parse_int,
    "large": _parse_bool,
    "force": _parse_bool,
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse the key=value grammar into a raw string mapping."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value in {line!r}")
        raw[key] = value
    return raw


def parse_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def apply_overrides(raw: dict, overrides) -> dict:
    """Merge ``key=value`` strings from the command line, later wins."""
    merged = dict(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        merged[key] = value
    return merged


def build_config(experiment: str, raw: dict) -> ExperimentConfig:
    """Coerce a raw string mapping to a typed config, rejecting unknown keys."""
    values = {}
    for key, text in raw.items():
        parser = _PARSERS.get(key)
        if parser is None:
            hint = difflib.get_close_matches(key, _PARSERS.keys(), n=1)
            suffix = f" (did you mean {hint[0]!r}?)" if hint else ""
            raise ConfigError(f"unknown config key {key!r}{suffix}")
        try:
            values[key] = parser(text)
        except ConfigError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
    return ExperimentConfig(experiment=experiment, **values)


def default_j_values(config: ExperimentConfig) -> tuple:
    """The experiment's J grid when ``j_values = auto``."""
    if config.j_values is not None:
        return config.j_values
    if config.experiment in ("gap_sweep_j", "fixpoint_sweep_j"):
        return (0.02, 0.04, 0.08, 0.16)
    if config.experiment == "resonance_trace_dist":
        return (0.01, 0.02, 0.04)
    if config.experiment in ("trajectories", "randomized_bath"):
        return (0.1, 0.25)
    return (config.coupling,)


def default_n_steps(config: ExperimentConfig, coupling: float) -> int:
    """Trajectory length when ``n_steps = auto``.

    2000 cycles for every ensemble: the spread of the trajectory fan
    saturates well before that, and at J = 0.25 the mean also reaches the
    channel fixed point.  At J = 0.1 the mean is still approaching its
    fixed point at 2000 steps (relaxation slows as 1/J^2); the summary
    columns ``plateaued`` and ``fixed_point_value`` make that visible, and
    ``n_steps`` can always be raised explicitly for longer runs.
    """
    del coupling
    if config.n_steps is not None:
        return config.n_steps
    return 2000
