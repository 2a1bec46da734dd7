"""
Experiment configuration: a flat INI-style file with sections, parsed into a
validated dataclass.  Every numeric knob of the pipeline lives here.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    # grids
    fine_nx: int = 128
    fine_ny: int = 128
    coarse_nx: int = 32
    coarse_ny: int = 32
    f_max: int = 16
    # physics
    fr: float = 1.1
    ro: float = 0.2
    f_cor: float = 1.0
    nu: float = 1e-4
    c_d: float = 1e-3
    a_init: float = 0.5
    wind_on: bool = True
    # times
    dt: float = 1e-4
    fine_steps: int = 15_000
    snapshot_stride: int = 1
    forecast_horizons: tuple[int, ...] = (1000, 2000, 4000)
    forecast_total_steps: int = 4000
    da_total_steps: int = 400
    window_steps: int = 20
    # calibration
    cal_tol: float = 1e-8
    cal_max_iter: int = 0  # 0 -> 10 * grid points
    arcsinh_scale: float = 1.0
    # dsb
    k_steps: int = 30
    gamma_min: float = 1e-4
    gamma_max: float = 1e-2
    n_dsb_steps: int = 9
    iters_per_step: int = 10_000
    batch_size: int = 128
    learning_rate: float = 1e-4
    hidden_width: int = 512
    select_round: int = 0  # 0 -> best Frechet score
    # dictionary
    dict_n_samples: int = 40_000
    dict_scale: float = 30.0
    # filter
    n_ens: int = 50
    forecast_n_ens: int = 20
    d_obs: int = 4
    sigma_obs: float = 0.01
    ess_threshold: float = 0.5
    jitter_moves: int = 5
    jitter_rho: float = 0.9
    max_temper_stages: int = 50
    # run
    seed: int = 0

    def validate(self) -> None:
        if self.fine_nx % self.coarse_nx or self.fine_ny % self.coarse_ny:
            raise ConfigError(
                f"fine grid {self.fine_nx}x{self.fine_ny} not divisible by "
                f"coarse {self.coarse_nx}x{self.coarse_ny}"
            )
        if self.f_max > min(self.coarse_nx, self.coarse_ny) // 2:
            raise ConfigError(
                f"f_max={self.f_max} exceeds coarse Nyquist "
                f"{min(self.coarse_nx, self.coarse_ny) // 2}"
            )
        if self.f_max < 1:
            raise ConfigError("f_max must be >= 1")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.window_steps < 1 or self.da_total_steps < self.window_steps:
            raise ConfigError("need da_total_steps >= window_steps >= 1")
        k = round(self.d_obs**0.5)
        if k * k != self.d_obs:
            raise ConfigError(f"d_obs={self.d_obs} must be a perfect square")


_SECTIONS = {
    "grids": ["fine_nx", "fine_ny", "coarse_nx", "coarse_ny", "f_max"],
    "physics": ["fr", "ro", "f_cor", "nu", "c_d", "a_init", "wind_on"],
    "times": [
        "dt", "fine_steps", "snapshot_stride", "forecast_horizons",
        "forecast_total_steps", "da_total_steps", "window_steps",
    ],
    "calibration": ["cal_tol", "cal_max_iter", "arcsinh_scale"],
    "dsb": [
        "k_steps", "gamma_min", "gamma_max", "n_dsb_steps", "iters_per_step",
        "batch_size", "learning_rate", "hidden_width", "select_round",
    ],
    "dictionary": ["dict_n_samples", "dict_scale"],
    "filter": [
        "n_ens", "forecast_n_ens", "d_obs", "sigma_obs", "ess_threshold",
        "jitter_moves", "jitter_rho", "max_temper_stages",
    ],
    "run": ["seed"],
}


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)

    cfg = ExperimentConfig()
    known = {k: sec for sec, keys in _SECTIONS.items() for k in keys}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in known or known[key] != section:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            default = getattr(cfg, key)
            try:
                if isinstance(default, bool):
                    setattr(cfg, key, value.strip().lower() in ("1", "true", "yes", "on"))
                elif isinstance(default, int):
                    setattr(cfg, key, int(value))
                elif isinstance(default, float):
                    setattr(cfg, key, float(value))
                elif isinstance(default, tuple):
                    setattr(cfg, key, tuple(int(v) for v in value.split(",")))
                else:
                    setattr(cfg, key, value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
    cfg.validate()
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Render a config back to the INI text form (for manifests)."""
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            value = getattr(cfg, key)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
