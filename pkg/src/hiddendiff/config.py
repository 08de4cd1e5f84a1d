"""Flat ``key=value`` experiment configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .model import ModelSpec
from .particle import PfConfig


@dataclass(frozen=True)
class ExperimentConfig:
    # continuous model
    theta: tuple = (-0.1, 0.1)
    D: float = 0.8
    L: float = 32.0
    sigma: float = 0.0
    dt: float = 1.0
    x0: float = math.nan  # nan: draw X_0 ~ N(0, 1)
    T: int = 1000
    # particle filter
    n_particles: int = 1000
    jitter_eps: float = 0.005
    obs_bandwidth: float = 0.005
    init_mean: tuple = (1.0, 0.0, 0.0, 0.0)
    init_cov_diag: tuple = (25.0, 0.01, 0.01, 0.01)
    resampling: str = "multinomial"
    snapshots: tuple = (10, 100, 1000)
    hist_bins: int = 64
    # modified Baum-Welch
    N: int = 32
    M: int = 16
    K: int = 1
    substeps: int = 4
    emission_floor: float = 1e-4
    init_D: float = 0.5
    init_drift: float = 0.01
    tol: float = 1e-6
    max_outer: int = 200
    newton_tol: float = 1e-10
    newton_max_iter: int = 100
    # benchmark
    n_runs: int = 50
    np_grid: tuple = (100, 500, 1000)
    divergence_threshold: float = 0.5
    bench_mbw: bool = True
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be at least 1")
        if not self.np_grid:
            raise ConfigError("np_grid must not be empty")
        if self.N < 3 or self.M < 2 or self.K < 0 or self.substeps < 1:
            raise ConfigError("need N >= 3, M >= 2, K >= 0, substeps >= 1")
        if not self.divergence_threshold >= 0:
            raise ConfigError("divergence_threshold must be nonnegative")
        # building the component configs validates them
        self.model()
        self.pf()

    def model(self) -> ModelSpec:
        return ModelSpec(theta=self.theta, D=self.D, L=self.L, sigma=self.sigma, dt=self.dt)

    def pf(self, n_particles=None, seed=None) -> PfConfig:
        return PfConfig(
            n_particles=self.n_particles if n_particles is None else n_particles,
            jitter_eps=self.jitter_eps,
            obs_bandwidth=self.obs_bandwidth,
            init_mean=self.init_mean,
            init_cov_diag=self.init_cov_diag,
            resampling=self.resampling,
            seed=self.seed if seed is None else seed,
        )

    @property
    def dx(self):
        return self.L / self.N

    @property
    def D0(self):
        """Lattice constant ``dx^2 / dt_chain`` of the sub-stepped chain."""
        return self.dx**2 / (self.dt / self.substeps)

    @property
    def x0_value(self):
        return None if math.isnan(self.x0) else self.x0

    def with_overrides(self, **kw):
        return replace(self, **kw)

    def to_text(self) -> str:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "theta":
                out += [f"theta{n}={v!r}" for n, v in enumerate(value)]
            else:
                out.append(f"{f.name}={format_value(value)}")
        return "\n".join(out) + "\n"


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
KEYS = [f.name for f in fields(ExperimentConfig) if f.name != "theta"]


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(name, raw):
    default = getattr(ExperimentConfig, name)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            item = int if name in ("np_grid", "snapshots") else float
            return tuple(item(v) for v in raw.split(",") if v.strip())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_pairs(pairs: dict) -> dict:
    """Coerce string values to ``ExperimentConfig`` field values."""
    out = {}
    thetas = {}
    for key, raw in pairs.items():
        if key.startswith("theta") and key[5:].isdigit():
            try:
                thetas[int(key[5:])] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        elif key in KEYS:
            out[key] = _coerce(key, str(raw))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if thetas:
        out["thetas"] = thetas
    return out


def read_pairs(text: str) -> dict:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value")
        pairs[key.strip()] = value.strip()
    return pairs


def build_config(pairs: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    values = parse_pairs(pairs)
    thetas = values.pop("thetas", None)
    if thetas is not None:
        merged = dict(enumerate(base.theta))
        merged.update(thetas)
        if sorted(merged) != list(range(len(merged))):
            raise ConfigError("theta keys must be theta0..thetaK without gaps")
        values["theta"] = tuple(merged[n] for n in sorted(merged))
    try:
        return replace(base, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(read_pairs(text))
