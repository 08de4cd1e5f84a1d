"""Langevin dynamics in a periodic potential observed through a cosine.

The latent state follows the Ito equation

    dX = F(X) dt + sqrt(D) dW,    F(x) = theta_0 + sum_n theta_n sin(2 n pi x / L)

integrated with the Euler-Maruyama scheme, and is seen only through

    y = cos(2 pi x / L) + sqrt(sigma) w.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .errors import ConfigError


@dataclass(frozen=True)
class ModelSpec:
    """Parameters of the continuous system.

    ``theta[0]`` is the constant drift, ``theta[1:]`` the sine amplitudes.
    """

    theta: tuple = (-0.1, 0.1)
    D: float = 0.8
    L: float = 32.0
    sigma: float = 0.0
    dt: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(v) for v in np.atleast_1d(self.theta)))
        if len(self.theta) < 1:
            raise ConfigError("theta needs at least the constant term")
        if not self.L > 0:
            raise ConfigError(f"L must be positive, got {self.L}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.D >= 0:
            raise ConfigError(f"D must be nonnegative, got {self.D}")
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def n_theta(self) -> int:
        return len(self.theta) - 1

    def to_text(self) -> str:
        lines = [f"theta{n}={v!r}" for n, v in enumerate(self.theta)]
        lines += [f"D={self.D!r}", f"L={self.L!r}", f"sigma={self.sigma!r}", f"dt={self.dt!r}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelSpec":
        values = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"expected key=value, got {raw!r}")
            values[key.strip()] = float(value)
        thetas = sorted((int(k[5:]), v) for k, v in values.items() if k.startswith("theta"))
        if [n for n, _ in thetas] != list(range(len(thetas))):
            raise ConfigError("theta keys must be theta0..thetaK without gaps")
        return cls(
            theta=tuple(v for _, v in thetas),
            D=values.get("D", 0.8),
            L=values.get("L", 32.0),
            sigma=values.get("sigma", 0.0),
            dt=values.get("dt", 1.0),
        )


def drift_eval(spec: ModelSpec, x):
    """Evaluate the Fourier drift ``F(x)``; works elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, spec.theta[0])
    for n, amp in enumerate(spec.theta[1:], start=1):
        out = out + amp * np.sin(2.0 * n * math.pi * x / spec.L)
    return out if out.ndim else float(out)


def observe(x, L, sigma=0.0, w=0.0):
    """Observation ``cos(2 pi x / L) + sqrt(sigma) * w``."""
    y = np.cos(2.0 * math.pi * np.asarray(x, dtype=float) / L) + math.sqrt(sigma) * np.asarray(w)
    return y if np.ndim(y) else float(y)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    observations: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.observations = np.asarray(self.observations, dtype=float)
        if not (len(self.times) == len(self.states) == len(self.observations)):
            raise ValueError("times, states and observations must have equal length")

    def __len__(self):
        return len(self.times)

    def to_csv(self, path):
        write_trajectory_csv(self, path)

    @classmethod
    def from_csv(cls, path):
        return read_trajectory_csv(path)


def simulate(spec: ModelSpec, steps: int, seed: int = 0, x0: float | None = None) -> Trajectory:
    """Euler-Maruyama path of ``steps`` increments plus the initial point.

    When ``x0`` is None the initial state is drawn from N(0, 1).
    """
    if steps < 1:
        raise ConfigError("steps must be at least 1")
    gen = rngmod.stream(seed, rngmod.SIMULATE)
    start = gen.standard_normal() if x0 is None else float(x0)
    v = gen.standard_normal(steps)
    w = gen.standard_normal(steps + 1)

    x = np.empty(steps + 1)
    x[0] = start
    sd = math.sqrt(spec.D * spec.dt)
    for t in range(steps):
        x[t + 1] = x[t] + drift_eval(spec, x[t]) * spec.dt + sd * v[t]
    if spec.sigma > 0:
        y = observe(x, spec.L, spec.sigma, w)
    else:
        y = observe(x, spec.L)
    times = spec.dt * np.arange(steps + 1)
    return Trajectory(times, x, y)


def write_trajectory_csv(traj: Trajectory, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "x", "y"])
        for t, x, y in zip(traj.times, traj.states, traj.observations):
            writer.writerow([f"{t:.17g}", f"{x:.17g}", f"{y:.17g}"])


def read_trajectory_csv(path) -> Trajectory:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"t", "y"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    t = np.array([float(r["t"]) for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    x = np.array([float(r["x"]) if r.get("x") not in (None, "") else math.nan for r in rows])
    return Trajectory(t, x, y)
