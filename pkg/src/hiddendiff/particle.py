"""Bootstrap (SIR) particle filter over the augmented state ``(x, theta, sqrt(D))``.

Parameters are treated as slowly wandering states: every step they receive an
independent ``N(0, (eps * sqrt(dt))**2)`` increment, which is what lets a state
filter learn them.  The last augmented coordinate is ``sqrt(D)`` so that the
implied diffusion ``D = s**2`` is nonnegative without constraints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, WeightCollapse
from .model import ModelSpec

RESAMPLING_SCHEMES = ("multinomial", "systematic")


@dataclass(frozen=True)
class AugmentedState:
    x: float
    params: tuple

    @property
    def theta(self):
        return self.params[:-1]

    @property
    def D(self):
        return self.params[-1] ** 2


@dataclass
class ParticleCloud:
    """``particles`` has one row per particle: ``[x, theta_0..theta_K, sqrt(D)]``."""

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.particles) < 1:
            raise ConfigError("a particle cloud needs at least one particle")
        if self.weights.shape != (len(self.particles),):
            raise ValueError("one weight per particle required")

    def __len__(self):
        return len(self.particles)

    @property
    def x(self):
        return self.particles[:, 0]


@dataclass
class PfConfig:
    n_particles: int = 1000
    jitter_eps: float = 0.005
    obs_bandwidth: float = 0.005
    init_mean: tuple = (1.0, 0.0, 0.0, 0.0)
    init_cov_diag: tuple = (25.0, 0.01, 0.01, 0.01)
    resampling: str = "multinomial"
    seed: int = 0

    def __post_init__(self):
        self.init_mean = tuple(float(v) for v in self.init_mean)
        self.init_cov_diag = tuple(float(v) for v in self.init_cov_diag)
        if self.n_particles < 1:
            raise ConfigError("n_particles must be at least 1")
        if not self.obs_bandwidth > 0:
            raise ConfigError("obs_bandwidth must be strictly positive")
        if self.jitter_eps < 0:
            raise ConfigError("jitter_eps must be nonnegative")
        if any(v < 0 for v in self.init_cov_diag):
            raise ConfigError("init_cov_diag entries must be nonnegative")
        if len(self.init_mean) != len(self.init_cov_diag):
            raise ConfigError("init_mean and init_cov_diag differ in length")
        if self.resampling not in RESAMPLING_SCHEMES:
            raise ConfigError(f"resampling must be one of {RESAMPLING_SCHEMES}")


def _check_dims(config: PfConfig, spec: ModelSpec):
    want = spec.n_theta + 3
    if len(config.init_mean) != want:
        raise ConfigError(
            f"augmented state has {want} coordinates (x, {spec.n_theta + 1} drift terms, sqrt(D)); "
            f"init_mean has {len(config.init_mean)}"
        )


def initialize(config: PfConfig, rng: np.random.Generator) -> ParticleCloud:
    n = config.n_particles
    mean = np.asarray(config.init_mean)
    sd = np.sqrt(np.asarray(config.init_cov_diag))
    particles = mean + sd * rng.standard_normal((n, len(mean)))
    return ParticleCloud(particles, np.full(n, 1.0 / n))


def propagate(cloud: ParticleCloud, spec: ModelSpec, config: PfConfig, rng) -> ParticleCloud:
    """Advance each particle one Euler step using its own parameters."""
    z = cloud.particles
    n, d = z.shape
    x = z[:, 0]
    theta = z[:, 1:-1]
    s = z[:, -1]
    noise = rng.standard_normal((n, d))
    harmonics = np.arange(1, theta.shape[1])
    drift = theta[:, 0] + (theta[:, 1:] * np.sin(2.0 * math.pi * np.outer(x, harmonics) / spec.L)).sum(axis=1)
    root_dt = math.sqrt(spec.dt)

    out = np.empty_like(z)
    out[:, 0] = x + drift * spec.dt + s * root_dt * noise[:, 0]
    out[:, 1:] = z[:, 1:] + config.jitter_eps * root_dt * noise[:, 1:]
    return ParticleCloud(out, cloud.weights.copy())


def observation_likelihood(x, y, L, bandwidth):
    """Gaussian density of ``y - cos(2 pi x / L)`` with variance ``bandwidth``."""
    r = y - np.cos(2.0 * math.pi * np.asarray(x) / L)
    return np.exp(-(r * r) / (2.0 * bandwidth)) / math.sqrt(2.0 * math.pi * bandwidth)


def _normalize(w, t=None):
    total = w.sum()
    if not total > 0 or not math.isfinite(total):
        raise WeightCollapse(t)
    return w / total


def weight(cloud: ParticleCloud, y: float, L: float, config: PfConfig, t=None) -> ParticleCloud:
    """Replace the weights by the normalized observation likelihoods."""
    lik = observation_likelihood(cloud.x, y, L, config.obs_bandwidth)
    return ParticleCloud(cloud.particles, _normalize(lik, t))


def sis_update(prev_weights, likelihoods, t=None):
    """Sequential importance sampling update ``m_t = m_{t-1} * p(y_t | x_t)``."""
    prev = np.asarray(prev_weights, dtype=float)
    lik = np.asarray(likelihoods, dtype=float)
    if prev.shape != lik.shape:
        raise ValueError("weights and likelihoods differ in length")
    return _normalize(prev * lik, t)


def effective_sample_size(weights):
    w = np.asarray(weights, dtype=float)
    return 1.0 / np.sum(w * w)


def resample_indices(weights, rng, scheme="multinomial", n=None):
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights must be normalized (sum={total!r})")
    n = len(w) if n is None else n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    if scheme == "multinomial":
        u = rng.random(n)
    elif scheme == "systematic":
        u = (rng.random() + np.arange(n)) / n
    else:
        raise ConfigError(f"unknown resampling scheme {scheme!r}")
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(w) - 1)


def resample(cloud: ParticleCloud, config: PfConfig, rng) -> ParticleCloud:
    idx = resample_indices(cloud.weights, rng, config.resampling)
    n = len(idx)
    return ParticleCloud(cloud.particles[idx], np.full(n, 1.0 / n))


def estimate(cloud: ParticleCloud) -> AugmentedState:
    """Posterior-mean (MMSE) estimate of every augmented coordinate."""
    w = cloud.weights / cloud.weights.sum()
    mean = w @ cloud.particles
    return AugmentedState(float(mean[0]), tuple(float(v) for v in mean[1:]))


def diffusion_estimate(cloud: ParticleCloud) -> float:
    """Posterior mean of ``D = sqrt(D)**2``."""
    w = cloud.weights / cloud.weights.sum()
    return float(w @ cloud.particles[:, -1] ** 2)


def density_histogram(values, weights, edges):
    mass, _ = np.histogram(values, bins=edges, weights=weights)
    total = mass.sum()
    return mass / total if total > 0 else mass


@dataclass
class FilterResult:
    """Per-observation estimates of a filter run.

    ``estimates`` columns follow the augmented state; ``D_hat`` is the posterior
    mean of ``sqrt(D)**2`` and ``abs_theta0_hat`` the posterior mean of
    ``|theta_0|`` (the sign of theta_0 is not identified by cosine observations).
    """

    times: np.ndarray
    estimates: np.ndarray
    D_hat: np.ndarray
    abs_theta0_hat: np.ndarray
    ess: np.ndarray
    snapshots: dict = field(default_factory=dict)
    final_cloud: ParticleCloud | None = None

    def trace_rows(self):
        n_theta = self.estimates.shape[1] - 2
        header = ["t", "x_hat"] + [f"theta{k}_hat" for k in range(n_theta)] + ["D_hat", "ess"]
        rows = []
        for i, t in enumerate(self.times):
            est = self.estimates[i]
            rows.append([t, est[0], *est[1:-1], self.D_hat[i], self.ess[i]])
        return header, rows


def _sir(
    observations: Sequence[float],
    init: Callable,
    step: Callable,
    likelihood: Callable,
    n_particles: int,
    seed: int,
    scheme: str,
    on_weighted: Callable | None = None,
):
    """Shared SIR loop: weight by ``y_0`` at t=0, then propagate/weight/resample."""
    cloud = init(rngmod.stream(seed, rngmod.INIT))
    for t, y in enumerate(observations):
        if t > 0:
            cloud = step(cloud, rngmod.stream(seed, rngmod.PROPAGATE, t))
        w = _normalize(likelihood(cloud, y), t)
        cloud = ParticleCloud(cloud.particles, w)
        if on_weighted is not None:
            on_weighted(t, cloud)
        idx = resample_indices(w, rngmod.stream(seed, rngmod.RESAMPLE, t), scheme, n_particles)
        cloud = ParticleCloud(cloud.particles[idx], np.full(n_particles, 1.0 / n_particles))
    return cloud


def run_filter(
    observations,
    spec: ModelSpec,
    config: PfConfig,
    snapshot_times: Sequence[int] = (),
    hist_edges=None,
) -> FilterResult:
    """Run the SIR filter on ``observations`` (one estimate per observation).

    Raises ``WeightCollapse`` (with ``.t``) if every particle is inconsistent
    with an observation.
    """
    _check_dims(config, spec)
    y = np.asarray(observations, dtype=float)
    if y.size == 0:
        raise ConfigError("observation sequence is empty")
    T = len(y)
    d = spec.n_theta + 3
    estimates = np.empty((T, d))
    D_hat = np.empty(T)
    abs0 = np.empty(T)
    ess = np.empty(T)
    snapshots = {}
    wanted = set(int(s) for s in snapshot_times)
    if hist_edges is None:
        hist_edges = np.linspace(0.0, spec.L, 65)

    def record(t, cloud):
        w = cloud.weights
        estimates[t] = w @ cloud.particles
        D_hat[t] = w @ cloud.particles[:, -1] ** 2
        abs0[t] = w @ np.abs(cloud.particles[:, 1])
        ess[t] = effective_sample_size(w)
        if t in wanted:
            snapshots[t] = density_histogram(np.mod(cloud.x, spec.L), w, hist_edges)

    final = _sir(
        y,
        lambda g: initialize(config, g),
        lambda c, g: propagate(c, spec, config, g),
        lambda c, obs: observation_likelihood(c.x, obs, spec.L, config.obs_bandwidth),
        config.n_particles,
        config.seed,
        config.resampling,
        record,
    )
    res = FilterResult(spec.dt * np.arange(T), estimates, D_hat, abs0, ess, snapshots, final)
    res.hist_edges = np.asarray(hist_edges)
    return res


def run_linear_gaussian_filter(observations, a, h, q, r, m0, v0, n_particles, seed=0, scheme="multinomial"):
    """SIR filter for ``x_t = a x_{t-1} + N(0, q)``, ``y_t = h x_t + N(0, r)``.

    Uses the same loop and time convention as ``run_filter``; returns the
    posterior means per observation.
    """
    y = np.asarray(observations, dtype=float)
    means = np.empty(len(y))

    def init(g):
        return ParticleCloud(m0 + math.sqrt(v0) * g.standard_normal((n_particles, 1)), np.full(n_particles, 1.0 / n_particles))

    def step(c, g):
        return ParticleCloud(a * c.particles + math.sqrt(q) * g.standard_normal(c.particles.shape), c.weights)

    def lik(c, obs):
        res = obs - h * c.particles[:, 0]
        return np.exp(-(res * res) / (2.0 * r))

    def record(t, c):
        means[t] = c.weights @ c.particles[:, 0]

    _sir(y, init, step, lik, n_particles, seed, scheme, record)
    return means


def kalman_oracle(observations, a, h, q, r, m0, v0):
    """Exact scalar Kalman filter; the first observation updates the prior directly.

    Returns ``(means, variances)`` of ``p(x_t | y_0..y_t)``.
    """
    y = np.asarray(observations, dtype=float)
    means = np.empty(len(y))
    variances = np.empty(len(y))
    m, v = float(m0), float(v0)
    for t, obs in enumerate(y):
        if t > 0:
            m, v = a * m, a * a * v + q
        s = h * h * v + r
        k = v * h / s if math.isfinite(s) else 0.0
        m = m + k * (obs - h * m)
        v = (1.0 - k * h) * v
        means[t], variances[t] = m, v
    return means, variances
