"""Discrete hidden Markov machinery for nearest-neighbour random walks on a ring.

Symbols are integers in ``[0, M)``; the value ``MISSING`` (-1) marks a time
point without an observation, whose emission probability is 1 for every
state.  Missing points let a chain take several sub-steps per observation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import InfeasibleParameters, ZeroProbabilitySequence

MISSING = -1
ROW_TOL = 1e-12


def ring_offsets(n_states):
    """Boolean mask of the entries a nearest-neighbour ring chain may use."""
    k = np.arange(n_states)
    mask = np.zeros((n_states, n_states), dtype=bool)
    mask[k, k] = True
    mask[k, (k + 1) % n_states] = True
    mask[k, (k - 1) % n_states] = True
    return mask


@dataclass
class Hmm:
    transition: np.ndarray
    emission: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        self.emission = np.asarray(self.emission, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float)
        n = self.transition.shape[0]
        if n < 2 or self.transition.shape != (n, n):
            raise ValueError("transition must be square with at least 2 states")
        if self.emission.ndim != 2 or self.emission.shape[0] != n:
            raise ValueError("emission must have one row per state")
        if self.initial.shape != (n,):
            raise ValueError("initial distribution must have one entry per state")
        for name, arr in (("transition", self.transition), ("emission", self.emission)):
            if (arr < 0).any() or (arr > 1).any():
                raise ValueError(f"{name} entries must lie in [0, 1]")
            if np.abs(arr.sum(axis=1) - 1.0).max() > ROW_TOL:
                raise ValueError(f"{name} rows must sum to 1")
        if (self.initial < 0).any() or abs(self.initial.sum() - 1.0) > ROW_TOL:
            raise ValueError("initial must be a probability vector")
        if np.any(self.transition[~ring_offsets(n)] != 0):
            raise ValueError("transition must be tridiagonal with wraparound")

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_symbols(self):
        return self.emission.shape[1]

    def to_text(self) -> str:
        n, m = self.emission.shape
        out = [f"n_states={n}", f"n_symbols={m}", "[initial]"]
        out.append(" ".join(f"{v:.17g}" for v in self.initial))
        out.append("[transition]")
        out += [" ".join(f"{v:.17g}" for v in row) for row in self.transition]
        out.append("[emission]")
        out += [" ".join(f"{v:.17g}" for v in row) for row in self.emission]
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Hmm":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        header = dict(ln.split("=", 1) for ln in lines[:2])
        n, m = int(header["n_states"]), int(header["n_symbols"])
        sections = {}
        current = None
        for ln in lines[2:]:
            if ln.startswith("["):
                current = ln.strip("[]")
                sections[current] = []
            else:
                sections[current].append([float(v) for v in ln.split()])
        init = np.array(sections["initial"][0])
        trans = np.array(sections["transition"]).reshape(n, n)
        emis = np.array(sections["emission"]).reshape(n, m)
        return cls(trans, emis, init)


@dataclass(frozen=True)
class QuantizerSpec:
    n_symbols: int = 16
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.n_symbols < 2:
            raise ValueError("need at least two symbols")
        if not self.lo < self.hi:
            raise ValueError("quantizer range requires lo < hi")

    @property
    def edges(self):
        return np.linspace(self.lo, self.hi, self.n_symbols + 1)


@dataclass
class FbResult:
    log_likelihood: float
    gamma: np.ndarray
    xi_sums: np.ndarray


def quantize(observations, q: QuantizerSpec):
    """Uniform bins over ``[lo, hi]``, closed on the right; values outside clamp.

    Symbol ``k`` covers ``(lo + k*w, lo + (k+1)*w]`` (bin 0 also takes ``lo``).
    """
    y = np.asarray(observations, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("observations must be finite")
    scaled = (y - q.lo) / (q.hi - q.lo) * q.n_symbols
    k = np.ceil(scaled).astype(np.int64) - 1
    return np.clip(k, 0, q.n_symbols - 1)


def _symbol_probs(y, q: QuantizerSpec, variance):
    """Rows: probability of each symbol for observation ``y + N(0, variance)``."""
    y = np.atleast_1d(y)
    if variance <= 0:
        p = np.zeros((len(y), q.n_symbols))
        p[np.arange(len(y)), quantize(y, q)] = 1.0
        return p
    cdf = ndtr((q.edges[None, :] - y[:, None]) / math.sqrt(variance))
    p = np.diff(cdf, axis=1)
    p[:, 0] += cdf[:, 0]
    p[:, -1] += 1.0 - cdf[:, -1]
    return p


def emission_from_observation_model(n_states, q: QuantizerSpec, L, sigma=0.0, cell_average=False, floor=0.0, n_sub=101):
    """Symbol probabilities of each lattice state under ``y = cos(2 pi x / L) + sqrt(sigma) w``.

    State ``i`` sits at ``x = i * L / n_states``.  With ``cell_average`` the
    state stands for the whole cell ``[x - dx/2, x + dx/2)`` and the row is
    averaged over it.  ``floor`` adds extra Gaussian variance on top of ``sigma``.
    """
    if n_states < 2:
        raise ValueError("need at least two states")
    dx = L / n_states
    var = sigma + floor
    if cell_average:
        offsets = (np.arange(n_sub) + 0.5) / n_sub - 0.5
    else:
        offsets = np.zeros(1)
    B = np.empty((n_states, q.n_symbols))
    for i in range(n_states):
        y = np.cos(2.0 * math.pi * (i + offsets) * dx / L)
        B[i] = _symbol_probs(y, q, var).mean(axis=0)
    return B / B.sum(axis=1, keepdims=True)


def insert_missing(symbols, substeps):
    """Interleave ``substeps - 1`` unobserved points between consecutive symbols."""
    s = np.asarray(symbols, dtype=np.int64)
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    out = np.full((len(s) - 1) * substeps + 1, MISSING, dtype=np.int64)
    out[::substeps] = s
    return out


def _emission_rows(hmm: Hmm, symbols):
    s = np.asarray(symbols, dtype=np.int64)
    if s.ndim != 1:
        raise ValueError("symbols must be one-dimensional")
    if (s >= hmm.n_symbols).any() or (s < MISSING).any():
        raise ValueError("symbol out of range")
    extended = np.vstack([hmm.emission.T, np.ones(hmm.n_states)])
    return extended[np.where(s == MISSING, hmm.n_symbols, s)]


def forward_backward(hmm: Hmm, symbols) -> FbResult:
    """Scaled forward-backward pass.

    ``xi_sums[i, j]`` is the expected number of ``i -> j`` transitions given
    the symbols.  Raises ``ZeroProbabilitySequence`` when a scale factor is 0.
    """
    E = _emission_rows(hmm, symbols)
    T, N = E.shape
    if T < 2:
        raise ValueError("forward_backward needs at least two time points")
    A = hmm.transition
    alpha = np.empty((T, N))
    scale = np.empty(T)

    a = hmm.initial * E[0]
    for t in range(T):
        if t > 0:
            a = (alpha[t - 1] @ A) * E[t]
        c = a.sum()
        if not c > 0:
            raise ZeroProbabilitySequence(t)
        scale[t] = c
        alpha[t] = a / c

    beta = np.empty((T, N))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = A @ (E[t + 1] * beta[t + 1]) / scale[t + 1]

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    weighted = E[1:] * beta[1:] / scale[1:, None]
    xi_sums = (alpha[:-1].T @ weighted) * A
    return FbResult(float(np.log(scale).sum()), gamma, xi_sums)


def loglikelihood(hmm: Hmm, symbols) -> float:
    """``log P(symbols | hmm)`` from the forward pass alone."""
    E = _emission_rows(hmm, symbols)
    A = hmm.transition
    total = 0.0
    a = hmm.initial * E[0]
    for t in range(len(E)):
        if t > 0:
            a = (a @ A) * E[t]
        c = a.sum()
        if not c > 0:
            raise ZeroProbabilitySequence(t)
        total += math.log(c)
        a = a / c
    return total


def dynamics_from_transitions(a_plus, a_minus, D0, dx=1.0):
    """Drift and diffusion implied by up/down jump probabilities.

    ``F = (a+ - a-) D0 / dx`` and ``D = [(a+ + a-) - (a+ - a-)^2] D0``.
    """
    ap = np.asarray(a_plus, dtype=float)
    am = np.asarray(a_minus, dtype=float)
    if ap.shape != am.shape:
        raise ValueError("a_plus and a_minus differ in shape")
    if (ap < 0).any() or (am < 0).any() or (ap > 1).any() or (am > 1).any() or (ap + am > 1 + 1e-15).any():
        raise InfeasibleParameters("jump probabilities must lie in [0, 1] with a+ + a- <= 1")
    diff = ap - am
    return diff * D0 / dx, ((ap + am) - diff * diff) * D0


def transitions_from_dynamics(F, D, D0, dx=1.0):
    """Inverse of :func:`dynamics_from_transitions`."""
    d = np.asarray(F, dtype=float) * dx / D0
    s = np.asarray(D, dtype=float) / D0 + d * d
    ap = (s + d) / 2.0
    am = (s - d) / 2.0
    if (ap < 0).any() or (am < 0).any() or (ap + am > 1).any():
        raise InfeasibleParameters("(F, D, D0) gives jump probabilities outside [0, 1]")
    return ap, am


def write_symbols(symbols, path):
    Path(path).write_text("".join(f"{int(s)}\n" for s in symbols))


def read_symbols(path):
    return np.array([int(ln) for ln in Path(path).read_text().split()], dtype=np.int64)
