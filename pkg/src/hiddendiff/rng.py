"""Deterministic random streams.

Every stochastic stage draws from a generator keyed by ``(seed, *keys)`` so that
a draw depends only on its coordinates (run, time index, stage) and never on the
order in which other streams were consumed.
"""
import numpy as np

# stage identifiers used as stream keys
INIT = 0
PROPAGATE = 1
RESAMPLE = 2
SIMULATE = 3
DATA = 4


def stream(seed, *keys):
    """Return an independent ``numpy.random.Generator`` for ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
