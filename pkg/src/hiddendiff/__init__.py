"""Parameter estimation for hidden diffusions in periodic potentials.

Two estimators are provided: an augmented-state SIR particle filter
(:mod:`hiddendiff.particle`) and Baum-Welch reestimation of a
Fourier-parameterized ring random walk (:mod:`hiddendiff.baumwelch`).
"""
from .errors import (
    ConfigError,
    HiddenDiffError,
    InfeasibleParameters,
    NewtonConvergenceError,
    SingularJacobian,
    WeightCollapse,
    ZeroProbabilitySequence,
)
from .model import ModelSpec, Trajectory, drift_eval, observe, simulate

__version__ = "0.1.0"
