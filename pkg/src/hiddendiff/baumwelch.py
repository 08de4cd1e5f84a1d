"""Baum-Welch reestimation for a Fourier-parameterized ring random walk.

The up and down jump probabilities of state ``k`` are truncated real Fourier
series in ``k``::

    a_{k,k+1} = c0+ + sum_n (cn+ cos(2 pi k n / N) + sn+ sin(2 pi k n / N))
    a_{k,k-1} = (same with the minus coefficients)
    a_{k,k}   = 1 - a_{k,k+1} - a_{k,k-1}

so the number of unknowns is ``2 (2K + 1)`` regardless of the number of
states.  The M-step maximizes the expected complete-data log-likelihood over
the coefficients, i.e. solves

    sum_{i != j} d a_ij / d theta_kappa * (Psi_ij / a_ij - Psi_ii / a_ii) = 0

with a damped Newton iteration that never leaves the feasible region.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleParameters, NewtonConvergenceError, SingularJacobian
from .hmm import Hmm, dynamics_from_transitions, forward_backward

log = logging.getLogger(__name__)

DELTA = 1e-6


def fourier_basis(n_states, n_harmonics):
    """``N x (2K+1)`` matrix with columns ``1, cos_1..cos_K, sin_1..sin_K``."""
    k = np.arange(n_states)[:, None]
    n = np.arange(1, n_harmonics + 1)[None, :]
    phase = 2.0 * math.pi * k * n / n_states
    return np.hstack([np.ones((n_states, 1)), np.cos(phase), np.sin(phase)])


@dataclass
class FourierParams:
    coeffs_plus: np.ndarray
    coeffs_minus: np.ndarray
    n_states: int

    def __post_init__(self):
        self.coeffs_plus = np.asarray(self.coeffs_plus, dtype=float).copy()
        self.coeffs_minus = np.asarray(self.coeffs_minus, dtype=float).copy()
        if self.coeffs_plus.shape != self.coeffs_minus.shape or self.coeffs_plus.size % 2 != 1:
            raise ValueError("need 2K+1 coefficients for each off-diagonal")
        if self.n_states < 3:
            raise ValueError("a ring walk with distinct neighbours needs at least 3 states")

    @property
    def n_harmonics(self):
        return (self.coeffs_plus.size - 1) // 2

    @property
    def vector(self):
        return np.concatenate([self.coeffs_plus, self.coeffs_minus])

    @classmethod
    def from_vector(cls, vec, n_states):
        vec = np.asarray(vec, dtype=float)
        half = vec.size // 2
        return cls(vec[:half], vec[half:], n_states)

    @classmethod
    def homogeneous(cls, a_plus, a_minus, n_states, n_harmonics=0):
        cp = np.zeros(2 * n_harmonics + 1)
        cm = np.zeros(2 * n_harmonics + 1)
        cp[0], cm[0] = a_plus, a_minus
        return cls(cp, cm, n_states)

    def basis(self):
        return fourier_basis(self.n_states, self.n_harmonics)

    def jumps(self):
        """``(a_plus, a_minus, a_stay)`` per state; no feasibility check."""
        phi = self.basis()
        ap = phi @ self.coeffs_plus
        am = phi @ self.coeffs_minus
        return ap, am, 1.0 - ap - am

    def is_feasible(self, delta=DELTA):
        ap, am, a0 = self.jumps()
        return bool(min(ap.min(), am.min(), a0.min()) >= delta and max(ap.max(), am.max()) <= 1 - delta)

    def mirrored(self):
        """Parameters of the reflected walk ``k -> -k`` (up and down swap)."""
        K = self.n_harmonics
        sign = np.concatenate([np.ones(K + 1), -np.ones(K)])
        return FourierParams(self.coeffs_minus * sign, self.coeffs_plus * sign, self.n_states)

    def to_text(self):
        K = self.n_harmonics
        names = ["c0"] + [f"c{n}" for n in range(1, K + 1)] + [f"s{n}" for n in range(1, K + 1)]
        lines = [f"n_states={self.n_states}", f"n_harmonics={K}"]
        lines += [f"plus_{nm}={v:.17g}" for nm, v in zip(names, self.coeffs_plus)]
        lines += [f"minus_{nm}={v:.17g}" for nm, v in zip(names, self.coeffs_minus)]
        return "\n".join(lines) + "\n"


def _assemble(ap, am, a0):
    N = len(ap)
    k = np.arange(N)
    A = np.zeros((N, N))
    A[k, k] = a0
    A[k, (k + 1) % N] = ap
    A[k, (k - 1) % N] = am
    return A


def build_transition(params: FourierParams, delta=DELTA):
    """Row-stochastic ring matrix; raises ``InfeasibleParameters`` outside ``[delta, 1-delta]``."""
    ap, am, a0 = params.jumps()
    if not params.is_feasible(delta):
        raise InfeasibleParameters(
            f"jump probabilities out of range: min a+={ap.min():.3g}, min a-={am.min():.3g}, min a0={a0.min():.3g}"
        )
    return _assemble(ap, am, a0)


def transition_jacobian(params: FourierParams):
    """``dA/dtheta`` as an array of shape ``(2(2K+1), N, N)``."""
    phi = params.basis()
    N, P = phi.shape
    k = np.arange(N)
    J = np.zeros((2 * P, N, N))
    for kappa in range(P):
        J[kappa, k, (k + 1) % N] = phi[:, kappa]
        J[kappa, k, k] = -phi[:, kappa]
        J[P + kappa, k, (k - 1) % N] = phi[:, kappa]
        J[P + kappa, k, k] = -phi[:, kappa]
    return J


def _diagonals(psi, N):
    k = np.arange(N)
    return psi[k, (k + 1) % N], psi[k, (k - 1) % N], psi[k, k]


def reestimation_residual(params: FourierParams, psi):
    """Left-hand side of the implicit reestimation equations, one entry per coefficient."""
    psi = np.asarray(psi, dtype=float)
    pp, pm, p0 = _diagonals(psi, params.n_states)
    ap, am, a0 = params.jumps()
    phi = params.basis()
    return np.concatenate([phi.T @ (pp / ap - p0 / a0), phi.T @ (pm / am - p0 / a0)])


def expected_loglik(params: FourierParams, psi):
    """``sum_ij Psi_ij log a_ij``; ``-inf`` outside the feasible region."""
    if not params.is_feasible():
        return -math.inf
    pp, pm, p0 = _diagonals(np.asarray(psi, dtype=float), params.n_states)
    ap, am, a0 = params.jumps()
    return float(pp @ np.log(ap) + pm @ np.log(am) + p0 @ np.log(a0))


def _hessian(params, pp, pm, p0):
    phi = params.basis()
    ap, am, a0 = params.jumps()
    h_stay = (phi.T * (p0 / a0**2)) @ phi
    upper = -(phi.T * (pp / ap**2)) @ phi - h_stay
    lower = -(phi.T * (pm / am**2)) @ phi - h_stay
    return np.block([[upper, -h_stay], [-h_stay, lower]])


def homogeneous_update(psi):
    """Closed-form M-step for a translation-invariant walk: ``(a+, a-)``."""
    psi = np.asarray(psi, dtype=float)
    pp, pm, p0 = _diagonals(psi, psi.shape[0])
    total = pp.sum() + pm.sum() + p0.sum()
    return pp.sum() / total, pm.sum() / total


def mstep_newton(params: FourierParams, psi, tol=1e-10, max_iter=100, delta=DELTA, max_halvings=30):
    """Solve the reestimation equations for new coefficients.

    ``psi`` is rescaled to unit total mass first (the root does not depend on
    the scale), so ``tol`` bounds the residual per unit of transition mass.
    Steps are halved until the iterate is feasible and the expected
    log-likelihood does not drop.
    """
    psi = np.asarray(psi, dtype=float)
    mass = psi.sum()
    if not mass > 0:
        raise ValueError("psi carries no transition mass")
    psi = psi / mass
    pp, pm, p0 = _diagonals(psi, params.n_states)
    current = FourierParams(params.coeffs_plus, params.coeffs_minus, params.n_states)
    if not current.is_feasible(delta):
        raise InfeasibleParameters("Newton start point is infeasible")
    q = expected_loglik(current, psi)

    res = reestimation_residual(current, psi)
    for _ in range(max_iter):
        if np.abs(res).max() <= tol:
            return current
        H = _hessian(current, pp, pm, p0)
        try:
            step = np.linalg.solve(H, -res)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("Newton step is not finite")
        lam = 1.0
        for _ in range(max_halvings + 1):
            trial = FourierParams.from_vector(current.vector + lam * step, params.n_states)
            if trial.is_feasible(delta):
                q_trial = expected_loglik(trial, psi)
                if q_trial >= q - 1e-14 * abs(q):
                    break
            lam *= 0.5
        else:
            raise NewtonConvergenceError(
                "no acceptable damped step", params=current, residual=float(np.abs(res).max())
            )
        current, q = trial, q_trial
        res = reestimation_residual(current, psi)
    if np.abs(res).max() <= tol:
        return current
    raise NewtonConvergenceError(
        f"residual {np.abs(res).max():.3g} above tol after {max_iter} iterations",
        params=current,
        residual=float(np.abs(res).max()),
    )


@dataclass
class FitReport:
    params: FourierParams
    loglik_trace: list
    n_iterations: int
    converged: bool
    nonmonotone_steps: list = field(default_factory=list)
    inner_failures: list = field(default_factory=list)


def fit(
    symbols,
    init: FourierParams,
    emission,
    initial,
    tol_ll=1e-6,
    max_outer=200,
    newton_tol=1e-10,
    newton_max_iter=100,
):
    """Alternate forward-backward and the constrained M-step until the
    log-likelihood changes by at most ``tol_ll``.

    The emission matrix and initial distribution stay fixed.  ``n_iterations``
    counts the reestimation updates performed.
    """
    params = init
    build_transition(params)
    trace = []
    report = FitReport(params, trace, 0, False)
    for n in range(max_outer + 1):
        hmm = Hmm(build_transition(params), emission, initial)
        fb = forward_backward(hmm, symbols)
        trace.append(fb.log_likelihood)
        if n > 0:
            change = trace[-1] - trace[-2]
            if change < -1e-8:
                log.warning("log-likelihood decreased by %.3g at iteration %d", -change, n)
                report.nonmonotone_steps.append(n)
            if abs(change) <= tol_ll:
                report.converged = True
                break
        if n == max_outer:
            break
        try:
            params = mstep_newton(params, fb.xi_sums, newton_tol, newton_max_iter)
        except NewtonConvergenceError as exc:
            log.warning("M-step did not converge at iteration %d: %s", n + 1, exc)
            report.inner_failures.append(n + 1)
            params = exc.params
        report.params = params
        report.n_iterations = n + 1
    report.params = params
    return report


def extract_drift_diffusion(params: FourierParams, D0, dx=1.0):
    """Per-state drift and diffusion of the fitted walk."""
    ap, am, _ = params.jumps()
    return dynamics_from_transitions(ap, am, D0, dx)


def project_drift(F, x, L, n_harmonics=1):
    """Least-squares coefficients of ``F`` on ``1, sin(2 pi n x / L)``, n = 1..K."""
    x = np.asarray(x, dtype=float)
    cols = [np.ones_like(x)] + [np.sin(2.0 * math.pi * n * x / L) for n in range(1, n_harmonics + 1)]
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), np.asarray(F, dtype=float), rcond=None)
    return coef
