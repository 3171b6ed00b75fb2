"""Event-triggered MMSE filtering and offline covariance propagation.

Two closely related recursions live here.  The online filter consumes real
measurements: predict, evaluate the trigger on the whitened innovation, and
correct -- where a silent step still shrinks the covariance by the
beta-attenuated amount (silence is informative).  The offline recursions
forecast covariance along a nominal plan before any measurement exists:
``sigma`` is the filter covariance and ``lam`` the dispersion of the
forecasted estimates around the nominal, so sigma + lam is the covariance of
the predicted state distribution used for constraint checking.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CholeskyFailure, NumericalSingularity
from .model import LinearSystem
from .trigger_math import Threshold, beta

__all__ = [
    "GaussianEstimate",
    "OfflineCovPair",
    "TriggerDecision",
    "kf_gain",
    "et_predict",
    "evaluate_trigger",
    "et_correct",
    "kf_expected_belief_step",
    "et_offline_cov_step",
]

COND_LIMIT = 1e12


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class GaussianEstimate:
    """Gaussian state estimate (mean, covariance) at discrete step k."""

    mean: np.ndarray
    cov: np.ndarray
    step: int = 0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ValueError(f"covariance shape {cov.shape} does not match state dim {n}")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0.0):
            raise ValueError("covariance is not symmetric within 1e-12")
        if float(np.linalg.eigvalsh(cov).min()) < -1e-10:
            raise ValueError("covariance has an eigenvalue below -1e-10")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", _symmetrize(cov))


@dataclass(frozen=True)
class OfflineCovPair:
    """Offline covariance pair: filter covariance sigma and estimate dispersion lam."""

    sigma: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        sigma = _symmetrize(np.asarray(self.sigma, dtype=float))
        lam = _symmetrize(np.asarray(self.lam, dtype=float))
        if sigma.shape != lam.shape:
            raise ValueError("sigma and lam must share shape")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "lam", lam)

    @property
    def total(self) -> np.ndarray:
        return self.sigma + self.lam


@dataclass(frozen=True)
class TriggerDecision:
    gamma: int
    epsilon_inf_norm: float


def kf_gain(prior_cov: np.ndarray, sys: LinearSystem) -> tuple[np.ndarray, np.ndarray]:
    """Kalman gain L = P C^T S^{-1} with S = C P C^T + R; returns (L, S)."""
    S = _symmetrize(sys.C @ prior_cov @ sys.C.T + sys.R)
    if np.linalg.cond(S) > COND_LIMIT:
        raise NumericalSingularity(
            f"innovation covariance condition number exceeds {COND_LIMIT:.0e}")
    L = np.linalg.solve(S, sys.C @ prior_cov).T
    return L, S


def et_predict(est: GaussianEstimate, u: np.ndarray, sys: LinearSystem) -> GaussianEstimate:
    """A priori update: mean <- A mean + B u, cov <- A cov A^T + Q."""
    u = np.asarray(u, dtype=float).reshape(-1)
    mean = sys.A @ est.mean + sys.B @ u
    cov = _symmetrize(sys.A @ est.cov @ sys.A.T + sys.Q)
    return GaussianEstimate(mean, cov, est.step + 1)


def evaluate_trigger(prior: GaussianEstimate, y: np.ndarray, delta: Threshold,
                     sys: LinearSystem) -> tuple[TriggerDecision, np.ndarray]:
    """Whiten the innovation and apply the infinity-norm trigger rule.

    The whitening matrix is the inverse lower Cholesky factor of
    S = C P C^T + R, so each component of the whitened innovation is
    standard normal under the filter's model.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    z = y - sys.C @ prior.mean
    S = _symmetrize(sys.C @ prior.cov @ sys.C.T + sys.R)
    try:
        chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise CholeskyFailure("innovation covariance is not positive definite") from exc
    eps = np.linalg.solve(chol, z)
    eps_inf = float(np.abs(eps).max())
    gamma = 1 if eps_inf > delta.delta else 0
    return TriggerDecision(gamma=gamma, epsilon_inf_norm=eps_inf), z


def et_correct(prior: GaussianEstimate, decision: TriggerDecision, z: np.ndarray,
               delta: Threshold, sys: LinearSystem) -> GaussianEstimate:
    """A posteriori update.

    gamma = 1 is the exact Kalman correction; gamma = 0 leaves the mean and
    shrinks the covariance by the beta(delta)-attenuated amount.
    """
    L, _ = kf_gain(prior.cov, sys)
    gamma = decision.gamma
    mean = prior.mean + gamma * (L @ np.asarray(z, dtype=float).reshape(-1))
    factor = gamma + (1 - gamma) * beta(delta.delta)
    cov = _symmetrize(prior.cov - factor * (L @ sys.C @ prior.cov))
    return GaussianEstimate(mean, cov, prior.step)


def kf_expected_belief_step(pair: OfflineCovPair, sys: LinearSystem) -> OfflineCovPair:
    """One step of the expected-belief recursion under an always-transmitting KF."""
    prior = _symmetrize(sys.A @ pair.sigma @ sys.A.T + sys.Q)
    L, _ = kf_gain(prior, sys)
    gain_term = L @ sys.C @ prior
    sigma = _symmetrize(prior - gain_term)
    A_cl = sys.A_closed
    lam = _symmetrize(A_cl @ pair.lam @ A_cl.T + gain_term)
    return OfflineCovPair(sigma, lam)


def et_offline_cov_step(pair: OfflineCovPair, gamma: int, delta: Threshold,
                        sys: LinearSystem) -> OfflineCovPair:
    """One offline covariance step under event-triggered estimation.

    For a given trigger outcome gamma the forecasted estimate distribution
    stays Gaussian: sigma follows the attenuated filter update and lam picks
    up the gain term only on transmitting steps.  gamma = 1 for every step
    reproduces kf_expected_belief_step exactly.
    """
    prior = _symmetrize(sys.A @ pair.sigma @ sys.A.T + sys.Q)
    L, _ = kf_gain(prior, sys)
    gain_term = L @ sys.C @ prior
    factor = gamma + (1 - gamma) * beta(delta.delta)
    sigma = _symmetrize(prior - factor * gain_term)
    A_cl = sys.A_closed
    lam = _symmetrize(A_cl @ pair.lam @ A_cl.T + gamma * gain_term)
    return OfflineCovPair(sigma, lam)
