"""Recursive scalar upper bound on the predicted covariance sigma + lam.

Under event-triggered estimation the offline covariance pair switches
between two modes depending on the realized trigger sequence.  Rather than
enumerate sequences, three scalars are propagated:

* ``lambda_bar`` dominates the estimate-dispersion covariance lam,
* ``p_bar`` upper-bounds the filter covariance sigma (worst case: silence),
* ``p_lo`` lower-bounds sigma (best case: transmission),

so that sigma_k + lam_k <= (lambda_bar_k + p_bar_k) I for EVERY possible
trigger sequence.  ``brute_force_envelope`` certifies exactly that claim by
enumerating all 2^T sequences with the filtering-module arithmetic.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BoundDiverged, HorizonTooLarge, NotPSD
from .model import LinearSystem, ScalarBounds
from .trigger_math import beta

__all__ = [
    "BoundState",
    "BoundedBelief",
    "BoundReport",
    "init_bounds",
    "bound_step",
    "propagate_bounds",
    "brute_force_envelope",
    "check_bound_dominates",
    "DIVERGENCE_GUARD",
    "ENUMERATION_HORIZON_MAX",
    "DOMINANCE_TOLERANCE",
]

DIVERGENCE_GUARD = 1e18
ENUMERATION_HORIZON_MAX = 20
DOMINANCE_TOLERANCE = -1e-9


def _delta_value(delta) -> float:
    return float(getattr(delta, "delta", delta))


@dataclass(frozen=True)
class BoundState:
    """Scalar bound triple (lambda_bar, p_bar, p_lo) at step k."""

    lambda_bar: float
    p_bar: float
    p_lo: float
    step: int = 0

    def __post_init__(self):
        if not (self.lambda_bar >= 0.0 and np.isfinite(self.lambda_bar)):
            raise ValueError(f"lambda_bar must be finite and >= 0, got {self.lambda_bar}")
        if not (0.0 <= self.p_lo <= self.p_bar) or not np.isfinite(self.p_bar):
            raise ValueError(
                f"require 0 <= p_lo <= p_bar finite, got {self.p_lo}, {self.p_bar}")

    @property
    def total(self) -> float:
        """Radius of the spherical covariance bound, lambda_bar + p_bar."""
        return self.lambda_bar + self.p_bar


@dataclass(frozen=True)
class BoundedBelief:
    """Nominal mean plus the scalar bound standing in for sigma + lam."""

    mean: np.ndarray
    bound: BoundState

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(-1))


def init_bounds(sigma0: np.ndarray, lambda0: np.ndarray) -> BoundState:
    """Initialize from extreme eigenvalues of the initial covariances."""
    sigma0 = np.asarray(sigma0, dtype=float)
    lambda0 = np.asarray(lambda0, dtype=float)
    for name, M in (("sigma0", sigma0), ("lambda0", lambda0)):
        if not np.allclose(M, M.T, atol=1e-12, rtol=0.0):
            raise NotPSD(f"{name} is not symmetric")
        if float(np.linalg.eigvalsh(M).min()) < -1e-10:
            raise NotPSD(f"{name} has a negative eigenvalue")
    sig_eigs = np.linalg.eigvalsh(sigma0)
    lam_max = float(np.linalg.eigvalsh(lambda0).max())
    return BoundState(
        lambda_bar=max(lam_max, 0.0),
        p_bar=max(float(sig_eigs[-1]), 0.0),
        p_lo=max(float(sig_eigs[0]), 0.0),
        step=0,
    )


def bound_step(state: BoundState, sb: ScalarBounds, delta) -> BoundState:
    """Advance the bound triple one step for triggering threshold delta.

    lambda_bar uses the always-transmit worst case (hence no delta
    dependence); p_bar uses the silent worst case attenuated by beta(delta);
    p_lo is the transmit-mode information sum and is constant after step 0.
    """
    b = beta(_delta_value(delta))
    prior_hi = state.p_bar * sb.a_hi ** 2 + sb.q_hi
    prior_lo = state.p_lo * sb.a_lo ** 2 + sb.q_lo
    lambda_bar = (sb.k_hi ** 2) * state.lambda_bar + \
        (sb.c_hi ** 2) * prior_hi ** 2 / ((sb.c_lo ** 2) * prior_lo + sb.r_lo)
    p_bar = 1.0 / (1.0 / prior_hi +
                   b * sb.c_lo ** 2 / (sb.r_hi + (1.0 - b) * (sb.c_hi ** 2) * prior_hi))
    p_lo = 1.0 / (1.0 / sb.q_lo + sb.c_hi ** 2 / sb.r_lo)
    if not np.isfinite(lambda_bar) or lambda_bar > DIVERGENCE_GUARD:
        raise BoundDiverged(state.step + 1, float(lambda_bar))
    return BoundState(float(lambda_bar), float(p_bar), float(p_lo), state.step + 1)


def propagate_bounds(state0: BoundState, sb: ScalarBounds, deltas) -> list[BoundState]:
    """Iterate bound_step; element t is the bound after t steps (t=0 included)."""
    states = [state0]
    for delta in deltas:
        states.append(bound_step(states[-1], sb, delta))
    return states


def _enumeration_level_step(sigma, lam, sys: LinearSystem, delta: float):
    """Expand every trigger-sequence prefix by one step, both trigger outcomes.

    sigma, lam have shape (P, n, n) for P prefixes.  Children are stacked as
    [all gamma=0, all gamma=1], so prefix id bookkeeping is
    child_id = parent_id + gamma * 2^k at level k.  The arithmetic matches
    filtering.et_offline_cov_step exactly, just batched.
    """
    A, C, Q, R = sys.A, sys.C, sys.Q, sys.R
    A_cl = sys.A_closed
    prior = np.einsum("ij,pjk,lk->pil", A, sigma, A) + Q
    prior = 0.5 * (prior + prior.transpose(0, 2, 1))
    S = np.einsum("ij,pjk,lk->pil", C, prior, C) + R
    CP = np.einsum("ij,pjk->pik", C, prior)
    L = np.linalg.solve(S, CP).transpose(0, 2, 1)
    gain_term = np.einsum("pij,pjk->pik", L, CP)
    b = beta(delta)
    closed_lam = np.einsum("ij,pjk,lk->pil", A_cl, lam, A_cl)
    sigma0 = prior - b * gain_term
    sigma1 = prior - gain_term
    lam1 = closed_lam + gain_term
    sigma_next = np.concatenate([sigma0, sigma1], axis=0)
    lam_next = np.concatenate([closed_lam, lam1], axis=0)
    sigma_next = 0.5 * (sigma_next + sigma_next.transpose(0, 2, 1))
    lam_next = 0.5 * (lam_next + lam_next.transpose(0, 2, 1))
    return sigma_next, lam_next


def _check_horizon(deltas, horizon: int) -> list[float]:
    if horizon > ENUMERATION_HORIZON_MAX:
        raise HorizonTooLarge(
            f"horizon {horizon} exceeds enumeration limit {ENUMERATION_HORIZON_MAX}")
    deltas = [_delta_value(d) for d in deltas]
    if len(deltas) < horizon:
        raise ValueError(f"need {horizon} thresholds, got {len(deltas)}")
    return deltas[:horizon]


def brute_force_envelope(sys: LinearSystem, sigma0, lambda0, deltas,
                         horizon: int) -> tuple[float, list[float]]:
    """Exhaustive worst case over all 2^horizon trigger sequences.

    Returns (max over sequences of max eig(sigma_T + lam_T), per-step maxima
    including step 0).
    """
    deltas = _check_horizon(deltas, horizon)
    sigma = np.asarray(sigma0, dtype=float)[None, :, :].copy()
    lam = np.asarray(lambda0, dtype=float)[None, :, :].copy()
    per_step = [float(np.linalg.eigvalsh(sigma[0] + lam[0]).max())]
    for k in range(horizon):
        sigma, lam = _enumeration_level_step(sigma, lam, sys, deltas[k])
        eigs = np.linalg.eigvalsh(sigma + lam)
        per_step.append(float(eigs[:, -1].max()))
    return per_step[-1], per_step


@dataclass
class BoundReport:
    """Outcome of the dominance check: per (step, prefix) eigenvalue margins."""

    rows: list[tuple[int, int, float]]
    min_epsilon: float
    passed: bool
    tolerance: float = DOMINANCE_TOLERANCE

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "gamma_prefix_id", "epsilon_min"])
            for step, prefix_id, eps in self.rows:
                writer.writerow([step, prefix_id, repr(eps)])


def check_bound_dominates(sys: LinearSystem, sigma0, lambda0, deltas,
                          horizon: int, sb: ScalarBounds | None = None,
                          bound_scale: float = 1.0) -> BoundReport:
    """Verify (lambda_bar + p_bar) I - (sigma + lam) is PSD on every prefix.

    Enumerates every trigger-sequence prefix up to the horizon and reports
    the minimum eigenvalue margin per (step, prefix).  ``bound_scale`` is a
    test hook that scales the lambda_bar stream so corrupted recursions are
    detectable end to end; leave at 1.0 for real use.
    """
    from .model import derive_scalar_bounds  # local import to avoid cycle at module load

    deltas = _check_horizon(deltas, horizon)
    if sb is None:
        sb = derive_scalar_bounds(sys)
    states = propagate_bounds(init_bounds(sigma0, lambda0), sb, deltas)
    sigma = np.asarray(sigma0, dtype=float)[None, :, :].copy()
    lam = np.asarray(lambda0, dtype=float)[None, :, :].copy()
    n = sigma.shape[-1]
    eye = np.eye(n)
    rows: list[tuple[int, int, float]] = []
    min_eps = np.inf
    for k in range(horizon + 1):
        total_bound = bound_scale * states[k].lambda_bar + states[k].p_bar
        margins = np.linalg.eigvalsh(total_bound * eye - (sigma + lam))[:, 0]
        for prefix_id, eps in enumerate(margins):
            rows.append((k, prefix_id, float(eps)))
        min_eps = min(min_eps, float(margins.min()))
        if k < horizon:
            sigma, lam = _enumeration_level_step(sigma, lam, sys, deltas[k])
    return BoundReport(rows=rows, min_epsilon=min_eps,
                       passed=min_eps >= DOMINANCE_TOLERANCE)
