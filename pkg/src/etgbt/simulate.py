"""Closed-loop Monte Carlo execution of a plan with the ET filter in the loop.

Each rollout samples a true initial state, then steps the physical system:
the tracking controller acts on the filter's estimate, the sensor transmits
only surprising measurements, and the filter fuses either the measurement or
the silence.  Alongside, the offline covariance pair is propagated under the
*realized* trigger sequence so the spherical bound stream stored in the plan
can be margin-checked against what actually happened (the eigenvalue margin
``epsilon`` must stay nonnegative for every run if the bound recursion is
sound).

All runs of a batch are propagated simultaneously (the per-run state is a
leading array axis); each run draws its noise from its own generator spawned
from the master seed, so statistics are independent of batch size and order.
"""

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environment import Environment, points_in_goal, points_in_obstacle
from .filtering import GaussianEstimate
from .model import ValidatedSystem
from .planner import METCPlan
from .trigger_math import beta

__all__ = ["RolloutResult", "SimStats", "rollout", "monte_carlo",
           "empirical_bound_check"]

EPSILON_TOLERANCE = -1e-9


@dataclass(frozen=True)
class RolloutResult:
    """Everything observable from a single closed-loop execution."""

    states: np.ndarray          # (T+1, n) true states
    estimates: tuple            # T+1 GaussianEstimate
    triggers: np.ndarray        # (T,) realized gamma
    collided: bool
    first_collision_step: Optional[int]
    reached_goal: bool
    comm_cost: float
    epsilon_min: np.ndarray     # (T+1,) bound margin under the realized triggers

    def to_dict(self) -> dict:
        return {
            "states": self.states.tolist(),
            "estimate_means": [est.mean.tolist() for est in self.estimates],
            "estimate_covs": [est.cov.tolist() for est in self.estimates],
            "triggers": self.triggers.astype(int).tolist(),
            "collided": bool(self.collided),
            "first_collision_step": self.first_collision_step,
            "reached_goal": bool(self.reached_goal),
            "comm_cost": self.comm_cost,
            "epsilon_min": self.epsilon_min.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class SimStats:
    runs: int
    collision_fraction: float
    goal_fraction: float
    mean_cost: float
    std_cost: float
    per_step_trigger_rate: np.ndarray
    min_epsilon_overall: float
    per_step_min_epsilon: np.ndarray  # (T+1,), for trace export

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "collision_fraction": self.collision_fraction,
            "goal_fraction": self.goal_fraction,
            "mean_cost": self.mean_cost,
            "std_cost": self.std_cost,
            "per_step_trigger_rate": np.asarray(self.per_step_trigger_rate).tolist(),
            "min_epsilon_overall": self.min_epsilon_overall,
            "per_step_min_epsilon": np.asarray(self.per_step_min_epsilon).tolist(),
        }


def _run_generator(master_seed: int, run_index: int) -> np.random.Generator:
    # splittable counter scheme: child stream (master_seed, run_index)
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(run_index,)))


def _draw_noise(plan: METCPlan, sys: ValidatedSystem, sigma0: np.ndarray,
                master_seed: int, run_indices) -> tuple:
    """Per-run standard-normal blocks, drawn in a fixed order per generator."""
    T, n, m = plan.horizon, sys.n, sys.m
    N = len(run_indices)
    X0 = np.empty((N, n))
    W = np.empty((N, T, n))
    V = np.empty((N, T, m))
    for row, run_index in enumerate(run_indices):
        gen = _run_generator(master_seed, run_index)
        X0[row] = gen.standard_normal(n)
        W[row] = gen.standard_normal((T, n))
        V[row] = gen.standard_normal((T, m))
    chol_sigma0 = np.linalg.cholesky(sigma0) if np.any(sigma0) else np.zeros((n, n))
    chol_q = np.linalg.cholesky(sys.Q)
    chol_r = np.linalg.cholesky(sys.R)
    x0 = plan.nominal_states[0] + X0 @ chol_sigma0.T
    w = W @ chol_q.T
    v = V @ chol_r.T
    return x0, w, v


def _simulate_batch(plan: METCPlan, sys: ValidatedSystem, env: Environment,
                    sigma0: np.ndarray, lambda0: np.ndarray, master_seed: int,
                    run_indices, record: bool = False) -> dict:
    T, n = plan.horizon, sys.n
    N = len(run_indices)
    A, B, C, Q, R, K = sys.A, sys.B, sys.C, sys.Q, sys.R, sys.K
    A_cl = sys.A_closed
    x, w_all, v_all = _draw_noise(plan, sys, sigma0, master_seed, run_indices)
    xh = np.tile(plan.nominal_states[0], (N, 1))
    Sig = np.tile(sigma0, (N, 1, 1))
    Lam = np.tile(lambda0, (N, 1, 1))
    eye = np.eye(n)
    betas = [beta(float(d)) for d in plan.deltas]
    bound_totals = [bs.total for bs in plan.bounds]

    triggers = np.zeros((N, T), dtype=bool)
    eps_min = np.empty((N, T + 1))
    eps_min[:, 0] = np.linalg.eigvalsh(bound_totals[0] * eye - (Sig + Lam))[:, 0]
    first_hit = np.full(N, -1, dtype=int)
    hit_now = points_in_obstacle(x[:, :2], env)
    first_hit[hit_now] = 0
    if record:
        states_rec = np.empty((N, T + 1, n))
        means_rec = np.empty((N, T + 1, n))
        covs_rec = np.empty((N, T + 1, n, n))
        states_rec[:, 0] = x
        means_rec[:, 0] = xh
        covs_rec[:, 0] = Sig

    for k in range(T):
        u = plan.nominal_controls[k] - (xh - plan.nominal_states[k]) @ K.T
        x = x @ A.T + u @ B.T + w_all[:, k]
        xh_prior = xh @ A.T + u @ B.T
        Sig_prior = np.einsum("ij,njk,lk->nil", A, Sig, A) + Q
        Sig_prior = 0.5 * (Sig_prior + Sig_prior.transpose(0, 2, 1))
        y = x @ C.T + v_all[:, k]
        z = y - xh_prior @ C.T
        S = np.einsum("ij,njk,lk->nil", C, Sig_prior, C) + R
        S = 0.5 * (S + S.transpose(0, 2, 1))
        chol = np.linalg.cholesky(S)
        eps = np.linalg.solve(chol, z[:, :, None])[:, :, 0]
        gamma = np.abs(eps).max(axis=1) > float(plan.deltas[k])
        triggers[:, k] = gamma
        CP = np.einsum("ij,njk->nik", C, Sig_prior)
        L = np.linalg.solve(S, CP).transpose(0, 2, 1)
        gamma_f = gamma.astype(float)
        xh = xh_prior + gamma_f[:, None] * np.einsum("nij,nj->ni", L, z)
        gain_term = np.einsum("nij,njk->nik", L, CP)
        factor = gamma_f + (1.0 - gamma_f) * betas[k]
        Sig = Sig_prior - factor[:, None, None] * gain_term
        Sig = 0.5 * (Sig + Sig.transpose(0, 2, 1))
        Lam = np.einsum("ij,njk,lk->nil", A_cl, Lam, A_cl) \
            + gamma_f[:, None, None] * gain_term
        Lam = 0.5 * (Lam + Lam.transpose(0, 2, 1))
        eps_min[:, k + 1] = np.linalg.eigvalsh(
            bound_totals[k + 1] * eye - (Sig + Lam))[:, 0]
        hit_now = points_in_obstacle(x[:, :2], env)
        newly = hit_now & (first_hit < 0)
        first_hit[newly] = k + 1
        if record:
            states_rec[:, k + 1] = x
            means_rec[:, k + 1] = xh
            covs_rec[:, k + 1] = Sig

    out = {
        "triggers": triggers,
        "eps_min": eps_min,
        "first_hit": first_hit,
        "reached_goal": points_in_goal(x[:, :2], env),
        "comm_cost": plan.cost_cm * triggers.sum(axis=1),
    }
    if record:
        out.update(states=states_rec, means=means_rec, covs=covs_rec)
    return out


def rollout(plan: METCPlan, sys: ValidatedSystem, env: Environment, seed: int,
            sigma0: np.ndarray, lambda0: Optional[np.ndarray] = None) -> RolloutResult:
    """Run a single closed-loop execution; identical to run 0 of monte_carlo(seed)."""
    sigma0 = np.asarray(sigma0, dtype=float)
    lambda0 = np.zeros_like(sigma0) if lambda0 is None else np.asarray(lambda0, dtype=float)
    batch = _simulate_batch(plan, sys, env, sigma0, lambda0, seed, [0], record=True)
    estimates = tuple(
        GaussianEstimate(batch["means"][0, k], batch["covs"][0, k], step=k)
        for k in range(plan.horizon + 1))
    first = int(batch["first_hit"][0])
    return RolloutResult(
        states=batch["states"][0],
        estimates=estimates,
        triggers=batch["triggers"][0],
        collided=first >= 0,
        first_collision_step=first if first >= 0 else None,
        reached_goal=bool(batch["reached_goal"][0]),
        comm_cost=float(batch["comm_cost"][0]),
        epsilon_min=batch["eps_min"][0],
    )


def monte_carlo(plan: METCPlan, sys: ValidatedSystem, env: Environment,
                n_runs: int, seed: int, sigma0: np.ndarray,
                lambda0: Optional[np.ndarray] = None) -> SimStats:
    """Aggregate n_runs independent rollouts with per-run derived seeds."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    sigma0 = np.asarray(sigma0, dtype=float)
    lambda0 = np.zeros_like(sigma0) if lambda0 is None else np.asarray(lambda0, dtype=float)
    batch = _simulate_batch(plan, sys, env, sigma0, lambda0, seed,
                            list(range(n_runs)))
    costs = batch["comm_cost"]
    return SimStats(
        runs=n_runs,
        collision_fraction=float(np.mean(batch["first_hit"] >= 0)),
        goal_fraction=float(np.mean(batch["reached_goal"])),
        mean_cost=float(np.mean(costs)),
        std_cost=float(np.std(costs, ddof=1)) if n_runs > 1 else 0.0,
        per_step_trigger_rate=batch["triggers"].mean(axis=0),
        min_epsilon_overall=float(batch["eps_min"].min()),
        per_step_min_epsilon=batch["eps_min"].min(axis=0),
    )


def empirical_bound_check(result: RolloutResult) -> float:
    """Smallest eigenvalue margin of the bound along the realized trajectory."""
    return float(result.epsilon_min.min())
