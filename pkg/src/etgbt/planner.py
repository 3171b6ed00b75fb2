"""Sampling-based search for joint motion and communication plans.

The tree lives in bounded-belief space: each node is a nominal mean plus the
scalar covariance bound, each edge carries a constant control held for a few
steps and a single triggering threshold.  Search follows the SST recipe --
best-near selection inside a fixed radius, witness-based dominance pruning --
with the 2-Wasserstein distance between spherical Gaussians as the metric.
Edge cost is expected communication: steps * c_m * Gamma(delta, m), so the
planner trades relaxed thresholds (cheap, inflating bounds) against tight
ones (expensive, contracting bounds) to thread the chance constraints.
"""

import time
from dataclasses import dataclass, field
from functools import lru_cache
from math import inf, log, sqrt
from typing import Optional

import numpy as np

from .bounds import BoundDiverged, BoundState, BoundedBelief, bound_step, init_bounds, propagate_bounds
from .environment import Environment, Circle, sphere_in_goal, sphere_obstacle_free
from .errors import NoSolution
from .model import ScalarBounds, ValidatedSystem, derive_scalar_bounds
from .trigger_math import chi2_quantile, gamma_rate, std_normal_quantile

__all__ = [
    "PlannerParams",
    "TreeNode",
    "METCPlan",
    "wasserstein2",
    "containment_radius",
    "valid_path_check",
    "goal_check",
    "select_node",
    "sample_belief",
    "sample_delta",
    "sample_control",
    "prune",
    "plan",
    "plan_cost",
]

N_POSITIONAL = 2


@dataclass(frozen=True)
class PlannerParams:
    control_low: tuple
    control_high: tuple
    p_safe: float = 0.99
    cost_cm: float = 1.0
    delta_min: float = 0.3
    delta_max: float = 5.0
    steps_min: int = 5
    steps_max: int = 20
    selection_radius: float = 5.0
    witness_radius: float = 2.5
    goal_bias: float = 0.05
    max_iterations: Optional[int] = None
    time_budget: Optional[float] = None
    seed: int = 0
    radius_rule: str = "chi2"
    aux_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if not (0.0 < self.p_safe < 1.0):
            raise ValueError(f"p_safe must lie in (0,1), got {self.p_safe}")
        if self.delta_min <= 0.0 or self.delta_max < self.delta_min:
            raise ValueError("need 0 < delta_min <= delta_max")
        if not (0.0 < self.witness_radius < self.selection_radius):
            raise ValueError("need 0 < witness_radius < selection_radius")
        if not (0.0 <= self.goal_bias < 1.0):
            raise ValueError("goal_bias must lie in [0,1)")
        if not (1 <= self.steps_min <= self.steps_max):
            raise ValueError("need 1 <= steps_min <= steps_max")
        if self.cost_cm <= 0.0:
            raise ValueError("cost_cm must be positive")
        if self.radius_rule not in ("chi2", "zvar"):
            raise ValueError(f"unknown radius_rule {self.radius_rule!r}")
        object.__setattr__(self, "control_low", tuple(float(v) for v in self.control_low))
        object.__setattr__(self, "control_high", tuple(float(v) for v in self.control_high))
        if len(self.control_low) != len(self.control_high):
            raise ValueError("control bounds must share length")


@dataclass
class TreeNode:
    belief: BoundedBelief
    parent: Optional[int]
    edge: Optional[tuple]  # (control u, delta, steps)
    cost_to_come: float
    id: int


@dataclass(frozen=True)
class METCPlan:
    """Nominal trajectory, per-step thresholds, and the bound stream."""

    nominal_states: np.ndarray   # (T+1, n)
    nominal_controls: np.ndarray  # (T, p)
    deltas: np.ndarray           # (T,)
    bounds: tuple                # T+1 BoundState
    expected_cost: float
    horizon: int
    m: int
    cost_cm: float

    def __post_init__(self):
        states = np.asarray(self.nominal_states, dtype=float)
        controls = np.asarray(self.nominal_controls, dtype=float).reshape(self.horizon, -1)
        deltas = np.asarray(self.deltas, dtype=float).reshape(-1)
        if states.shape[0] != self.horizon + 1 or deltas.shape[0] != self.horizon \
                or len(self.bounds) != self.horizon + 1:
            raise ValueError("plan sequence lengths are inconsistent with the horizon")
        object.__setattr__(self, "nominal_states", states)
        object.__setattr__(self, "nominal_controls", controls)
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "bounds", tuple(self.bounds))


def wasserstein2(a: BoundedBelief, b: BoundedBelief) -> float:
    """2-Wasserstein distance between the spherical upper-bounding Gaussians."""
    n = a.mean.shape[0]
    ds = sqrt(max(a.bound.total, 0.0)) - sqrt(max(b.bound.total, 0.0))
    return sqrt(float(np.sum((a.mean - b.mean) ** 2)) + n * ds * ds)


@lru_cache(maxsize=64)
def _radius_multiplier(p_safe: float, n_pos: int, rule: str) -> float:
    if rule == "chi2":
        return sqrt(chi2_quantile(p_safe, n_pos))
    # literal variance-scaled rule, kept for comparison only: the multiplier
    # -Phi^{-1}(p_safe/2) scales the variance rather than the deviation and
    # does not guarantee p_safe containment.
    return -std_normal_quantile(0.5 * p_safe)


def containment_radius(bound: BoundState, p_safe: float, n: int,
                       rule: str = "chi2") -> float:
    """Radius of the sphere holding >= p_safe mass of any dominated Gaussian."""
    total = max(bound.total, 0.0)
    mult = _radius_multiplier(p_safe, n, rule)
    if rule == "chi2":
        return mult * sqrt(total)
    return mult * total


def valid_path_check(parent: BoundedBelief, controls: np.ndarray, delta: float,
                     sys: ValidatedSystem, sb: ScalarBounds, env: Environment,
                     params: PlannerParams):
    """Propagate an edge and check the containment sphere at every step.

    controls has shape (steps, p).  Returns (valid, child, per_step) where
    per_step lists the intermediate BoundedBeliefs (empty when invalid).
    """
    controls = np.asarray(controls, dtype=float)
    mean = parent.mean
    state = parent.bound
    rule = params.radius_rule
    per_step = []
    for u in controls:
        mean = sys.A @ mean + sys.B @ u
        try:
            state = bound_step(state, sb, delta)
        except BoundDiverged:
            return False, None, []
        radius = containment_radius(state, params.p_safe, N_POSITIONAL, rule)
        if not sphere_obstacle_free(mean[:N_POSITIONAL], radius, env):
            return False, None, []
        per_step.append(BoundedBelief(mean, state))
    return True, per_step[-1], per_step


def goal_check(belief: BoundedBelief, env: Environment, params: PlannerParams) -> bool:
    radius = containment_radius(belief.bound, params.p_safe, N_POSITIONAL,
                                params.radius_rule)
    return sphere_in_goal(belief.mean[:N_POSITIONAL], radius, env)


class _Store:
    """Append-only arrays with amortized growth for vectorized scans."""

    def __init__(self, n: int, capacity: int = 1024):
        self.size = 0
        self.means = np.empty((capacity, n))
        self.sqrts = np.empty(capacity)
        self.costs = np.empty(capacity)
        self.active = np.zeros(capacity, dtype=bool)

    def _grow(self):
        cap = self.means.shape[0] * 2
        for name in ("means", "sqrts", "costs", "active"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def append(self, mean: np.ndarray, sqrt_total: float, cost: float) -> int:
        if self.size == self.means.shape[0]:
            self._grow()
        idx = self.size
        self.means[idx] = mean
        self.sqrts[idx] = sqrt_total
        self.costs[idx] = cost
        self.active[idx] = True
        self.size += 1
        return idx

    def dist2(self, mean: np.ndarray, sqrt_total: float, n: int) -> np.ndarray:
        d2 = np.sum((self.means[: self.size] - mean) ** 2, axis=1)
        ds = self.sqrts[: self.size] - sqrt_total
        return d2 + n * ds * ds


class Tree:
    """SST bookkeeping: nodes, witnesses, dominance pruning, best-goal guard."""

    def __init__(self, root: BoundedBelief, params: PlannerParams):
        n = root.mean.shape[0]
        self.n = n
        self.params = params
        self.nodes: list[TreeNode] = [TreeNode(root, None, None, 0.0, 0)]
        self.children = [0]
        self.alive = [True]
        self.store = _Store(n)
        self.store.append(root.mean, sqrt(max(root.bound.total, 0.0)), 0.0)
        self.witnesses = _Store(n)
        self.witnesses.append(root.mean, sqrt(max(root.bound.total, 0.0)), 0.0)
        self.witness_rep = [0]
        self.max_total = max(root.bound.total, 0.0)
        self.best_goal_id: Optional[int] = None
        self.n_alive = 1

    def select(self, sample: BoundedBelief) -> int:
        d2 = self.store.dist2(sample.mean, sqrt(max(sample.bound.total, 0.0)), self.n)
        active = self.store.active[: self.store.size]
        d2 = np.where(active, d2, inf)
        radius2 = self.params.selection_radius ** 2
        in_ball = d2 <= radius2
        if np.any(in_ball):
            costs = np.where(in_ball, self.store.costs[: self.store.size], inf)
            return int(np.argmin(costs))
        return int(np.argmin(d2))

    def _delete_cascade(self, node_id: int) -> None:
        while (node_id is not None and self.alive[node_id]
               and not self.store.active[node_id]
               and self.children[node_id] == 0
               and node_id != self.best_goal_id and node_id != 0):
            self.alive[node_id] = False
            self.n_alive -= 1
            parent = self.nodes[node_id].parent
            if parent is not None:
                self.children[parent] -= 1
            node_id = parent

    def try_insert(self, parent_id: int, belief: BoundedBelief,
                   edge: tuple, cost: float) -> Optional[int]:
        sqrt_total = sqrt(max(belief.bound.total, 0.0))
        d2 = self.witnesses.dist2(belief.mean, sqrt_total, self.n)
        nearest = int(np.argmin(d2)) if self.witnesses.size else None
        new_witness = nearest is None or d2[nearest] > self.params.witness_radius ** 2
        if not new_witness:
            rep = self.witness_rep[nearest]
            if cost >= self.nodes[rep].cost_to_come:
                return None
        node_id = len(self.nodes)
        self.nodes.append(TreeNode(belief, parent_id, edge, cost, node_id))
        self.children.append(0)
        self.alive.append(True)
        self.children[parent_id] += 1
        self.store.append(belief.mean, sqrt_total, cost)
        self.n_alive += 1
        self.max_total = max(self.max_total, belief.bound.total)
        if new_witness:
            self.witnesses.append(belief.mean, sqrt_total, 0.0)
            self.witness_rep.append(node_id)
        else:
            old_rep = self.witness_rep[nearest]
            self.witness_rep[nearest] = node_id
            if old_rep != self.best_goal_id and old_rep != 0:
                self.store.active[old_rep] = False
                self._delete_cascade(old_rep)
        return node_id

    def stats(self) -> dict:
        return {
            "nodes_alive": self.n_alive,
            "nodes_total": len(self.nodes),
            "witnesses": self.witnesses.size,
        }


def select_node(tree: Tree, sample: BoundedBelief, params: PlannerParams) -> TreeNode:
    """SST best-near: cheapest active node within the selection radius, else nearest."""
    return tree.nodes[tree.select(sample)]


def prune(tree: Tree, candidate: TreeNode) -> Optional[TreeNode]:
    """Insert under SST witness dominance.

    A candidate cheaper than its witness ball's representative replaces it
    (the old representative is deactivated and dead branches are deleted); a
    costlier candidate is rejected outright.  The best goal-reaching node is
    never pruned.  Returns the inserted node or None.
    """
    node_id = tree.try_insert(candidate.parent, candidate.belief,
                              candidate.edge, candidate.cost_to_come)
    return None if node_id is None else tree.nodes[node_id]


def sample_belief(rng: np.random.Generator, params: PlannerParams, env: Environment,
                  n: int, max_total: float) -> BoundedBelief:
    """Uniform workspace mean (goal-biased) with a uniform bound magnitude."""
    biased = rng.uniform() < params.goal_bias
    if biased:
        goal = env.goal
        if isinstance(goal, Circle):
            while True:
                pos = np.array(goal.center) + rng.uniform(-goal.radius, goal.radius, size=2)
                if np.hypot(*(pos - np.array(goal.center))) <= goal.radius:
                    break
        else:
            pos = rng.uniform(goal.lo, goal.hi)
    else:
        ws = env.workspace
        pos = rng.uniform(ws.lo, ws.hi)
    mean = np.zeros(n)
    mean[:N_POSITIONAL] = pos
    if n > N_POSITIONAL:
        mean[N_POSITIONAL:] = rng.uniform(params.aux_range[0], params.aux_range[1],
                                          size=n - N_POSITIONAL)
    s = rng.uniform(0.0, max(max_total, 1e-12))
    half = 0.5 * s
    bound = BoundState(lambda_bar=half, p_bar=max(half, 1e-15), p_lo=0.0, step=0)
    return BoundedBelief(mean, bound)


def sample_delta(rng: np.random.Generator, params: PlannerParams) -> float:
    """Log-uniform threshold: Gamma spans orders of magnitude across the range."""
    return float(np.exp(rng.uniform(log(params.delta_min), log(params.delta_max))))


def sample_control(rng: np.random.Generator, params: PlannerParams) -> np.ndarray:
    return rng.uniform(params.control_low, params.control_high)


def plan_cost(deltas, m: int, c_m: float) -> float:
    """Expected communication cost: sum of c_m * Gamma(delta_k, m)."""
    return float(sum(c_m * gamma_rate(float(getattr(d, "delta", d)), m) for d in deltas))


def _extract_plan(tree: Tree, goal_id: int, sys: ValidatedSystem,
                  sb: ScalarBounds, root_bound: BoundState,
                  params: PlannerParams) -> METCPlan:
    edges = []
    node = tree.nodes[goal_id]
    while node.parent is not None:
        edges.append(node.edge)
        node = tree.nodes[node.parent]
    edges.reverse()
    states = [tree.nodes[0].belief.mean]
    controls = []
    deltas = []
    for u, delta, steps in edges:
        for _ in range(steps):
            states.append(sys.A @ states[-1] + sys.B @ u)
            controls.append(u)
            deltas.append(delta)
    bound_states = propagate_bounds(root_bound, sb, deltas)
    horizon = len(deltas)
    return METCPlan(
        nominal_states=np.array(states),
        nominal_controls=np.array(controls).reshape(horizon, -1) if horizon else
        np.zeros((0, sys.p)),
        deltas=np.array(deltas),
        bounds=tuple(bound_states),
        expected_cost=plan_cost(deltas, sys.m, params.cost_cm),
        horizon=horizon,
        m=sys.m,
        cost_cm=params.cost_cm,
    )


def plan(sys: ValidatedSystem, env: Environment, params: PlannerParams,
         initial_mean, sigma0, lambda0=None, sb: ScalarBounds | None = None,
         iteration_log: Optional[list] = None,
         stats_out: Optional[dict] = None) -> METCPlan:
    """Run the tree search until the iteration/time budget; return the cheapest plan.

    Raises NoSolution (with tree statistics) when the budget is exhausted
    without a goal-reaching node.  Fully deterministic given the seed when
    driven by an iteration budget.  ``stats_out``, when given, is filled with
    tree diagnostics either way.
    """
    if params.max_iterations is None and params.time_budget is None:
        raise ValueError("need max_iterations or time_budget")
    if sb is None:
        sb = derive_scalar_bounds(sys)
    initial_mean = np.asarray(initial_mean, dtype=float).reshape(-1)
    if lambda0 is None:
        lambda0 = np.zeros((sys.n, sys.n))
    root_bound = init_bounds(np.asarray(sigma0, dtype=float),
                             np.asarray(lambda0, dtype=float))
    root = BoundedBelief(initial_mean, root_bound)
    root_radius = containment_radius(root_bound, params.p_safe, N_POSITIONAL,
                                     params.radius_rule)
    if not sphere_obstacle_free(initial_mean[:N_POSITIONAL], root_radius, env):
        raise ValueError("start belief violates the obstacle constraint")
    if goal_check(root, env, params):
        if stats_out is not None:
            stats_out.update(iterations=0, nodes_alive=1, nodes_total=1, witnesses=1)
        return _extract_plan(Tree(root, params), 0, sys, sb, root_bound, params)

    tree = Tree(root, params)
    rng = np.random.default_rng(params.seed)
    best_cost = inf
    started = time.perf_counter()
    iteration = 0
    while True:
        if params.max_iterations is not None and iteration >= params.max_iterations:
            break
        if params.time_budget is not None and \
                time.perf_counter() - started >= params.time_budget:
            break
        iteration += 1
        b_rand = sample_belief(rng, params, env, sys.n, tree.max_total)
        delta = sample_delta(rng, params)
        u = sample_control(rng, params)
        steps = int(rng.integers(params.steps_min, params.steps_max + 1))
        sel_id = tree.select(b_rand)
        parent = tree.nodes[sel_id]
        valid, child, _ = valid_path_check(
            parent.belief, np.tile(u, (steps, 1)), delta, sys, sb, env, params)
        if valid:
            cost = parent.cost_to_come + steps * params.cost_cm * gamma_rate(delta, sys.m)
            node_id = tree.try_insert(sel_id, child, (u, delta, steps), cost)
            if node_id is not None and cost < best_cost and goal_check(child, env, params):
                best_cost = cost
                tree.best_goal_id = node_id
        if iteration_log is not None:
            iteration_log.append((iteration, tree.n_alive,
                                  best_cost if np.isfinite(best_cost) else None))
    stats = tree.stats()
    stats.update(iterations=iteration, elapsed_s=time.perf_counter() - started)
    if stats_out is not None:
        stats_out.update(stats)
    if tree.best_goal_id is None:
        raise NoSolution("no goal-reaching plan within budget", stats)
    return _extract_plan(tree, tree.best_goal_id, sys, sb, root_bound, params)
