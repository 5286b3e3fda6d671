"""Cost-based and random feature removal, and the best-of-n comparison harness."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from bcmkit.data import CostProfile

log = logging.getLogger(__name__)


def remove_cost_based(features, profile: CostProfile) -> int:
    """Most expensive feature; lowest id on ties."""
    if not features:
        raise ValueError("no feature to remove")
    return min(features, key=lambda f: (-profile[f], f))


def remove_random(features, seed: int, step: int) -> int:
    """Uniform pick, a pure function of (seed, step, feature set)."""
    if not features:
        raise ValueError("no feature to remove")
    pool = sorted(features)
    rng = np.random.default_rng([seed, step])
    return pool[int(rng.integers(len(pool)))]


@dataclass(frozen=True)
class Trial:
    trial: int
    accuracy: float
    model_cost: int
    features: tuple[int, ...]


@dataclass(frozen=True)
class Cell:
    strategy: str
    budget: int
    trials: tuple[Trial, ...]

    @property
    def best(self) -> Trial | None:
        # max() keeps the first maximum, i.e. the lowest trial index on ties
        return max(self.trials, key=lambda t: t.accuracy) if self.trials else None

    @property
    def best_accuracy(self) -> float:
        return self.best.accuracy if self.trials else float("nan")


@dataclass(frozen=True)
class ComparisonReport:
    cells: dict
    budget_levels: tuple[int, ...]
    strategies: tuple[str, ...]
    n_trials: int
    train_seeds: tuple[int, ...]
    removal_seeds: tuple[int, ...]

    def cell(self, strategy: str, budget: int) -> Cell:
        return self.cells[(strategy, budget)]

    def best_curve(self, strategy: str) -> list[float]:
        return [self.cell(strategy, b).best_accuracy for b in self.budget_levels]


def run_comparison(exp, budget_levels, n_trials: int = 10, strategies=None, base_seed: int | None = None,
                   ) -> ComparisonReport:
    """Run every strategy ``n_trials`` times at every budget level.

    Trial ``t`` trains with seed ``exp.train.seed + t`` and, for the random
    strategy, draws removals with seed ``base_seed + t``. Within a trial the
    budget levels continue one removal trajectory per strategy, and all
    strategies share one model cache, so identical feature sets (the full set
    at a budget covering every feature) yield identical models.
    """
    from bcmkit.budget import STRATEGIES, BudgetInfeasible, ModelBuilder, Trajectory, make_remover

    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    strategies = tuple(strategies or STRATEGIES)
    levels = tuple(sorted(set(int(b) for b in budget_levels), reverse=True))
    base_seed = exp.train.seed if base_seed is None else base_seed
    train_seeds = tuple(exp.train.seed + t for t in range(n_trials))
    removal_seeds = tuple(base_seed + t for t in range(n_trials))

    results: dict = {(s, b): [] for s in strategies for b in levels}
    for t in range(n_trials):
        builder = ModelBuilder(exp.with_seed(train_seeds[t]))
        for strategy in strategies:
            traj = Trajectory(builder, make_remover(strategy, removal_seeds[t]))
            for b in levels:
                try:
                    traj.reduce_to(b)
                except BudgetInfeasible:
                    break
                bcm = traj.bcm(b)
                results[(strategy, b)].append(Trial(t, bcm.accuracy, bcm.model_cost, tuple(sorted(bcm.features))))
            log.info("trial %d %s done", t, strategy)

    cells = {key: Cell(key[0], key[1], tuple(v)) for key, v in results.items()}
    return ComparisonReport(cells, levels, strategies, n_trials, train_seeds, removal_seeds)
