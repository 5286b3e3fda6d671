"""Budget-constrained models, budget-sorted schedules, and ablation curves.

A BCM is the tuple (structure, feature set, weights, expected accuracy) for a
model whose feature cost fits a budget. Features are removed one at a time by a
*remover* strategy until the cost fits; the weak-neuron remover retrains on the
surviving features and asks ``prune`` for the least important one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

from bcmkit.data import CostProfile, EncodedDataset, FeatureSchema, RawDataset, check_profile, encode, kfold, model_cost
from bcmkit.net import CVResult, Network, NetworkStructure, TrainConfig, cross_validate, fit_full
from bcmkit.prune import DEFAULT_C0, DEFAULT_MAX_ROUNDS, find_least_important_feature

log = logging.getLogger(__name__)

STRATEGIES = ("weak_neuron", "cost_based", "random")
# Seed offset between levels in independent-levels mode.
LEVEL_SEED_STRIDE = 1000


class BudgetError(RuntimeError):
    pass


class BudgetInfeasible(BudgetError):
    """Only one feature is left and it still costs more than the budget."""


@dataclass(frozen=True)
class PruneConfig:
    c0: float = DEFAULT_C0
    max_rounds: int = DEFAULT_MAX_ROUNDS


@dataclass(frozen=True)
class Experiment:
    """Everything a BCM generation needs besides the budget itself.

    ``data`` holds every schema feature encoded; smaller models use column
    subsets of it. The fold partition is fixed by ``fold_seed`` and shared by
    every model of the experiment.
    """

    data: EncodedDataset
    schema: FeatureSchema
    profile: CostProfile
    hidden: tuple[int, ...]
    train: TrainConfig = TrainConfig()
    k: int = 10
    fold_seed: int = 0
    prune: PruneConfig = PruneConfig()
    workers: int = 1

    def __post_init__(self):
        check_profile(self.profile, self.schema)
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if len(self.hidden) < 2:
            raise BudgetError("need at least two hidden layers (four layers in total)")

    @classmethod
    def from_raw(cls, raw: RawDataset, schema: FeatureSchema, profile: CostProfile, hidden, **kw) -> "Experiment":
        return cls(encode(raw, schema), schema, profile, tuple(hidden), **kw)

    @property
    def all_features(self) -> frozenset[int]:
        return frozenset(self.schema.ids)

    def with_seed(self, seed: int) -> "Experiment":
        return replace(self, train=replace(self.train, seed=seed))


class ModelBuilder:
    """Trains each distinct feature set at most once.

    ``network`` is the model trained on all rows (fed to weak-link analysis
    and stored as the BCM weights); ``cv`` is the k-fold estimate of its
    accuracy. Both are deterministic in the experiment's seeds, so caching
    changes cost, not results.
    """

    def __init__(self, exp: Experiment):
        self.exp = exp
        self.folds = kfold(exp.data.n_rows, exp.k, exp.fold_seed)
        self._nets: dict[frozenset, Network] = {}
        self._cv: dict[frozenset, CVResult] = {}

    def encoded(self, features) -> EncodedDataset:
        return self.exp.data.select(features)

    def structure(self, features) -> NetworkStructure:
        return NetworkStructure.for_inputs(self.encoded(features).n_columns, self.exp.hidden)

    def network(self, features) -> Network:
        key = frozenset(features)
        if key not in self._nets:
            self._nets[key] = fit_full(self.structure(key), self.encoded(key), self.exp.train, self.exp.k)
        return self._nets[key]

    def cv(self, features) -> CVResult:
        key = frozenset(features)
        if key not in self._cv:
            log.debug("cross-validating %s", sorted(key))
            self._cv[key] = cross_validate(self.structure(key), self.encoded(key), self.folds, self.exp.train,
                                           with_final=False, workers=self.exp.workers)
        return self._cv[key]


Remover = Callable[[frozenset, ModelBuilder, int], int]


def weak_neuron_remover(explain: list | None = None) -> Remover:
    def choose(features, builder, step):
        exp = builder.exp
        rounds = [] if explain is not None else None
        report = find_least_important_feature(builder.network(features), builder.encoded(features).column_map,
                                              exp.profile, exp.prune.c0, exp.prune.max_rounds, explain=rounds)
        if explain is not None:
            explain.append({"step": step, "features": sorted(features), "selected": report.selected_feature,
                            "rounds": rounds})
        return report.selected_feature
    return choose


def make_remover(strategy: str, seed: int = 0, explain: list | None = None) -> Remover:
    from bcmkit.baselines import remove_cost_based, remove_random

    if strategy == "weak_neuron":
        return weak_neuron_remover(explain)
    if strategy == "cost_based":
        return lambda features, builder, step: remove_cost_based(features, builder.exp.profile)
    if strategy == "random":
        return lambda features, builder, step: remove_random(features, seed, step)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


@dataclass(frozen=True, eq=False)
class BCM:
    structure: NetworkStructure
    features: frozenset[int]
    network: Network
    accuracy: float
    model_cost: int
    budget: int
    per_fold: tuple = ()

    def __post_init__(self):
        if self.model_cost > self.budget:
            raise BudgetError(f"model cost {self.model_cost} exceeds budget {self.budget}")
        if self.network.structure != self.structure:
            raise BudgetError("network structure does not match the BCM structure")

    @property
    def weights(self):
        return self.network.weights


class Trajectory:
    """A feature set shrinking one removal at a time under a fixed strategy."""

    def __init__(self, builder: ModelBuilder, remover: Remover):
        self.builder = builder
        self.remover = remover
        self.features = builder.exp.all_features
        self.removed: list[int] = []

    @property
    def cost(self) -> int:
        return model_cost(self.features, self.builder.exp.profile)

    def remove_one(self) -> int:
        if len(self.features) <= 1:
            raise BudgetInfeasible("cannot remove the last feature")
        fid = self.remover(self.features, self.builder, len(self.removed))
        if fid not in self.features:
            raise BudgetError(f"remover returned {fid}, which is not an active feature")
        self.features = self.features - {fid}
        self.removed.append(fid)
        log.info("removed feature %d, %d left, cost %d", fid, len(self.features), self.cost)
        return fid

    def reduce_to(self, budget: int) -> None:
        while self.cost > budget:
            if len(self.features) == 1:
                raise BudgetInfeasible(f"single remaining feature costs {self.cost} > budget {budget}")
            self.remove_one()

    def bcm(self, budget: int) -> BCM:
        cv = self.builder.cv(self.features)
        net = self.builder.network(self.features)
        return BCM(net.structure, self.features, net, cv.mean_accuracy, self.cost, budget, cv.per_fold)


def generate_bcm(exp: Experiment, budget: int, strategy: str = "weak_neuron", seed: int = 0,
                 builder: ModelBuilder | None = None, explain: list | None = None) -> BCM:
    """Remove features until the model cost fits ``budget``, then train the final model."""
    if budget < 0:
        raise BudgetError("budget must be nonnegative")
    traj = Trajectory(builder or ModelBuilder(exp), make_remover(strategy, seed, explain))
    traj.reduce_to(budget)
    return traj.bcm(budget)


@dataclass(frozen=True, eq=False)
class Schedule:
    entries: tuple[BCM, ...]
    b_max: int
    d: int
    p_min: float
    profile: CostProfile
    stop_reason: str = ""

    @property
    def budgets(self) -> list[int]:
        return [e.budget for e in self.entries]


def budget_grid(b_max: int, d: int) -> list[int]:
    if b_max <= 0 or d <= 0:
        raise BudgetError("b_max and d must be positive")
    return list(range(b_max, 0, -d))


def generate_schedule(exp: Experiment, b_max: int, d: int, p_min: float, strategy: str = "weak_neuron",
                      seed: int = 0, independent_levels: bool = False, explain: list | None = None) -> Schedule:
    """BCMs for budgets b_max, b_max - d, ... until one misses ``p_min``.

    By default all levels continue a single removal trajectory, so each
    entry's features are a subset of its predecessor's. With
    ``independent_levels`` every level restarts from the full feature set with
    its own seeds (train seed and random-removal seed shifted by
    ``LEVEL_SEED_STRIDE`` per level).
    """
    if not 0 <= p_min <= 1:
        raise BudgetError("p_min must lie in [0, 1]")
    entries: list[BCM] = []
    reason = "budget grid exhausted"
    traj = None if independent_levels else Trajectory(ModelBuilder(exp), make_remover(strategy, seed, explain))
    for level, b in enumerate(budget_grid(b_max, d)):
        try:
            if independent_levels:
                shift = level * LEVEL_SEED_STRIDE
                bcm = generate_bcm(exp.with_seed(exp.train.seed + shift), b, strategy, seed + shift, explain=explain)
            else:
                traj.reduce_to(b)
                bcm = traj.bcm(b)
        except BudgetInfeasible as exc:
            reason = f"budget {b} infeasible: {exc}"
            break
        log.info("budget %d: cost %d, accuracy %.4f, features %s", b, bcm.model_cost, bcm.accuracy,
                 sorted(bcm.features))
        if bcm.accuracy < p_min:
            reason = f"accuracy {bcm.accuracy:.4f} < p_min at budget {b}"
            break
        entries.append(bcm)
    return Schedule(tuple(entries), b_max, d, p_min, exp.profile, reason)


@dataclass(frozen=True)
class AblationPoint:
    n_removed: int
    accuracy: float
    cost: int
    remaining: tuple[int, ...]
    removed: int | None = None


def ablation_curve(exp: Experiment, strategy: str = "weak_neuron", seed: int = 0,
                   explain: list | None = None) -> list[AblationPoint]:
    """Accuracy after 0, 1, ..., m-1 single-feature removals."""
    traj = Trajectory(ModelBuilder(exp), make_remover(strategy, seed, explain))
    points = []
    removed = None
    while True:
        cv = traj.builder.cv(traj.features)
        points.append(AblationPoint(len(traj.removed), cv.mean_accuracy, traj.cost, tuple(sorted(traj.features)),
                                    removed))
        if len(traj.features) == 1:
            return points
        removed = traj.remove_one()
