"""Weak-link / weak-neuron analysis and least-important-feature selection.

Every non-input neuron ``n`` carries a threshold ``t_n``. A link into ``n`` is
weak when its absolute weight is below ``t_n`` or when ``n`` itself is weak; a
neuron is weak when all of its outgoing links are weak. Weakness only flows
backward, so one sweep from the last hidden layer down to the inputs reaches
the fixed point of both rules. When no input feature comes out weak, every
threshold doubles and the sweep repeats.

Layers are indexed from 0 (inputs) to L-1 (output) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bcmkit.data import CostProfile
from bcmkit.net import Network

DEFAULT_C0 = 0.05
DEFAULT_MAX_ROUNDS = 200
DELTA_FLOOR = 64 * np.finfo(float).eps


class PruneError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ThresholdMap:
    """Per-neuron thresholds for layers 1..L-1; ``base[i]`` belongs to layer ``i + 1``."""

    base: tuple[np.ndarray, ...]
    escalation_round: int = 0
    floored: tuple[tuple[int, int], ...] = ()

    @property
    def t(self) -> tuple[np.ndarray, ...]:
        scale = 2.0 ** self.escalation_round
        return tuple(b * scale for b in self.base)

    def escalate(self) -> "ThresholdMap":
        return ThresholdMap(self.base, self.escalation_round + 1, self.floored)

    def raised(self, factor) -> "ThresholdMap":
        return ThresholdMap(tuple(b * factor for b in self.base), self.escalation_round, self.floored)

    def threshold(self, layer: int, neuron: int) -> float:
        if layer < 1:
            raise KeyError("input neurons have no threshold")
        return float(self.t[layer - 1][neuron])


@dataclass(frozen=True, eq=False)
class WeakMarking:
    """``links[i]`` flags links from layer i to i+1; ``neurons[i]`` flags layer i."""

    links: tuple[np.ndarray, ...]
    neurons: tuple[np.ndarray, ...]
    rounds_used: int = 0

    @property
    def weak_links(self) -> set[tuple[tuple[int, int], tuple[int, int]]]:
        return {((i, int(a)), (i + 1, int(b))) for i, m in enumerate(self.links) for a, b in zip(*np.nonzero(m))}

    @property
    def weak_neurons(self) -> set[tuple[int, int]]:
        return {(i, int(a)) for i, m in enumerate(self.neurons) for a in np.flatnonzero(m)}

    @property
    def weak_inputs(self) -> np.ndarray:
        return self.neurons[0]


@dataclass(frozen=True, eq=False)
class FeatureImportanceReport:
    weak_input_neurons: frozenset[int]
    weak_features: frozenset[int]
    selected_feature: int
    thresholds_final: ThresholdMap
    marking: WeakMarking

    @property
    def rounds_used(self) -> int:
        return self.thresholds_final.escalation_round


def init_thresholds(net: Network, c0: float = DEFAULT_C0) -> ThresholdMap:
    """``delta_n = c0 * mean |w|`` over the links entering ``n``.

    Biases are ignored. A neuron whose incoming weights are all zero gets the
    floor ``DELTA_FLOOR`` and is listed in ``floored``.
    """
    if not 0 < c0 < 1:
        raise ValueError("c0 must lie in (0, 1)")
    base, floored = [], []
    for i, w in enumerate(net.weights):
        delta = c0 * np.abs(w).mean(axis=0)
        low = delta < DELTA_FLOOR
        floored.extend((i + 1, int(n)) for n in np.flatnonzero(low))
        base.append(np.where(low, DELTA_FLOOR, delta))
    return ThresholdMap(tuple(base), 0, tuple(floored))


def mark_weak(net: Network, thresholds: ThresholdMap) -> WeakMarking:
    """One backward sweep applying both marking rules."""
    t = thresholds.t
    sizes = net.structure.layer_sizes
    if len(t) != len(net.weights) or any(len(ti) != n for ti, n in zip(t, sizes[1:])):
        raise ValueError("thresholds do not cover every non-input neuron")
    n_layers = len(sizes)
    neurons = [None] * n_layers
    links = [None] * (n_layers - 1)
    neurons[-1] = np.zeros(sizes[-1], dtype=bool)
    for i in range(n_layers - 2, -1, -1):
        links[i] = (np.abs(net.weights[i]) < t[i][None, :]) | neurons[i + 1][None, :]
        neurons[i] = links[i].all(axis=1)
    return WeakMarking(tuple(links), tuple(neurons), thresholds.escalation_round)


def weak_features_of(marking: WeakMarking, column_map) -> frozenset[int]:
    """Logical features whose every input column is weak."""
    groups: dict[int, bool] = {}
    for col, fid in enumerate(column_map):
        groups[fid] = groups.get(fid, True) and bool(marking.weak_inputs[col])
    return frozenset(f for f, weak in groups.items() if weak)


def round_bound(net: Network, thresholds: ThresholdMap) -> int:
    """Escalation rounds after which every link is guaranteed weak."""
    max_w = max(float(np.abs(w).max()) for w in net.weights)
    min_delta = min(float(b.min()) for b in thresholds.base)
    if max_w <= min_delta:
        return 1
    return int(np.ceil(np.log2(max_w / min_delta))) + 1


def explain_round(marking: WeakMarking, thresholds: ThresholdMap, column_map) -> dict:
    """Plain-data summary of one marking round (for ``--explain`` dumps)."""
    first = marking.links[0]
    return {
        "round": thresholds.escalation_round,
        "thresholds": [t.tolist() for t in thresholds.t],
        "weak_neurons": [np.flatnonzero(m).tolist() for m in marking.neurons],
        "weak_link_counts": [int(m.sum()) for m in marking.links],
        "link_counts": [int(m.size) for m in marking.links],
        "weak_input_links": [[int(a), int(b)] for a, b in zip(*np.nonzero(first))],
        "weak_features": sorted(weak_features_of(marking, column_map)),
    }


def find_least_important_feature(net: Network, column_map, profile: CostProfile, c0: float = DEFAULT_C0,
                                 max_rounds: int = DEFAULT_MAX_ROUNDS, explain: list | None = None
                                 ) -> FeatureImportanceReport:
    """Escalate thresholds until some logical feature is weak; pick the costliest.

    ``column_map`` gives the logical feature of each input column (an
    ``EncodedDataset.column_map``). Cost ties go to the lowest feature id.
    Per-round summaries are appended to ``explain`` when it is a list.
    """
    column_map = tuple(column_map)
    if len(column_map) != net.structure.n_inputs:
        raise ValueError("column_map length differs from the network's input width")
    if not column_map:
        raise ValueError("network has no active feature")
    thresholds = init_thresholds(net, c0)
    for _ in range(max_rounds + 1):
        marking = mark_weak(net, thresholds)
        weak = weak_features_of(marking, column_map)
        if explain is not None:
            explain.append(explain_round(marking, thresholds, column_map))
        if weak:
            selected = min(weak, key=lambda f: (-profile[f], f))
            return FeatureImportanceReport(
                weak_input_neurons=frozenset(int(j) for j in np.flatnonzero(marking.weak_inputs)),
                weak_features=weak,
                selected_feature=selected,
                thresholds_final=thresholds,
                marking=marking,
            )
        thresholds = thresholds.escalate()
    raise PruneError(f"no weak input feature after {max_rounds} escalation rounds")
