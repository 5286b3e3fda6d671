"""Budget-constrained DNN classifiers built by weak-neuron feature removal."""

from bcmkit.budget import BCM, Experiment, Schedule, ablation_curve, generate_bcm, generate_schedule
from bcmkit.data import CostProfile, FeatureSchema, encode, load_csv, load_schema, sample_costs
from bcmkit.net import Network, NetworkStructure, TrainConfig, cross_validate, train
from bcmkit.prune import find_least_important_feature, mark_weak

__version__ = "0.1.0"

__all__ = [
    "BCM", "CostProfile", "Experiment", "FeatureSchema", "Network", "NetworkStructure", "Schedule", "TrainConfig",
    "ablation_curve", "cross_validate", "encode", "find_least_important_feature", "generate_bcm",
    "generate_schedule", "load_csv", "load_schema", "mark_weak", "sample_costs", "train",
]
