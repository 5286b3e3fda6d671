"""``bcm`` command line: schedule, compare, ablate and gradcheck.

Every command reads one YAML config; command-line flags override it. All
results are computed before anything is written, and each file is written
atomically, so a failing run leaves no partial outputs behind.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from bcmkit.baselines import run_comparison
from bcmkit.budget import (STRATEGIES, BudgetError, Experiment, PruneConfig, ablation_curve, budget_grid,
                           generate_schedule)
from bcmkit.data import DataError, first_seed_within, load_costs, load_csv, load_schema, sample_costs
from bcmkit.net import NetworkStructure, ShapeError, TrainConfig, TrainingError, gradient_check, init_network
from bcmkit.prune import PruneError
from bcmkit.reports import (SCHEDULE_HEADER, ablation_text, comparison_texts, csv_text, format_schedule, json_text,
                            schedule_document, schedule_rows, write_files)

log = logging.getLogger("bcmkit")

GRADCHECK_TOLERANCE = 1e-4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """One experiment bundle. Relative paths resolve against the config file."""

    csv: Path | None = None
    schema: Path | None = None
    synthetic: dict | None = None
    cost_file: Path | None = None
    cost_lo: int = 100
    cost_hi: int = 300
    cost_seed: int | str = 0
    zero_cost: list | None = None
    hidden: tuple[int, ...] = (120, 120, 120, 120, 120)
    train: TrainConfig = TrainConfig()
    k: int = 10
    fold_seed: int = 0
    c0: float = 0.05
    max_rounds: int = 200
    b_max: int = 1900
    d: int = 200
    p_min: float = 0.65
    n_trials: int = 10
    budgets: list | None = None
    base_seed: int | None = None
    strategies: list = field(default_factory=lambda: list(STRATEGIES))
    out: Path = Path("out")
    threads: int = 1
    independent_levels: bool = False
    explain: bool = False


_SECTIONS = {
    "data": {"csv", "schema", "synthetic"},
    "costs": {"file", "lo", "hi", "seed", "zero_cost"},
    "network": {"hidden"},
    "training": {"epochs", "batch_size", "learning_rate", "optimizer", "momentum", "seed"},
    "evaluation": {"k", "fold_seed"},
    "prune": {"c0", "max_rounds"},
    "schedule": {"b_max", "d", "p_min", "independent_levels"},
    "comparison": {"trials", "budgets", "base_seed", "strategies"},
    "output": {"dir", "explain"},
    "threads": None,
}


def _check_keys(doc: dict) -> None:
    for key, value in doc.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown config section {key!r}")
        allowed = _SECTIONS[key]
        if allowed is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be a mapping")
            extra = set(value) - allowed
            if extra:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(extra)}")


def config_from_dict(doc: dict, base_dir: Path = Path(".")) -> RunConfig:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(doc)

    def path(value):
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    data, costs = doc.get("data", {}), doc.get("costs", {})
    training, ev, pr = doc.get("training", {}), doc.get("evaluation", {}), doc.get("prune", {})
    sched, comp, out = doc.get("schedule", {}), doc.get("comparison", {}), doc.get("output", {})
    try:
        cfg = RunConfig(
            csv=path(data.get("csv")),
            schema=path(data.get("schema")),
            synthetic=data.get("synthetic"),
            cost_file=path(costs.get("file")),
            cost_lo=int(costs.get("lo", 100)),
            cost_hi=int(costs.get("hi", 300)),
            cost_seed=costs.get("seed", 0),
            zero_cost=costs.get("zero_cost"),
            hidden=tuple(int(h) for h in doc.get("network", {}).get("hidden", RunConfig.hidden)),
            train=TrainConfig(**training),
            k=int(ev.get("k", 10)),
            fold_seed=int(ev.get("fold_seed", 0)),
            c0=float(pr.get("c0", 0.05)),
            max_rounds=int(pr.get("max_rounds", 200)),
            b_max=int(sched.get("b_max", 1900)),
            d=int(sched.get("d", 200)),
            p_min=float(sched.get("p_min", 0.65)),
            independent_levels=bool(sched.get("independent_levels", False)),
            n_trials=int(comp.get("trials", 10)),
            budgets=comp.get("budgets"),
            base_seed=comp.get("base_seed"),
            strategies=list(comp.get("strategies", STRATEGIES)),
            out=path(out.get("dir", "out")),
            explain=bool(out.get("explain", False)),
            threads=int(doc.get("threads", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    if cfg.cost_seed != "auto" and not isinstance(cfg.cost_seed, int):
        raise ConfigError("costs.seed must be an integer or 'auto'")
    unknown = set(cfg.strategies) - set(STRATEGIES)
    if unknown:
        raise ConfigError(f"unknown strategies {sorted(unknown)}")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc, path.parent)


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    """Flags win over the config file."""
    from dataclasses import replace

    if args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed), base_seed=args.seed)
    for flag, attr in (("b_max", "b_max"), ("d", "d"), ("p_min", "p_min"), ("k", "k"), ("trials", "n_trials"),
                       ("threads", "threads")):
        value = getattr(args, flag, None)
        if value is not None:
            cfg = replace(cfg, **{attr: value})
    if args.out is not None:
        cfg = replace(cfg, out=Path(args.out))
    if args.explain:
        cfg = replace(cfg, explain=True)
    if args.independent_levels:
        cfg = replace(cfg, independent_levels=True)
    if getattr(args, "strategy", None):
        cfg = replace(cfg, strategies=list(args.strategy))
    if cfg.threads < 1:
        raise ConfigError("threads must be at least 1")
    return cfg


def _load_data(cfg: RunConfig):
    if cfg.synthetic is not None:
        from bcmkit.synthetic import make_planted

        try:
            planted = make_planted(**cfg.synthetic)
        except TypeError as exc:
            raise ConfigError(f"bad data.synthetic: {exc}") from exc
        return planted.raw, planted.schema
    if cfg.schema is None or cfg.csv is None:
        raise ConfigError("config needs data.csv and data.schema, or data.synthetic")
    schema = load_schema(cfg.schema)
    raw = load_csv(cfg.csv, schema)
    if raw.n_dropped:
        log.warning("dropped %d rows with missing or unparseable values", raw.n_dropped)
    return raw, schema


def _cost_profile(cfg: RunConfig, schema):
    if cfg.cost_file is not None:
        return load_costs(cfg.cost_file, schema)
    names = schema.zero_cost if cfg.zero_cost is None else cfg.zero_cost
    zero = [schema.id_of(n) for n in names]
    seed = cfg.cost_seed
    if seed == "auto":
        # smallest seed whose full model fits the top budget
        seed = first_seed_within(schema, cfg.cost_lo, cfg.cost_hi, zero, cfg.b_max)
        log.info("cost seed %d is the first with total cost <= %d", seed, cfg.b_max)
    return sample_costs(schema, cfg.cost_lo, cfg.cost_hi, zero, seed)


def build_experiment(cfg: RunConfig) -> Experiment:
    raw, schema = _load_data(cfg)
    profile = _cost_profile(cfg, schema)
    return Experiment.from_raw(raw, schema, profile, cfg.hidden, train=cfg.train, k=cfg.k, fold_seed=cfg.fold_seed,
                               prune=PruneConfig(cfg.c0, cfg.max_rounds), workers=cfg.threads)


def _costs_text(exp: Experiment) -> str:
    return csv_text(["feature_name", "cost"], [(f.name, exp.profile[f.id]) for f in exp.schema.features])


def _removal_seed(cfg: RunConfig) -> int:
    return cfg.train.seed if cfg.base_seed is None else cfg.base_seed


def cmd_schedule(cfg: RunConfig) -> int:
    exp = build_experiment(cfg)
    explain = [] if cfg.explain else None
    schedule = generate_schedule(exp, cfg.b_max, cfg.d, cfg.p_min, seed=_removal_seed(cfg),
                                 independent_levels=cfg.independent_levels, explain=explain)
    files = {
        "schedule.csv": csv_text(SCHEDULE_HEADER, schedule_rows(schedule, exp.schema)),
        "schedule_models.json": json_text(schedule_document(schedule, exp.schema)),
        "costs.csv": _costs_text(exp),
    }
    if explain is not None:
        files["explain_schedule.json"] = json_text(explain)
    write_files(cfg.out, files)
    print(format_schedule(schedule, exp.schema))
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    exp = build_experiment(cfg)
    levels = cfg.budgets if cfg.budgets is not None else budget_grid(cfg.b_max, cfg.d)
    report = run_comparison(exp, levels, cfg.n_trials, cfg.strategies, cfg.base_seed)
    write_files(cfg.out, {**comparison_texts(report), "costs.csv": _costs_text(exp)})
    print(f"{'Budget':>8}" + "".join(f"{s:>13}" for s in report.strategies))
    for b in report.budget_levels:
        print(f"{b:>8}" + "".join(f"{report.cell(s, b).best_accuracy:>13.4f}" for s in report.strategies))
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    exp = build_experiment(cfg)
    files = {}
    seed = _removal_seed(cfg)
    for strategy in cfg.strategies:
        explain = [] if cfg.explain and strategy == "weak_neuron" else None
        curve = ablation_curve(exp, strategy, seed, explain)
        files[f"ablation_{strategy}.csv"] = ablation_text(curve, strategy)
        if explain is not None:
            files[f"explain_{strategy}.json"] = json_text(explain)
        print(f"{strategy}: " + " ".join(f"{p.accuracy:.4f}" for p in curve))
    files["costs.csv"] = _costs_text(exp)
    write_files(cfg.out, files)
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    """Gradient check on the configured topology with random inputs."""
    seed = cfg.train.seed
    rng = np.random.default_rng(seed)
    if cfg.schema is not None:
        schema = load_schema(cfg.schema)
    elif cfg.synthetic is not None:
        schema = _load_data(cfg)[1]
    else:
        raise ConfigError("gradcheck needs data.schema or data.synthetic to size the input layer")
    n_inputs = sum(f.width for f in schema.features)
    structure = NetworkStructure.for_inputs(n_inputs, cfg.hidden)
    net = init_network(structure, seed)
    worst = 0.0
    for i in range(5):
        x = rng.random(n_inputs)
        worst = max(worst, gradient_check(net, (x, int(rng.integers(2))), seed=seed + i))
    ok = worst < GRADCHECK_TOLERANCE
    print(f"layers {list(structure.layer_sizes)}: max relative error {worst:.3e} "
          f"({'ok' if ok else 'FAILED'}, tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 1


COMMANDS = {"schedule": cmd_schedule, "compare": cmd_compare, "ablate": cmd_ablate, "gradcheck": cmd_gradcheck}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcm", description="Budget-constrained DNN models with weak-neuron pruning")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "schedule": "build a list of models for descending budget levels",
        "compare": "compare weak-neuron, cost-based and random removal",
        "ablate": "accuracy after removing one feature at a time",
        "gradcheck": "check analytic gradients against finite differences",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, help="training and removal seed")
        p.add_argument("--b-max", dest="b_max", type=int, help="maximum budget level")
        p.add_argument("--d", type=int, help="budget step between levels")
        p.add_argument("--p-min", dest="p_min", type=float, help="minimum acceptable accuracy")
        p.add_argument("--k", type=int, help="number of cross-validation folds")
        p.add_argument("--trials", type=int, help="trials per strategy for compare")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads for cross-validation")
        p.add_argument("--explain", action="store_true", help="dump per-round threshold and marking diagnostics")
        p.add_argument("--independent-levels", dest="independent_levels", action="store_true",
                       help="restart every budget level from the full feature set")
        p.add_argument("--strategy", action="append", choices=STRATEGIES,
                       help="strategy to run (repeatable; default all)")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DataError, BudgetError, PruneError, TrainingError, ShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
