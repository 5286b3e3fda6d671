"""Dataset ingestion, one-hot encoding, k-fold partitions and feature costs.

Features are addressed by *logical* id (the id a human assigns to a
measurement, e.g. "Itching"), never by encoded column. A categorical feature
expands into one input column per category; costs and removals always work on
the logical feature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

CATEGORICAL = "categorical"
INTEGER = "integer"
MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "NaN", "nan", "null"})


class DataError(ValueError):
    """Raised for malformed schemas, CSV files, or cost profiles."""


@dataclass(frozen=True)
class Feature:
    id: int
    name: str
    kind: str
    categories: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return len(self.categories) if self.kind == CATEGORICAL else 1


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature declarations plus the binary label definition.

    ``positive_labels`` and ``negative_labels`` hold the raw label strings that
    map to class 1 and class 0. Most datasets use one string each, but a coded
    target such as ``num`` in {0..4} can list several positives.
    ``csv_columns``, when set, names the columns of a CSV file that has no
    header row.
    """

    features: tuple[Feature, ...]
    label_name: str
    positive_labels: tuple[str, ...]
    negative_labels: tuple[str, ...]
    zero_cost: tuple[str, ...] = ()
    csv_columns: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [f.id for f in self.features]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise DataError(f"feature ids must be unique and contiguous from 1, got {ids}")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        for f in self.features:
            if f.kind == CATEGORICAL:
                if len(f.categories) < 2 or len(set(f.categories)) != len(f.categories):
                    raise DataError(f"categorical feature {f.name!r} needs >= 2 distinct categories")
            elif f.kind == INTEGER:
                if f.categories:
                    raise DataError(f"integer feature {f.name!r} must not list categories")
            else:
                raise DataError(f"feature {f.name!r} has unknown kind {f.kind!r}")
        if not self.positive_labels or not self.negative_labels:
            raise DataError("label needs at least one positive and one negative value")
        if set(self.positive_labels) & set(self.negative_labels):
            raise DataError("a label value cannot be both positive and negative")
        unknown = set(self.zero_cost) - set(names)
        if unknown:
            raise DataError(f"zero_cost names unknown features: {sorted(unknown)}")

    @property
    def ids(self) -> list[int]:
        return [f.id for f in self.features]

    def feature(self, fid: int) -> Feature:
        try:
            return self.features[fid - 1]
        except IndexError:
            raise DataError(f"unknown feature id {fid}") from None

    def id_of(self, name: str) -> int:
        for f in self.features:
            if f.name == name:
                return f.id
        raise DataError(f"unknown feature name {name!r}")

    @property
    def zero_cost_ids(self) -> frozenset[int]:
        return frozenset(self.id_of(n) for n in self.zero_cost)

    def names_of(self, fids: Iterable[int]) -> list[str]:
        return [self.feature(i).name for i in sorted(fids)]


def _as_text_list(values, what: str) -> tuple[str, ...]:
    if isinstance(values, str):
        values = [values]
    out = []
    for v in values:
        # PyYAML turns bare Yes/No into booleans; refuse rather than guess.
        if not isinstance(v, (str, int, float)) or isinstance(v, bool):
            raise DataError(f"{what}: value {v!r} must be a quoted string")
        out.append(str(v))
    return tuple(out)


def schema_from_dict(doc: Mapping) -> FeatureSchema:
    try:
        label = doc["label"]
        features = tuple(
            Feature(
                id=int(f["id"]),
                name=str(f["name"]),
                kind=str(f["kind"]),
                categories=_as_text_list(f.get("categories", ()), f"feature {f['name']!r}"),
            )
            for f in doc["features"]
        )
        return FeatureSchema(
            features=tuple(sorted(features, key=lambda f: f.id)),
            label_name=str(label["name"]),
            positive_labels=_as_text_list(label["positive"], "label.positive"),
            negative_labels=_as_text_list(label["negative"], "label.negative"),
            zero_cost=tuple(str(n) for n in doc.get("zero_cost", ()) or ()),
            csv_columns=tuple(str(n) for n in doc.get("csv_columns", ()) or ()),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed schema: {exc}") from exc


def load_schema(path) -> FeatureSchema:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"schema file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return schema_from_dict(yaml.safe_load(fh))


@dataclass(frozen=True)
class RawDataset:
    """Typed records: categorical cells stay text, integer cells become floats."""

    columns: dict[int, list]
    labels: np.ndarray
    n_dropped: int = 0

    @property
    def n_rows(self) -> int:
        return len(self.labels)


def load_csv(path, schema: FeatureSchema, min_rows: int = 2) -> RawDataset:
    """Read the schema's fields from a CSV file.

    Extra columns are ignored. Rows with a missing or unparseable cell in any
    schema field are dropped and counted. ``min_rows`` is usually ``2 * k``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        if schema.csv_columns:
            header = list(schema.csv_columns)
        else:
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path} is empty") from None
        if schema.label_name not in header:
            raise DataError(f"label column {schema.label_name!r} absent from {path}")
        missing = [f.name for f in schema.features if f.name not in header]
        if missing:
            raise DataError(f"header of {path} lacks schema features {missing}")
        pos = {f.id: header.index(f.name) for f in schema.features}
        label_pos = header.index(schema.label_name)

        columns: dict[int, list] = {f.id: [] for f in schema.features}
        labels = []
        dropped = 0
        for row in reader:
            if not row:
                continue
            parsed = _parse_row(row, schema, pos, label_pos)
            if parsed is None:
                dropped += 1
                continue
            cells, y = parsed
            for fid, v in cells.items():
                columns[fid].append(v)
            labels.append(y)

    if len(labels) < min_rows:
        raise DataError(f"{path}: only {len(labels)} usable rows, need at least {min_rows}")
    return RawDataset(columns=columns, labels=np.asarray(labels, dtype=np.int64), n_dropped=dropped)


def _parse_row(row, schema, pos, label_pos):
    if label_pos >= len(row):
        return None
    raw_label = row[label_pos].strip()
    if raw_label in schema.positive_labels:
        y = 1
    elif raw_label in schema.negative_labels:
        y = 0
    else:
        return None
    cells = {}
    for f in schema.features:
        i = pos[f.id]
        if i >= len(row):
            return None
        cell = row[i].strip()
        if cell in MISSING_TOKENS:
            return None
        if f.kind == INTEGER:
            try:
                v = float(cell)
            except ValueError:
                return None
            if not np.isfinite(v):
                return None
            cells[f.id] = v
        else:
            cells[f.id] = cell
    return cells, y


@dataclass(frozen=True)
class EncodedDataset:
    matrix: np.ndarray
    labels: np.ndarray
    column_map: tuple[int, ...]
    column_names: tuple[str, ...]

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.column_map):
            raise DataError("matrix width does not match column_map")
        if self.matrix.shape[0] != len(self.labels):
            raise DataError("row count does not match label count")

    @property
    def active_features(self) -> frozenset[int]:
        return frozenset(self.column_map)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    def columns_of(self, fid: int) -> list[int]:
        return [j for j, f in enumerate(self.column_map) if f == fid]

    def select(self, features: Iterable[int]) -> "EncodedDataset":
        """Keep only the columns of ``features`` (same as re-encoding with them active)."""
        keep = set(features)
        unknown = keep - self.active_features
        if unknown:
            raise DataError(f"features {sorted(unknown)} are not encoded in this dataset")
        cols = [j for j, f in enumerate(self.column_map) if f in keep]
        return EncodedDataset(
            matrix=self.matrix[:, cols],
            labels=self.labels,
            column_map=tuple(self.column_map[j] for j in cols),
            column_names=tuple(self.column_names[j] for j in cols),
        )

    def rows(self, index) -> "EncodedDataset":
        return EncodedDataset(self.matrix[index], self.labels[index], self.column_map, self.column_names)


def encode(raw: RawDataset, schema: FeatureSchema, active: Iterable[int] | None = None) -> EncodedDataset:
    """One-hot encode categorical features and min-max scale integer ones.

    Columns follow schema order. A constant integer column scales to all zeros.
    """
    active = set(schema.ids if active is None else active)
    unknown = active - set(schema.ids)
    if unknown:
        raise DataError(f"active features {sorted(unknown)} are not in the schema")

    blocks, cmap, names = [], [], []
    n = raw.n_rows
    for f in schema.features:
        if f.id not in active:
            continue
        values = raw.columns[f.id]
        if f.kind == CATEGORICAL:
            index = {c: j for j, c in enumerate(f.categories)}
            block = np.zeros((n, len(f.categories)))
            for r, v in enumerate(values):
                try:
                    block[r, index[v]] = 1.0
                except KeyError:
                    raise DataError(
                        f"feature {f.name!r}: value {v!r} not among declared categories {list(f.categories)}"
                    ) from None
            blocks.append(block)
            names.extend(f"{f.name}_{c}" for c in f.categories)
        else:
            col = np.asarray(values, dtype=float)
            lo, hi = (col.min(), col.max()) if n else (0.0, 0.0)
            scaled = (col - lo) / (hi - lo) if hi > lo else np.zeros(n)
            blocks.append(scaled[:, None])
            names.append(f.name)
        cmap.extend([f.id] * f.width)

    matrix = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return EncodedDataset(matrix=matrix, labels=raw.labels.copy(), column_map=tuple(cmap), column_names=tuple(names))


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: np.ndarray
    seed: int

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


def kfold(n_rows: int, k: int, seed: int) -> FoldAssignment:
    """Random partition into k folds whose sizes differ by at most one."""
    if k < 2:
        raise DataError("k must be at least 2")
    if k > n_rows:
        raise DataError(f"cannot split {n_rows} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n_rows)
    assignment = np.empty(n_rows, dtype=np.int64)
    assignment[perm] = np.arange(n_rows) % k
    return FoldAssignment(k=k, assignment=assignment, seed=seed)


@dataclass(frozen=True)
class CostProfile:
    costs: Mapping[int, int]
    seed: int | None = None
    range_lo: int | None = None
    range_hi: int | None = None
    zero_cost_ids: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        for fid, c in self.costs.items():
            if int(c) != c or c < 0:
                raise DataError(f"cost of feature {fid} must be a nonnegative integer, got {c!r}")

    def __getitem__(self, fid: int) -> int:
        try:
            return self.costs[fid]
        except KeyError:
            raise DataError(f"no cost for feature id {fid}") from None

    @property
    def total(self) -> int:
        return sum(self.costs.values())


def sample_costs(schema: FeatureSchema, lo: int, hi: int, zero_cost_ids: Iterable[int] = (), seed: int = 0) -> CostProfile:
    """Independent uniform integer costs on [lo, hi]; exempt features cost 0."""
    if not 0 <= lo <= hi:
        raise DataError(f"need 0 <= lo <= hi, got lo={lo} hi={hi}")
    zero = frozenset(zero_cost_ids)
    unknown = zero - set(schema.ids)
    if unknown:
        raise DataError(f"zero-cost ids {sorted(unknown)} are not in the schema")
    draws = np.random.default_rng(seed).integers(lo, hi, size=len(schema.features), endpoint=True)
    costs = {f.id: (0 if f.id in zero else int(d)) for f, d in zip(schema.features, draws)}
    return CostProfile(costs=costs, seed=seed, range_lo=lo, range_hi=hi, zero_cost_ids=zero)


def first_seed_within(schema: FeatureSchema, lo: int, hi: int, zero_cost_ids: Iterable[int], max_total: int,
                      start: int = 0, limit: int = 1_000_000) -> int:
    """Smallest seed >= start whose sampled profile costs at most ``max_total`` in total.

    Experiments that fix a maximum budget above the full model's cost need a
    draw satisfying that premise.
    """
    zero = list(zero_cost_ids)
    for seed in range(start, start + limit):
        if sample_costs(schema, lo, hi, zero, seed).total <= max_total:
            return seed
    raise DataError(f"no seed in [{start}, {start + limit}) gives total cost <= {max_total}")


def model_cost(features: Iterable[int], profile: CostProfile) -> int:
    """Sum of feature costs; each logical feature counts once."""
    return sum(profile[f] for f in set(features))


def save_costs(profile: CostProfile, schema: FeatureSchema, path) -> None:
    from bcmkit.reports import atomic_write_csv

    rows = [(f.name, profile[f.id]) for f in schema.features]
    atomic_write_csv(path, ["feature_name", "cost"], rows)


def load_costs(path, schema: FeatureSchema) -> CostProfile:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"cost file not found: {path}")
    costs = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            try:
                fid = schema.id_of(rec["feature_name"])
                cost = int(rec["cost"])
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}: bad cost row {rec}") from exc
            if fid in costs:
                raise DataError(f"{path}: duplicate cost for {rec['feature_name']!r}")
            costs[fid] = cost
    missing = set(schema.ids) - set(costs)
    if missing:
        raise DataError(f"{path}: no cost for features {schema.names_of(missing)}")
    return CostProfile(costs=costs, zero_cost_ids=frozenset(f for f, c in costs.items() if c == 0))


def check_profile(profile: CostProfile, schema: FeatureSchema) -> None:
    if set(profile.costs) != set(schema.ids):
        raise DataError("cost profile does not cover exactly the schema's features")


def make_schema(specs: Sequence[tuple[str, Sequence[str] | None]], label_name="label",
                positive="1", negative="0", zero_cost=()) -> FeatureSchema:
    """Build a schema from (name, categories-or-None) pairs; ids follow order."""
    feats = tuple(
        Feature(id=i, name=name, kind=CATEGORICAL if cats else INTEGER, categories=tuple(cats or ()))
        for i, (name, cats) in enumerate(specs, start=1)
    )
    return FeatureSchema(features=feats, label_name=label_name, positive_labels=(positive,),
                         negative_labels=(negative,), zero_cost=tuple(zero_cost))
