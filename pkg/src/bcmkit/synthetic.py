"""Seeded binary-classification data with a planted rule over named features.

Used by tests and the CLI's ``--synthetic`` mode; nothing here is needed for
real CSV datasets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from bcmkit.data import CATEGORICAL, FeatureSchema, RawDataset, make_schema


@dataclass(frozen=True)
class PlantedData:
    raw: RawDataset
    schema: FeatureSchema
    informative_ids: tuple[int, ...]
    noise_ids: tuple[int, ...]
    coefficients: dict[int, float]


def make_planted(n_rows: int = 300, n_features: int = 10, n_noise: int = 2, *, rule: str = "linear",
                 kinds: str = "mixed", coef_range=(2.0, 0.5), noise_ids=None, label_noise: float = 0.0, zero_cost=(),
                 seed: int = 0) -> PlantedData:
    """Draw a dataset whose label depends only on the informative features.

    With ``kinds="mixed"`` odd feature ids are Yes/No categorical and even ids
    are integers in [20, 80]; ``"integer"`` and ``"categorical"`` make every
    feature that kind.
    Informative coefficients run linearly over ``coef_range`` in id order (by
    default from 2.0 down to 0.5, so lower ids matter more). ``rule="quadratic"`` adds an interaction between the
    two strongest features. ``label_noise`` flips that fraction of labels.
    """
    if kinds not in ("mixed", "integer", "categorical"):
        raise ValueError(f"unknown kinds {kinds!r}")
    if rule not in ("linear", "quadratic"):
        raise ValueError(f"unknown rule {rule!r}")
    if not 0 <= n_noise < n_features:
        raise ValueError("need at least one informative feature")
    rng = np.random.default_rng(seed)
    noise = tuple(sorted(noise_ids)) if noise_ids is not None else tuple(range(n_features - n_noise + 1, n_features + 1))
    if len(noise) != n_noise:
        raise ValueError("noise_ids must have n_noise entries")
    informative = tuple(i for i in range(1, n_features + 1) if i not in noise)

    specs, signals, columns = [], {}, {}
    for fid in range(1, n_features + 1):
        name = f"x{fid:02d}"
        if kinds == "categorical" or (kinds == "mixed" and fid % 2):
            specs.append((name, ("Yes", "No")))
            yes = rng.random(n_rows) < 0.5
            columns[fid] = ["Yes" if v else "No" for v in yes]
            signals[fid] = np.where(yes, 1.0, -1.0)
        else:
            specs.append((name, None))
            v = rng.integers(20, 80, size=n_rows, endpoint=True)
            columns[fid] = [float(x) for x in v]
            signals[fid] = (v - 50.0) / 17.5

    coef = dict(zip(informative, np.linspace(coef_range[0], coef_range[1], len(informative)).tolist()))
    score = sum(coef[i] * signals[i] for i in informative)
    if rule == "quadratic" and len(informative) >= 2:
        a, b = informative[:2]
        score = score + 1.5 * signals[a] * signals[b]
    labels = (score > np.median(score)).astype(np.int64)
    if not labels.any():
        # a score with few distinct values can have its median at the maximum
        labels = (score >= np.median(score)).astype(np.int64)
    if label_noise > 0:
        flip = rng.random(n_rows) < label_noise
        labels = np.where(flip, 1 - labels, labels)

    names = [s[0] for s in specs]
    schema = make_schema(specs, zero_cost=tuple(names[i - 1] for i in zero_cost))
    raw = RawDataset(columns=columns, labels=labels)
    return PlantedData(raw=raw, schema=schema, informative_ids=informative, noise_ids=noise, coefficients=coef)


def write_csv(planted: PlantedData, path) -> None:
    """Write the dataset in the CSV layout ``load_csv`` reads."""
    schema = planted.schema
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.name for f in schema.features] + [schema.label_name])
        for r in range(planted.raw.n_rows):
            row = []
            for f in schema.features:
                v = planted.raw.columns[f.id][r]
                row.append(v if f.kind == CATEGORICAL else str(int(v)))
            row.append(schema.positive_labels[0] if planted.raw.labels[r] else schema.negative_labels[0])
            w.writerow(row)


def schema_document(schema: FeatureSchema) -> dict:
    """The YAML-ready mapping ``load_schema`` accepts for ``schema``."""
    return {
        "label": {"name": schema.label_name, "positive": list(schema.positive_labels),
                  "negative": list(schema.negative_labels)},
        "zero_cost": list(schema.zero_cost),
        **({"csv_columns": list(schema.csv_columns)} if schema.csv_columns else {}),
        "features": [
            {"id": f.id, "name": f.name, "kind": f.kind, **({"categories": list(f.categories)} if f.categories else {})}
            for f in schema.features
        ],
    }
