"""CSV and JSON artifacts. Every file is written to a temp name and renamed."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def atomic_write_csv(path, header, rows) -> None:
    atomic_write_text(path, csv_text(header, rows))


def _ids(fids) -> str:
    return ";".join(str(f) for f in sorted(fids))


def schedule_rows(schedule, schema):
    for i, e in enumerate(schedule.entries, start=1):
        yield (i, e.budget, repr(e.accuracy), e.model_cost, _ids(e.features), ";".join(schema.names_of(e.features)))


SCHEDULE_HEADER = ["model_index", "budget", "accuracy", "model_cost", "feature_ids", "feature_names"]


def schedule_document(schedule, schema) -> dict:
    from bcmkit.net import network_to_dict

    return {
        "b_max": schedule.b_max,
        "d": schedule.d,
        "p_min": schedule.p_min,
        "stop_reason": schedule.stop_reason,
        "costs": {schema.feature(f).name: c for f, c in sorted(schedule.profile.costs.items())},
        "models": [
            {
                "model_index": i,
                "budget": e.budget,
                "model_cost": e.model_cost,
                "accuracy": e.accuracy,
                "fold_accuracies": [r.accuracy for r in e.per_fold],
                "feature_ids": sorted(e.features),
                "feature_names": schema.names_of(e.features),
                "network": network_to_dict(e.network),
            }
            for i, e in enumerate(schedule.entries, start=1)
        ],
    }


def write_schedule(schedule, schema, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    csv_path, doc_path = out_dir / "schedule.csv", out_dir / "schedule_models.json"
    atomic_write_csv(csv_path, SCHEDULE_HEADER, schedule_rows(schedule, schema))
    atomic_write_text(doc_path, json_text(schedule_document(schedule, schema)))
    return csv_path, doc_path


def format_schedule(schedule, schema=None) -> str:
    """Plain-text table: model, budget, accuracy, cost, features."""
    lines = [f"{'Model':<7}{'Budget':>8}{'Accuracy':>10}{'Cost':>7}  Features"]
    for i, e in enumerate(schedule.entries, start=1):
        feats = "{" + ",".join(str(f) for f in sorted(e.features)) + "}"
        lines.append(f"{'M' + str(i):<7}{e.budget:>8}{e.accuracy:>10.4f}{e.model_cost:>7}  {feats}")
    if not schedule.entries:
        lines.append("(no model met the accuracy floor)")
    lines.append(f"stopped: {schedule.stop_reason}")
    return "\n".join(lines)


ABLATION_HEADER = ["strategy", "n_removed", "remaining_feature_ids", "model_cost", "accuracy"]


def ablation_text(curve, strategy: str) -> str:
    rows = [(strategy, p.n_removed, _ids(p.remaining), p.cost, repr(p.accuracy)) for p in curve]
    return csv_text(ABLATION_HEADER, rows)


def write_ablation(curve, strategy: str, path) -> None:
    atomic_write_text(path, ablation_text(curve, strategy))


def comparison_texts(report) -> dict[str, str]:
    """File name to CSV text for the per-trial and best-of-n tables."""
    rows = []
    for s in report.strategies:
        for b in report.budget_levels:
            for t in report.cell(s, b).trials:
                rows.append((s, b, t.trial, repr(t.accuracy), t.model_cost, _ids(t.features)))
    summary_rows = [(s, b, repr(report.cell(s, b).best_accuracy)) for s in report.strategies for b in report.budget_levels]
    return {
        "comparison_trials.csv": csv_text(["strategy", "budget", "trial", "accuracy", "model_cost", "feature_ids"], rows),
        "comparison_summary.csv": csv_text(["strategy", "budget", "best_accuracy"], summary_rows),
    }


def write_comparison(report, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    for name, text in comparison_texts(report).items():
        atomic_write_text(out_dir / name, text)
    return out_dir / "comparison_trials.csv", out_dir / "comparison_summary.csv"


def write_files(out_dir, files: dict[str, str]) -> None:
    """Write several finished texts; nothing is computed once writing starts."""
    out_dir = Path(out_dir)
    for name, text in files.items():
        atomic_write_text(out_dir / name, text)


def json_text(doc) -> str:
    return json.dumps(doc, indent=1) + "\n"


def write_json(path, doc) -> None:
    atomic_write_text(path, json_text(doc))
