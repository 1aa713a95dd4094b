"""Selective classification metrics and threshold sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import baseline, gp
from .abstain import Decision, ThresholdPolicy, Verdict, decide_arrays
from .base import predict_labels
from .errors import DataError

SWEEP_COLUMNS = ("mean_threshold", "var_threshold", "coverage", "accuracy",
                 "precision", "recall", "selective_risk", "n_total",
                 "n_accepted")


@dataclass(frozen=True)
class SelectiveMetrics:
    """Metrics over the accepted points. ``None`` marks an undefined ratio."""

    coverage: float
    accuracy: float | None
    precision: float | None
    recall: float | None
    selective_risk: float | None
    n_total: int
    n_accepted: int


def _ratio(num, den):
    return None if den == 0 else num / den


def metrics_from_arrays(accepted, final_labels, labels) -> SelectiveMetrics:
    accepted = np.asarray(accepted, dtype=bool)
    final = np.asarray(final_labels)
    y = np.asarray(labels)
    n = y.shape[0]
    if n < 1:
        raise DataError("selective metrics need at least one point")
    if accepted.shape[0] != n or final.shape[0] != n:
        raise DataError("decisions and labels differ in length")
    a = int(accepted.sum())
    pred = final[accepted]
    truth = y[accepted]
    wrong = int(np.sum(pred != truth))
    tp = int(np.sum((pred == 1) & (truth == 1)))
    pred_pos = int(np.sum(pred == 1))
    actual_pos = int(np.sum(truth == 1))
    risk = _ratio(wrong, a)
    return SelectiveMetrics(
        coverage=a / n,
        accuracy=None if risk is None else (a - wrong) / a,
        precision=_ratio(tp, pred_pos),
        recall=_ratio(tp, actual_pos),
        selective_risk=risk,
        n_total=n,
        n_accepted=a,
    )


def selective_metrics(decisions, labels) -> SelectiveMetrics:
    """Coverage, accuracy, precision, recall and 0-1 selective risk.

    Precision and recall are for class 1 and, like accuracy and risk, are
    computed only over accepted decisions.
    """
    decisions = list(decisions)
    labels = np.asarray(labels)
    if len(decisions) != labels.shape[0]:
        raise DataError(f"{len(decisions)} decisions but {labels.shape[0]} labels")
    accepted = np.array([d.verdict is not Verdict.ABSTAIN for d in decisions],
                        dtype=bool)
    final = np.array([-1 if d.final_label is None else d.final_label
                      for d in decisions])
    return metrics_from_arrays(accepted, final, labels)


def posterior_arrays(error_model, X):
    """Logit mean and variance of either error model at the rows of ``X``.

    The logistic baseline has no posterior spread; its variance is 0.
    """
    if isinstance(error_model, gp.GPFit):
        return gp.predict_many(error_model, X)
    if isinstance(error_model, baseline.LogisticFit):
        mean = baseline.logit_many(error_model, X)
        return mean, np.zeros_like(mean)
    raise TypeError(f"unsupported error model {type(error_model).__name__}")


def decisions_for(base, error_model, X, policy: ThresholdPolicy,
                  transform=None) -> list[Decision]:
    """One decision per row of ``X``.

    ``transform``, if given, maps raw rows to the error model's input space
    (e.g. a fitted :class:`Standardizer`); the base model always sees raw rows.
    """
    preds = predict_labels(base, X)
    mean, var = posterior_arrays(error_model, X if transform is None else transform(X))
    verdicts, finals = decide_arrays(preds, mean, var, policy)
    return [Decision(Verdict(int(v)), None if v == Verdict.ABSTAIN else int(f),
                     int(p), gp.PosteriorSummary(float(m), float(s)))
            for v, f, p, m, s in zip(verdicts, finals, preds, mean, var)]


@dataclass(frozen=True)
class SweepRow:
    mean_threshold: float
    var_threshold: float
    metrics: SelectiveMetrics

    def as_dict(self):
        return {"mean_threshold": self.mean_threshold,
                "var_threshold": self.var_threshold, **asdict(self.metrics)}


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    flip: bool = True

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in self.rows:
            d = row.as_dict()
            w.writerow([_fmt(d[c]) for c in SWEEP_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"flip": self.flip,
                           "columns": list(SWEEP_COLUMNS),
                           "rows": [_jsonable(r.as_dict()) for r in self.rows]},
                          indent=2) + "\n"

    def write(self, csv_path, json_path=None) -> None:
        Path(csv_path).write_text(self.to_csv(), encoding="utf-8")
        if json_path is not None:
            Path(json_path).write_text(self.to_json(), encoding="utf-8")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(d):
    # JSON has no infinity; the disabled variance threshold is finite anyway
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in d.items()}


def sweep_arrays(base_pred, logit_mean, logit_var, labels, mean_grid, var_grid,
                 flip: bool = True) -> SweepResult:
    """Sweep over precomputed posterior summaries. Rows are mean-major."""
    mean_grid, var_grid = list(mean_grid), list(var_grid)
    if not mean_grid or not var_grid:
        raise DataError("threshold grids must be non-empty")
    rows = []
    for mt in mean_grid:
        for vt in var_grid:
            policy = ThresholdPolicy(float(mt), float(vt), flip=flip)
            verdicts, finals = decide_arrays(base_pred, logit_mean, logit_var, policy)
            m = metrics_from_arrays(verdicts != Verdict.ABSTAIN, finals, labels)
            rows.append(SweepRow(float(mt), float(vt), m))
    return SweepResult(tuple(rows), flip=flip)


def sweep(base, error_model, test, mean_grid, var_grid, flip: bool = True,
          transform=None) -> SweepResult:
    """Evaluate every (mean, variance) threshold pair on ``test``.

    The base predictions and posterior summaries are computed once; each grid
    cell only re-thresholds them.
    """
    X = test.features
    preds = predict_labels(base, X)
    mean, var = posterior_arrays(error_model, X if transform is None else transform(X))
    return sweep_arrays(preds, mean, var, test.labels, mean_grid, var_grid, flip)
