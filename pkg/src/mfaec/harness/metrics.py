from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


def confusion_matrix(gold, pred, n_classes: int) -> np.ndarray:
    """Counts with rows indexed by gold class, columns by prediction."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def recalls_from_confusion(cm: np.ndarray) -> np.ndarray:
    """Per-class recall; NaN for classes absent from the gold labels."""
    support = cm.sum(axis=1)
    diag = np.diag(cm).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, diag / np.maximum(support, 1), np.nan)


def uar_from_confusion(cm: np.ndarray) -> float:
    """Unweighted average recall over classes present in the gold labels."""
    r = recalls_from_confusion(cm)
    return float(np.nanmean(r)) if np.any(~np.isnan(r)) else float("nan")


def argmax_lowest(probs: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximum, i.e. the lowest class index
    return np.argmax(probs, axis=-1)


@dataclass
class MetricsReport:
    uar: float
    recalls: list[float]
    confusion: np.ndarray
    loss_emo: float = float("nan")
    loss_d: float = float("nan")
    loss_e: float = float("nan")
    loss_total: float = float("nan")
    epoch: int = 0
    wall_s: float = 0.0

    @classmethod
    def from_predictions(cls, gold, pred, n_classes: int, **kw) -> "MetricsReport":
        cm = confusion_matrix(gold, pred, n_classes)
        return cls(uar_from_confusion(cm), recalls_from_confusion(cm).tolist(), cm, **kw)

    def row(self, run_id: str, mode: str, seed: int) -> dict[str, object]:
        out = {"run_id": run_id, "mode": mode, "seed": seed, "epoch": self.epoch, "uar": self.uar}
        for i, r in enumerate(self.recalls):
            out[f"recall_{i}"] = r
        out.update(loss_emo=self.loss_emo, loss_d=self.loss_d, loss_e=self.loss_e,
                   wall_s=self.wall_s)
        return out

    def same_as(self, other: "MetricsReport", ignore_time: bool = True) -> bool:
        a, b = self.row("", "", 0), other.row("", "", 0)
        if ignore_time:
            a.pop("wall_s"), b.pop("wall_s")
        return _rows_equal(a, b) and np.array_equal(self.confusion, other.confusion)


def _rows_equal(a: dict, b: dict) -> bool:
    if a.keys() != b.keys():
        return False
    for k in a:
        x, y = a[k], b[k]
        if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
            continue
        if x != y:
            return False
    return True


def csv_columns(n_classes: int) -> list[str]:
    return (["run_id", "mode", "seed", "epoch", "uar"]
            + [f"recall_{i}" for i in range(n_classes)]
            + ["loss_emo", "loss_d", "loss_e", "wall_s"])


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_metrics_csv(path, rows: list[dict], n_classes: int) -> None:
    cols = csv_columns(n_classes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in cols])


def read_metrics_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                if k in ("run_id", "mode"):
                    row[k] = v
                elif k in ("seed", "epoch"):
                    row[k] = int(v)
                else:
                    row[k] = float(v)
            rows.append(row)
    return rows
