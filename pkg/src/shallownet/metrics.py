"""Confusion matrix, the six summary metrics, ROC curve and AUC."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def p(self):
        return self.tp + self.fn

    @property
    def n(self):
        return self.tn + self.fp

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn

    def inverted(self) -> "ConfusionMatrix":
        """Matrix obtained by flipping every prediction."""
        return ConfusionMatrix(tp=self.fn, fp=self.tn, fn=self.tp, tn=self.fp)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    f1: float
    mcc: float
    cm: ConfusionMatrix

    def to_dict(self):
        d = asdict(self)
        d["cm"] = asdict(self.cm)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


TABLE_COLUMNS = ["accuracy", "sensitivity", "specificity", "precision", "f1", "mcc",
                 "tp", "tn", "training_time_s", "per_image_s"]


def _ratio(num, den):
    return num / den if den else 0.0


def confusion(scores, labels, threshold=0.5) -> ConfusionMatrix:
    """Positive prediction iff ``score >= threshold``."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ShapeError(f"{scores.shape[0]} scores but {labels.shape[0]} labels")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    pred = scores >= threshold
    pos = labels == 1
    return ConfusionMatrix(tp=int(np.sum(pred & pos)), fp=int(np.sum(pred & ~pos)),
                           fn=int(np.sum(~pred & pos)), tn=int(np.sum(~pred & ~pos)))


def report(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy, TPR, specificity, PPV, F1 and MCC; any 0/0 rate is reported as 0."""
    if cm.total == 0:
        raise ValueError("confusion matrix is empty")
    tp, fp, fn, tn = cm.tp, cm.fp, cm.fn, cm.tn
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(den) if den else 0.0
    return MetricsReport(
        accuracy=(tp + tn) / cm.total,
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, fp + tn),
        precision=_ratio(tp, tp + fp),
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        mcc=mcc,
        cm=cm,
    )


def table_row(rep: MetricsReport, training_time_s=None, per_image_s=None):
    """One row in the results-table layout; rates in percent."""
    pct = lambda v: f"{100 * v:.2f}"  # noqa: E731
    fmt = lambda v: "" if v is None else f"{v:.4f}"  # noqa: E731
    return [pct(rep.accuracy), pct(rep.sensitivity), pct(rep.specificity), pct(rep.precision),
            pct(rep.f1), f"{rep.mcc:.4f}", rep.cm.tp, rep.cm.tn, fmt(training_time_s), fmt(per_image_s)]


def write_table_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        w.writerows(rows)


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    fps: np.ndarray  # cumulative integer counts behind fpr/tpr
    tps: np.ndarray

    @property
    def auc(self):
        return auc(self)

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_curve(scores, labels) -> RocCurve:
    """Sweep thresholds +inf, then every distinct score in descending order."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ShapeError(f"{scores.shape[0]} scores but {labels.shape[0]} labels")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = pos[order]
    tps = np.cumsum(y)
    fps = np.cumsum(~y)
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]  # end of each tie group
    tps = np.r_[0, tps[last]].astype(np.int64)
    fps = np.r_[0, fps[last]].astype(np.int64)
    thresholds = np.r_[np.inf, s[last]]
    return RocCurve(thresholds, fps / n_neg, tps / n_pos, fps, tps)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve.

    Evaluated on the integer counts so that, for tie-free scores, it equals the
    positive-beats-negative pair fraction exactly.
    """
    dfp = np.diff(curve.fps)
    twice_area = int(np.sum(dfp * (curve.tps[1:] + curve.tps[:-1])))
    return twice_area / (2 * int(curve.fps[-1]) * int(curve.tps[-1]))


def write_roc_csv(curve: RocCurve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
            w.writerow(["inf" if np.isinf(t) else repr(float(t)), repr(float(f)), repr(float(p))])


def roc_svg(curve: RocCurve, size=320, margin=40, title=None) -> str:
    """Minimal standalone SVG line plot; no timestamps or random ids."""
    span = size - 2 * margin
    pts = " ".join(f"{margin + f * span:.2f},{size - margin - t * span:.2f}"
                   for f, t in zip(curve.fpr, curve.tpr))
    label = title or f"ROC (AUC = {auc(curve):.4f})"
    lo, hi = margin, size - margin
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">\n'
        f'  <rect x="0" y="0" width="{size}" height="{size}" fill="white"/>\n'
        f'  <rect x="{lo}" y="{lo}" width="{span}" height="{span}" fill="none" stroke="black"/>\n'
        f'  <line x1="{lo}" y1="{hi}" x2="{hi}" y2="{lo}" stroke="gray" stroke-dasharray="4 4"/>\n'
        f'  <polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="2"/>\n'
        f'  <text x="{size / 2}" y="{margin / 2 + 5}" text-anchor="middle" font-size="14">{label}</text>\n'
        f'  <text x="{size / 2}" y="{size - 10}" text-anchor="middle" font-size="12">False positive rate</text>\n'
        f'  <text x="12" y="{size / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {size / 2})">True positive rate</text>\n'
        "</svg>\n"
    )


def write_roc_svg(curve: RocCurve, path, **kw):
    with open(path, "w") as fh:
        fh.write(roc_svg(curve, **kw))
