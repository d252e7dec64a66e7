"""Threshold-sweep metrics, latency CDFs and run-to-run variation bands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BAND_GRID_POINTS = 512


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredDataset:
    scores: np.ndarray
    labels: np.ndarray
    run_id: int = 0

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        labels = np.asarray(self.labels).astype(int)
        if scores.shape != labels.shape or scores.ndim != 1:
            raise MetricError("scores and labels must be 1-D arrays of equal length")
        if not np.all(np.isfinite(scores)):
            raise MetricError("scores must be finite")
        if np.any((labels != 0) & (labels != 1)):
            raise MetricError("labels must be binary")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class CurveReport:
    kind: str  # roc | pr | latency_cdf
    x: np.ndarray
    y: np.ndarray
    auc: float
    band_low: np.ndarray | None = None
    band_high: np.ndarray | None = None
    censored: float | None = None
    thresholds: np.ndarray | None = None

    def rows(self) -> list[tuple[float, float, float, float]]:
        """(x, mean, band_low, band_high) rows for plot-ready CSV output."""
        lo = self.y if self.band_low is None else self.band_low
        hi = self.y if self.band_high is None else self.band_high
        return list(zip(self.x.tolist(), self.y.tolist(), lo.tolist(), hi.tolist()))


def _sweep(ds: ScoredDataset):
    """Cumulative (tp, fp) when predicting positive for score >= t, t descending."""
    order = np.argsort(-ds.scores, kind="mergesort")
    s = ds.scores[order]
    y = ds.labels[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return s[last], tp, fp


def _require_both(ds: ScoredDataset) -> tuple[int, int]:
    pos = int(ds.labels.sum())
    neg = len(ds.labels) - pos
    if pos == 0 or neg == 0:
        raise MetricError("both classes must be present")
    return pos, neg


def roc_curve(ds: ScoredDataset) -> CurveReport:
    pos, neg = _require_both(ds)
    thr, tp, fp = _sweep(ds)
    fpr = np.r_[0.0, fp / neg]
    tpr = np.r_[0.0, tp / pos]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return CurveReport("roc", fpr, tpr, auc, thresholds=np.r_[np.inf, thr])


def pr_curve(ds: ScoredDataset) -> CurveReport:
    """Precision against recall; precision with no predicted positives is 1.

    The area is average precision: sum of recall steps times precision.
    """
    pos, _ = _require_both(ds)
    thr, tp, fp = _sweep(ds)
    recall = np.r_[0.0, tp / pos]
    precision = np.r_[1.0, tp / (tp + fp)]
    auc = float(np.sum(np.diff(recall) * precision[1:]))
    return CurveReport("pr", recall, precision, auc, thresholds=np.r_[np.inf, thr])


def interpolated_precision(report: CurveReport) -> np.ndarray:
    """Max precision at any recall >= r, the usual PR envelope."""
    return np.maximum.accumulate(report.y[::-1])[::-1]


@dataclass(frozen=True)
class F1Result:
    precision: float
    recall: float
    f1: float
    threshold: float
    degenerate: bool = False


def f1_best(ds: ScoredDataset) -> F1Result:
    """Best F1 over thresholds ``score >= t``; ties go to the higher threshold."""
    pos = int(ds.labels.sum())
    if pos == 0:
        raise MetricError("no positive labels")
    degenerate = pos == len(ds.labels)
    thr, tp, fp = _sweep(ds)
    precision = tp / (tp + fp)
    recall = tp / pos
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(tp > 0, 2 * precision * recall / (precision + recall), 0.0)
    i = int(np.argmax(f1))  # thresholds descend, so argmax picks the highest on ties
    return F1Result(float(precision[i]), float(recall[i]), float(f1[i]), float(thr[i]), degenerate)


def latency_cdf(alarm_frames, onset_frames, max_latency: int | None = None) -> CurveReport:
    """Empirical CDF of first-alarm latency; ``None`` alarms are censored misses.

    The CDF is over all streams, so it tops out at 1 - censored.
    """
    alarms = list(alarm_frames)
    onsets = list(onset_frames)
    if not alarms:
        raise MetricError("no streams")
    if len(alarms) != len(onsets):
        raise MetricError("need one onset per stream")
    lat = []
    for a, o in zip(alarms, onsets):
        if a is None:
            continue
        if a < o:
            raise MetricError(f"alarm at {a} precedes onset {o}")
        lat.append(a - o)
    lat = np.array(lat, dtype=int)
    censored = 1.0 - len(lat) / len(alarms)
    if max_latency is None:
        max_latency = int(lat.max()) if len(lat) else 0
    x = np.arange(max_latency + 1, dtype=float)
    y = np.searchsorted(np.sort(lat), x, side="right") / len(alarms)
    return CurveReport("latency_cdf", x, y, float(y.mean()), censored=censored)


def far_per_hour(false_positive_rate: float, frame_rate: float) -> float:
    """False alarms per hour at ``frame_rate`` frame decisions per second."""
    return false_positive_rate * frame_rate * 3600.0


def _on_grid(report: CurveReport, grid: np.ndarray) -> np.ndarray:
    x, y = report.x, report.y
    if report.kind == "pr":
        y = interpolated_precision(report)
    # upper envelope where x repeats (vertical ROC steps)
    keep = np.r_[np.diff(x) != 0, True]
    if report.kind == "pr":
        keep = np.r_[True, np.diff(x) != 0]
    return np.interp(grid, x[keep], y[keep])


def run_bands(reports, grid_points: int = BAND_GRID_POINTS) -> CurveReport:
    """Pointwise mean and 5th/95th percentiles across runs on a common grid."""
    reports = list(reports)
    if len(reports) < 1:
        raise MetricError("need at least one run")
    kinds = {r.kind for r in reports}
    if len(kinds) != 1:
        raise MetricError(f"mismatched metric kinds: {sorted(kinds)}")
    kind = kinds.pop()
    hi = 1.0 if kind in ("roc", "pr") else max(float(r.x[-1]) for r in reports)
    grid = np.linspace(0.0, hi, grid_points)
    ys = np.stack([_on_grid(r, grid) for r in reports])
    # offset by the first run so identical runs reproduce it exactly
    mean = ys[0] + (ys - ys[0]).mean(axis=0)
    low = np.minimum(np.percentile(ys, 5, axis=0, method="nearest"), mean)
    high = np.maximum(np.percentile(ys, 95, axis=0, method="nearest"), mean)
    auc = float(np.mean([r.auc for r in reports]))
    censored = None
    if kind == "latency_cdf":
        censored = float(np.mean([r.censored for r in reports]))
    return CurveReport(kind, grid, mean, auc, low, high, censored)
