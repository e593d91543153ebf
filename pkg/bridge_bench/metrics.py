"""Detection metrics, the one-sided Wilcoxon signed-rank test and LODO summaries.

All functions are pure. Confusion-based metrics use ``score ≥ threshold``
as the attack decision; any 0/0 ratio is defined as 0.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import pandas as pd
from scipy.stats import norm, rankdata

from bridge_bench.errors import DataError, DegenerateInputError
from bridge_bench.helpers import DEFAULT_THRESHOLD

MIN_RELIABLE_N = 100
EXACT_WILCOXON_MAX = 20
LODO_FOLDS = 5
UNRELIABLE_NOTE = "not reported — unreliable"

# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoredPredictions:
    scores: np.ndarray
    labels: np.ndarray
    contexts: np.ndarray | None = None

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)
        if scores.ndim != 1 or scores.shape != labels.shape:
            raise DataError("scores and labels must be 1-D arrays of equal length")
        if len(scores) == 0:
            raise DataError("no predictions")
        if not np.all(np.isfinite(scores)) or scores.min() < 0.0 or scores.max() > 1.0:
            raise DataError("scores must be finite and in [0, 1]")
        if not np.all((labels == 0) | (labels == 1)):
            raise DataError("labels must be binary")
        if self.contexts is not None:
            ctx = np.asarray(self.contexts, dtype=np.int64)
            if ctx.shape != (len(scores), 2):
                raise DataError("contexts must be N×2")
            object.__setattr__(self, "contexts", ctx)

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def positives(self) -> int:
        return int(self.labels.sum())

    def subset(self, mask: np.ndarray) -> ScoredPredictions:
        ctx = self.contexts[mask] if self.contexts is not None else None
        return ScoredPredictions(self.scores[mask], self.labels[mask], ctx)


class Confusion(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    f1: float
    precision: float
    recall: float
    false_alarm_rate: float
    mcc: float
    confusion: Confusion
    roc_auc: float | None = None
    pr_auc: float | None = None
    threshold: float = DEFAULT_THRESHOLD

    @property
    def detection_rate(self) -> float:
        return self.recall

    def to_dict(self) -> dict[str, Any]:
        return {
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "detection_rate": self.recall,
            "false_alarm_rate": self.false_alarm_rate,
            "roc_auc": self.roc_auc,
            "pr_auc": self.pr_auc,
            "mcc": self.mcc,
            "threshold": self.threshold,
            "confusion": self.confusion._asdict(),
        }


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n_nonzero: int
    exact: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n_nonzero": self.n_nonzero,
            "method": "exact" if self.exact else "normal",
            "marker": significance_marker(self.p_value),
        }


@dataclass(frozen=True)
class DatasetMetrics:
    dataset_id: int
    n: int
    report: MetricsReport | None
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset_id": self.dataset_id,
            "n": self.n,
            "metrics": self.report.to_dict() if self.report else None,
            "note": self.note,
        }


@dataclass(frozen=True)
class LodoSummary:
    folds: tuple[tuple[int, float], ...]
    mean_f1: float
    in_dist_f1: float
    gap: float
    means: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "folds": [{"held_out": ds, "f1": f1} for ds, f1 in self.folds],
            "mean_f1": self.mean_f1,
            "in_dist_f1": self.in_dist_f1,
            "gap": self.gap,
            "means": dict(self.means),
        }


@dataclass(frozen=True)
class SeedSummary:
    mean: float
    std: float
    n: int

    def __str__(self) -> str:
        return f"{self.mean:.4f} ± {self.std:.4f}"


# ---------------------------------------------------------------------------
# Confusion-based metrics
# ---------------------------------------------------------------------------


def confusion_at(preds: ScoredPredictions, threshold: float = DEFAULT_THRESHOLD) -> Confusion:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    predicted = preds.scores >= threshold
    actual = preds.labels == 1
    return Confusion(
        tp=int(np.count_nonzero(predicted & actual)),
        fp=int(np.count_nonzero(predicted & ~actual)),
        tn=int(np.count_nonzero(~predicted & ~actual)),
        fn=int(np.count_nonzero(~predicted & actual)),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def classification_metrics(confusion: Confusion, threshold: float = DEFAULT_THRESHOLD) -> MetricsReport:
    tp, fp, tn, fn = confusion
    if confusion.total < 1:
        raise ValueError("confusion matrix is empty")
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return MetricsReport(
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
        false_alarm_rate=_ratio(fp, fp + tn),
        mcc=(tp * tn - fp * fn) / math.sqrt(den) if den else 0.0,
        confusion=confusion,
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# Ranking metrics
# ---------------------------------------------------------------------------


def roc_auc(preds: ScoredPredictions) -> float:
    """Mann–Whitney form: P(score_pos > score_neg) + ½ P(equal), via average ranks."""
    n_pos = preds.positives
    n_neg = len(preds) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_auc needs both classes present")
    ranks = rankdata(preds.scores, method="average")
    rank_sum = float(ranks[preds.labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_points(preds: ScoredPredictions) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, recall, precision) at each distinct score, highest threshold first."""
    n_pos = preds.positives
    if n_pos == 0:
        raise DataError("pr_auc needs at least one positive")
    order = np.argsort(-preds.scores, kind="stable")
    scores = preds.scores[order]
    hits = preds.labels[order]
    tp = np.cumsum(hits)
    fp = np.cumsum(1 - hits)
    last = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    return scores[last], tp[last] / n_pos, tp[last] / (tp[last] + fp[last])


def pr_auc(preds: ScoredPredictions) -> float:
    """Trapezoidal area under the precision–recall curve.

    The curve starts at recall 0 with the precision of the highest threshold.
    """
    _, recall, precision = pr_points(preds)
    recall = np.r_[0.0, recall]
    precision = np.r_[precision[0], precision]
    return float(np.trapezoid(precision, recall))


def curve_series(preds: ScoredPredictions) -> list[dict[str, float]]:
    """ROC and PR coordinates per distinct threshold, for external plotting."""
    order = np.argsort(-preds.scores, kind="stable")
    scores = preds.scores[order]
    hits = preds.labels[order]
    n_pos = max(preds.positives, 1)
    n_neg = max(len(preds) - preds.positives, 1)
    tp = np.cumsum(hits)
    fp = np.cumsum(1 - hits)
    last = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    return [
        {
            "threshold": float(scores[i]),
            "tpr": float(tp[i] / n_pos),
            "fpr": float(fp[i] / n_neg),
            "precision": float(tp[i] / (tp[i] + fp[i])),
        }
        for i in last
    ]


def evaluate(preds: ScoredPredictions, threshold: float = DEFAULT_THRESHOLD) -> MetricsReport:
    """Full report; ROC-AUC is None for single-class input, PR-AUC None without positives."""
    base = classification_metrics(confusion_at(preds, threshold), threshold)
    n_pos = preds.positives
    auc = roc_auc(preds) if 0 < n_pos < len(preds) else None
    ap = pr_auc(preds) if n_pos > 0 else None
    return replace(base, roc_auc=auc, pr_auc=ap)


def per_dataset_breakdown(
    preds: ScoredPredictions, threshold: float = DEFAULT_THRESHOLD, min_n: int = MIN_RELIABLE_N
) -> list[DatasetMetrics]:
    """Metrics per ``c_ds``; datasets with fewer than *min_n* windows are flagged, not scored."""
    if preds.contexts is None:
        raise DataError("per-dataset breakdown needs contexts")
    rows = []
    for ds in np.unique(preds.contexts[:, 0]):
        mask = preds.contexts[:, 0] == ds
        n = int(mask.sum())
        if n < min_n:
            rows.append(DatasetMetrics(int(ds), n, None, UNRELIABLE_NOTE))
        else:
            rows.append(DatasetMetrics(int(ds), n, evaluate(preds.subset(mask), threshold)))
    return rows


# ---------------------------------------------------------------------------
# Significance testing
# ---------------------------------------------------------------------------


def _exact_upper_tail(doubled_ranks: np.ndarray, observed: int) -> float:
    """P(W⁺ ≥ observed) under the null, by dynamic programming over all 2^m sign patterns.

    Ranks are doubled so tied (half-integer) ranks stay integral.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks.tolist():
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return float(counts[observed:].sum()) / float(2 ** len(doubled_ranks))


def wilcoxon_one_sided(x: Sequence[float], y: Sequence[float]) -> WilcoxonResult:
    """Paired signed-rank test of ``median(x − y) > 0``.

    Zero differences are dropped and tied magnitudes get average ranks.
    Exact for up to 20 non-zero pairs, otherwise a normal approximation with
    tie-corrected variance and continuity correction.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1 or len(xa) == 0:
        raise ValueError("x and y must be non-empty sequences of equal length")
    d = xa - ya
    d = d[d != 0.0]
    m = len(d)
    if m == 0:
        raise DegenerateInputError("degenerate: no nonzero pairs")

    ranks = rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())

    if m <= EXACT_WILCOXON_MAX:
        doubled = np.rint(2 * ranks).astype(np.int64)
        p = _exact_upper_tail(doubled, int(round(2 * w_plus)))
        return WilcoxonResult(statistic=w_plus, p_value=p, n_nonzero=m, exact=True)

    _, tie_sizes = np.unique(np.abs(d), return_counts=True)
    mean = m * (m + 1) / 4.0
    var = m * (m + 1) * (2 * m + 1) / 24.0 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48.0
    z = (w_plus - mean - 0.5) / math.sqrt(var)
    return WilcoxonResult(statistic=w_plus, p_value=float(norm.sf(z)), n_nonzero=m, exact=False)


def significance_marker(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def lodo_summary(per_fold: Sequence[tuple[int, MetricsReport | float]], in_dist_f1: float) -> LodoSummary:
    """Mean LODO F1 over the five folds and the gap ``in_dist_f1 − mean``."""
    if len(per_fold) != LODO_FOLDS:
        raise ValueError(f"expected {LODO_FOLDS} folds, got {len(per_fold)}")
    ids = [ds for ds, _ in per_fold]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate held-out ids: {ids}")

    folds = sorted(per_fold, key=lambda item: item[0])
    f1s = [r.f1 if isinstance(r, MetricsReport) else float(r) for _, r in folds]
    mean_f1 = float(np.mean(f1s))

    means: dict[str, float] = {}
    reports = [r for _, r in folds if isinstance(r, MetricsReport)]
    if len(reports) == LODO_FOLDS:
        for key in ("roc_auc", "mcc", "pr_auc"):
            vals = [getattr(r, key) for r in reports]
            if all(v is not None for v in vals):
                means[key] = float(np.mean(vals))

    return LodoSummary(
        folds=tuple((ds, f1) for (ds, _), f1 in zip(folds, f1s, strict=True)),
        mean_f1=mean_f1,
        in_dist_f1=float(in_dist_f1),
        gap=float(in_dist_f1) - mean_f1,
        means=means,
    )


def lodo_baseline_deltas(reference_mean: float, baselines: dict[str, Sequence[float]]) -> dict[str, float]:
    """Reference mean LODO F1 minus each baseline's mean over its folds."""
    return {name: reference_mean - float(np.mean(vals)) for name, vals in baselines.items()}


def seed_summary(values: Sequence[float]) -> SeedSummary:
    """Mean and sample standard deviation over per-seed results."""
    arr = np.asarray(values, dtype=np.float64)
    if len(arr) == 0:
        raise ValueError("no values to summarise")
    std = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
    return SeedSummary(mean=float(arr.mean()), std=std, n=len(arr))


def split_comparison(random_report: MetricsReport, temporal_report: MetricsReport) -> dict[str, float | None]:
    """Temporal minus random-split value per metric (None when either side is undefined)."""
    out: dict[str, float | None] = {}
    for key in ("f1", "roc_auc", "mcc", "pr_auc"):
        a, b = getattr(random_report, key), getattr(temporal_report, key)
        out[key] = None if a is None or b is None else b - a
    return out


# ---------------------------------------------------------------------------
# Scores files
# ---------------------------------------------------------------------------

SCORE_COLUMNS = ("window_id", "score", "label", "c_ds", "c_dev")


def write_scores(path: str | Path, preds: ScoredPredictions, window_ids: Sequence[int] | None = None) -> Path:
    """Write a scores CSV (window_id, score, label, c_ds, c_dev); scores keep full float precision."""
    ids = np.arange(len(preds)) if window_ids is None else np.asarray(window_ids, dtype=np.int64)
    ctx = preds.contexts if preds.contexts is not None else np.zeros((len(preds), 2), dtype=np.int64)
    frame = pd.DataFrame(
        {"window_id": ids, "score": preds.scores, "label": preds.labels, "c_ds": ctx[:, 0], "c_dev": ctx[:, 1]}
    )
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, float_format="%.17g", lineterminator="\n")
    return out


def read_scores(path: str | Path) -> tuple[ScoredPredictions, np.ndarray]:
    """Load a scores CSV into predictions plus the window ids."""
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Scores file not found: {file_path}")
    frame = pd.read_csv(file_path, float_precision="round_trip")
    missing = [c for c in SCORE_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{file_path}: missing column(s) {', '.join(missing)}")
    if frame[list(SCORE_COLUMNS)].isna().any().any():
        raise DataError(f"{file_path}: empty cells")
    preds = ScoredPredictions(
        frame["score"].to_numpy(dtype=np.float64),
        frame["label"].to_numpy(dtype=np.int64),
        frame[["c_ds", "c_dev"]].to_numpy(dtype=np.int64),
    )
    return preds, frame["window_id"].to_numpy(dtype=np.int64)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def render_metrics(report: MetricsReport) -> str:
    c = report.confusion
    return "\n".join(
        [
            f"F1        {_fmt(report.f1)}",
            f"Precision {_fmt(report.precision)}",
            f"DetRate   {_fmt(report.recall)}",
            f"FA        {_fmt(report.false_alarm_rate)}",
            f"ROC-AUC   {_fmt(report.roc_auc)}",
            f"PR-AUC    {_fmt(report.pr_auc)}",
            f"MCC       {_fmt(report.mcc)}",
            f"TP={c.tp} FP={c.fp} TN={c.tn} FN={c.fn} (threshold {report.threshold})",
        ]
    )


def render_breakdown(rows: list[DatasetMetrics], names: dict[int, str] | None = None) -> str:
    names = names or {}
    lines = [f"{'Dataset':<16} {'N':>8} {'DetRate':>8} {'FA':>8} {'F1':>8}"]
    for row in rows:
        label = names.get(row.dataset_id, f"dataset {row.dataset_id}")
        if row.report is None:
            lines.append(f"{label:<16} {row.n:>8} {row.note}")
        else:
            r = row.report
            lines.append(f"{label:<16} {row.n:>8} {r.recall:>8.4f} {r.false_alarm_rate:>8.4f} {r.f1:>8.4f}")
    return "\n".join(lines)


def render_lodo(summary: LodoSummary, names: dict[int, str] | None = None) -> str:
    names = names or {}
    lines = [f"{'Held out':<16} {'F1':>8}"]
    for ds, f1 in summary.folds:
        lines.append(f"{names.get(ds, f'dataset {ds}'):<16} {f1:>8.4f}")
    lines.append(f"{'MEAN':<16} {summary.mean_f1:>8.4f}")
    lines.append(f"Generalisation gap: {summary.in_dist_f1:.4f} − {summary.mean_f1:.4f} = {summary.gap:+.4f}")
    return "\n".join(lines)


def lodo_csv(summary: LodoSummary) -> str:
    rows = [(str(ds), f1) for ds, f1 in summary.folds] + [("mean", summary.mean_f1), ("gap", summary.gap)]
    frame = pd.DataFrame([(k, repr(float(v))) for k, v in rows], columns=["held_out", "f1"])
    return frame.to_csv(index=False, lineterminator="\n")
