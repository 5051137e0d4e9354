"""Detection and multiplicity metrics, SNR sweeps and CSV reports."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .errors import EvaluationError
from .reference import CONFUSION, detection_reference, offset_reference


@dataclass(frozen=True)
class Rate:
    value: float
    low: float
    high: float
    n: int
    k: int

    @classmethod
    def from_counts(cls, k: int, n: int, alpha: float = 0.05) -> "Rate":
        if n <= 0:
            return cls(float("nan"), float("nan"), float("nan"), 0, 0)
        lo, hi = proportion_confint(k, n, alpha=alpha, method="wilson")
        return cls(k / n, float(lo), float(hi), int(n), int(k))

    def overlaps(self, other: "Rate") -> bool:
        return not (self.high < other.low or other.high < self.low)


def wilson_interval(k: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    r = Rate.from_counts(k, n, alpha)
    return r.low, r.high


@dataclass(frozen=True)
class DetectionReport:
    missed_detection: Rate
    false_alarm: Rate


@dataclass
class MultiplicityReport:
    confusion: np.ndarray
    counts: np.ndarray
    offset_probs: np.ndarray
    accuracy: float
    n: int
    empty_rows: list = field(default_factory=list)

    @property
    def above_diagonal(self) -> float:
        """Total row-normalized mass of overestimates."""
        return float(np.triu(self.confusion, 1).sum())

    @property
    def below_diagonal(self) -> float:
        return float(np.tril(self.confusion, -1).sum())

    def within(self, k: int) -> float:
        return float(self.offset_probs[: k + 1].sum())


def predict_labels(classifier, ds) -> np.ndarray:
    """Class predictions from a classifier object or a plain callable."""
    if hasattr(classifier, "predict_dataset"):
        return np.asarray(classifier.predict_dataset(ds), dtype=np.int64)
    return np.asarray(classifier(ds), dtype=np.int64)


def eval_detection(classifier, single_ue_set, noise_only_set) -> DetectionReport:
    """Missed detection over occupied bins of `single_ue_set`, false alarm over `noise_only_set`."""
    if len(single_ue_set) == 0 or len(noise_only_set) == 0:
        raise EvaluationError("detection evaluation needs nonempty single-UE and noise-only sets")
    if single_ue_set.link_fingerprint != noise_only_set.link_fingerprint:
        raise EvaluationError("single-UE and noise-only sets come from different cell/channel scenarios")
    occupied = single_ue_set.where(single_ue_set.labels >= 1)
    if len(occupied) == 0:
        raise EvaluationError("single-UE set holds no occupied bins")
    misses = int((predict_labels(classifier, occupied) == 0).sum())
    alarms = int((predict_labels(classifier, noise_only_set) >= 1).sum())
    return DetectionReport(
        Rate.from_counts(misses, len(occupied)),
        Rate.from_counts(alarms, len(noise_only_set)),
    )


def confusion_report(truth: np.ndarray, pred: np.ndarray, n_classes: int) -> MultiplicityReport:
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.size == 0:
        raise EvaluationError("empty test set")
    if truth.min() < 0 or truth.max() >= n_classes:
        raise EvaluationError(f"labels must lie in [0, {n_classes - 1}]")
    pred = np.clip(pred, 0, n_classes - 1)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    rows = counts.sum(axis=1)
    conf = np.divide(counts, rows[:, None], out=np.zeros(counts.shape), where=rows[:, None] > 0)
    offsets = np.bincount(np.abs(pred - truth), minlength=n_classes)[:n_classes] / truth.size
    return MultiplicityReport(
        confusion=conf,
        counts=counts,
        offset_probs=offsets,
        accuracy=float(np.trace(counts) / truth.size),
        n=int(truth.size),
        empty_rows=[int(i) for i in np.flatnonzero(rows == 0)],
    )


def eval_multiplicity(classifier, test_set, n_classes: int | None = None) -> MultiplicityReport:
    k = n_classes or test_set.n_classes
    return confusion_report(test_set.labels, predict_labels(classifier, test_set), k)


# --- CSV reports ---------------------------------------------------------------

SWEEP_COLUMNS = [
    "snr_db", "channel", "detector", "metric", "value", "ci_low", "ci_high", "n_trials", "status",
    "ref_time_threshold", "ref_freq_threshold", "ref_best_threshold", "ref_lr", "ref_nn",
]
MULTIPLICITY_COLUMNS = ["snr_db", "channel", "detector", "offset", "probability", "accuracy", "n_test", "reference"]
CONFUSION_COLUMNS = ["snr_db", "channel", "detector", "true_count", "estimated_count", "probability", "row_samples", "reference"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        if np.isnan(x):
            return ""
        return f"{float(x):.9g}"
    return str(x)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def sweep_rows(snr_db: float, channel: str, detector: str, report: DetectionReport | None) -> list[dict]:
    ref = detection_reference(channel, snr_db)
    refs = {f"ref_{k}": v for k, v in ref.items()}
    rows = []
    for metric in ("missed_detection", "false_alarm"):
        row = {"snr_db": snr_db, "channel": channel, "detector": detector, "metric": metric}
        if report is None:
            row["status"] = "missing"
        else:
            r = getattr(report, metric)
            row.update(value=r.value, ci_low=r.low, ci_high=r.high, n_trials=r.n, status="ok")
        if metric == "missed_detection":
            row.update(refs)
        rows.append(row)
    return rows


def sweep_snr(template, snrs, detectors, test_sets):
    """Evaluate every detector at every SNR.

    `detectors` maps a detector name to ``{snr: classifier}``; `test_sets` is a
    callable ``snr -> (single_ue_set, noise_only_set)``. A detector without a
    model for some SNR yields explicit ``missing`` rows. Returns
    ``(rows, reports)`` with ``reports[(snr, name)] = DetectionReport``.
    """
    channel = template.channel.kind
    rows, reports = [], {}
    for snr in snrs:
        single, noise = test_sets(snr)
        for name, per_snr in detectors.items():
            clf = per_snr.get(snr)
            rep = eval_detection(clf, single, noise) if clf is not None else None
            if rep is not None:
                reports[(snr, name)] = rep
            rows += sweep_rows(snr, channel, name, rep)
    return rows, reports


def multiplicity_rows(snr_db, channel, detector, rep: MultiplicityReport) -> list[dict]:
    ref = offset_reference(channel, detector, snr_db) or []
    return [
        {
            "snr_db": snr_db, "channel": channel, "detector": detector, "offset": k,
            "probability": rep.offset_probs[k], "accuracy": rep.accuracy, "n_test": rep.n,
            "reference": ref[k] if k < len(ref) else None,
        }
        for k in range(rep.offset_probs.size)
    ]


def confusion_rows(snr_db, channel, detector, rep: MultiplicityReport) -> list[dict]:
    ref = None
    if channel == "AWGN" and snr_db == CONFUSION["snr_db"]:
        ref = CONFUSION.get(detector)
    rows = []
    k = rep.confusion.shape[0]
    for i in range(k):
        for j in range(k):
            rows.append({
                "snr_db": snr_db, "channel": channel, "detector": detector, "true_count": i,
                "estimated_count": j, "probability": rep.confusion[i, j],
                "row_samples": int(rep.counts[i].sum()),
                "reference": ref[i][j] if ref is not None and i < len(ref) and j < len(ref[i]) else None,
            })
    return rows


def read_confusion_csv(path, detector: str | None = None, snr_db: float | None = None,
                       channel: str | None = None) -> np.ndarray:
    """Rebuild a confusion matrix from ``confusion.csv`` rows matching the filters."""
    cells = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            if detector is not None and r["detector"] != detector:
                continue
            if snr_db is not None and float(r["snr_db"]) != float(snr_db):
                continue
            if channel is not None and r["channel"] != channel:
                continue
            cells[(int(r["true_count"]), int(r["estimated_count"]))] = float(r["probability"] or 0.0)
    if not cells:
        raise EvaluationError(f"no confusion rows in {path} match the filters")
    k = 1 + max(max(i, j) for i, j in cells)
    m = np.zeros((k, k))
    for (i, j), p in cells.items():
        m[i, j] = p
    return m
