"""
Text tables and optional plots for evaluation and ablation results.
"""

from typing import List, Mapping, Sequence

from app.utils.plots import plot_bars, plot_pr_curves

from .metrics import index_records, precision_recall_curve
from .types import AblationReport, AnnotationRecord, APResult, PredictionRecord


def _pct(value: float) -> str:
    return f"{100.0 * value:.1f}"


def format_ap_table(result: APResult) -> str:
    """Per-track AP (percent) with diagnostics, followed by the average."""
    lines = [f"{'track':<14}{'AP':>8}{'annots':>9}{'preds':>9}{'mIoU':>8}{'mScore':>9}"]
    for t in result.tracks:
        lines.append(
            f"{t.track:<14}{_pct(t.ap):>8}{t.annotations:>9}{t.predictions:>9}"
            f"{t.mean_iou:>8.3f}{t.mean_score:>9.3f}"
        )
    lines.append(f"{'Average':<14}{_pct(result.average):>8}{result.annotations:>9}{result.predictions:>9}")
    return "\n".join(lines) + "\n"


def format_ablation_table(report: AblationReport) -> str:
    tracks: List[str] = []
    for row in report.rows:
        if row.result is not None:
            tracks = [t.track for t in row.result.tracks]
            break
    header = f"{'variant':<26}" + "".join(f"{t[:8]:>9}" for t in tracks) + f"{'Average':>9}{'mIoU':>8}{'mScore':>9}"
    lines = [header]
    for row in report.rows:
        if row.status == "failed" or row.result is None:
            lines.append(f"{row.variant:<26}failed: {row.error}")
            continue
        aps = {t.track: t.ap for t in row.result.tracks}
        cells = "".join(f"{_pct(aps[t]) if t in aps else '-':>9}" for t in tracks)
        lines.append(
            f"{row.variant:<26}{cells}{_pct(row.result.average):>9}{row.mean_iou:>8.3f}{row.mean_score:>9.3f}"
        )
    return "\n".join(lines) + "\n"


def write_pr_plot(
    annotations: Sequence[AnnotationRecord],
    records: Sequence[PredictionRecord],
    tracks: Sequence[str],
    iou_threshold: float,
    path: str,
) -> str:
    predictions = index_records(records)
    curves = {}
    for track in tracks:
        subset = [a for a in annotations if a.track == track]
        if subset:
            curves[track] = precision_recall_curve(subset, predictions, iou_threshold)
    return plot_pr_curves(curves, path)


def write_ablation_plot(report: AblationReport, path: str) -> str:
    """Average mAP, mean IoU and mean score per variant."""
    rows = [r for r in report.rows if r.result is not None]
    series: Mapping[str, List[float]] = {
        "mAP": [r.result.average for r in rows],
        "mean IoU": [r.mean_iou for r in rows],
        "mean score": [r.mean_score for r in rows],
    }
    return plot_bars(series, [r.variant for r in rows], path, ylabel="value")
