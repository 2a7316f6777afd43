"""Results tables, Bjøntegaard tables and rate/quality plots."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .curves import BDReport, RDCurve, RDPoint, bd_report, metric_scale  # noqa: E402

TASK_METRICS = ("wap", "miou")
METRIC_LABELS = {"psnr_db": "PSNR [dB]", "ms_ssim": "MS-SSIM", "miou": "mIoU", "wap": "wAP"}
BD_COLUMNS = ("BD wAP", "BD mIOU", "BDR wAP", "BDR mIOU")
RESULT_FIELDS = ("curve", "model_id", "lam", "bpp", "psnr_db", "ms_ssim", "miou", "wap")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6f}"
    return str(v)


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _row(curve: str, p: RDPoint) -> list[str]:
    return [curve, p.model_id, _fmt(p.lam), _fmt(p.bpp), _fmt(p.psnr_db), _fmt(p.ms_ssim),
            _fmt(p.task_metrics.get("miou")), _fmt(p.task_metrics.get("wap"))]


def results_table(curves: list[RDCurve], baseline: RDPoint | None = None) -> str:
    rows = [list(RESULT_FIELDS)]
    for c in curves:
        rows += [_row(c.name, p) for p in c.points]
    if baseline is not None:
        rows.append(_row("uncompressed", baseline))
    return _csv(rows)


def bd_rows(anchor: RDCurve, tests: list[RDCurve]) -> list[dict]:
    """One row per test curve: BD quality (pp) and BD rate (%) for both task metrics."""
    out = []
    for t in tests:
        reports: dict[str, BDReport] = {}
        for m in TASK_METRICS:
            if all(m in p.task_metrics for p in anchor.points + t.points):
                reports[m] = bd_report(anchor, t, m)
        row = {"test": t.name, "anchor": anchor.name}
        row["BD wAP"] = reports["wap"].bd_quality if "wap" in reports else None
        row["BD mIOU"] = reports["miou"].bd_quality if "miou" in reports else None
        row["BDR wAP"] = reports["wap"].bd_rate if "wap" in reports else None
        row["BDR mIOU"] = reports["miou"].bd_rate if "miou" in reports else None
        row["errors"] = "; ".join(f"{m}: {r.error}" for m, r in reports.items() if r.error)
        out.append(row)
    return out


def bd_table(anchor: RDCurve, tests: list[RDCurve]) -> str:
    rows = [["test", "anchor", *BD_COLUMNS, "errors"]]
    for r in bd_rows(anchor, tests):
        rows.append([r["test"], r["anchor"], *(_fmt(r[c]) for c in BD_COLUMNS), r["errors"]])
    return _csv(rows)


def plot_curves(curves: list[RDCurve], metric: str, path, baseline: RDPoint | None = None) -> Path:
    scale = metric_scale(metric) if metric != "psnr_db" else 1.0
    fig, ax = plt.subplots(figsize=(5, 3.6), dpi=100)
    for c in curves:
        pts = [p for p in c.points if p.metric(metric) is not None and math.isfinite(p.metric(metric))]
        ax.plot([p.bpp for p in pts], [p.metric(metric) * scale for p in pts], marker="o", label=c.name)
    if baseline is not None and metric in baseline.task_metrics:
        ax.axhline(baseline.task_metrics[metric] * scale, color="0.4", linestyle="--", label="uncompressed")
    ax.set_xlabel("bpp")
    ax.set_ylabel(METRIC_LABELS.get(metric, metric) + (" [%]" if scale == 100.0 else ""))
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def _has_metric(p: RDPoint, metric: str) -> bool:
    if metric in TASK_METRICS:
        return metric in p.task_metrics
    return p.metric(metric) is not None


def emit_report(curves: list[RDCurve], out_dir, anchor: RDCurve | None = None,
                baseline: RDPoint | None = None) -> dict[str, Path]:
    """Write the results table, the BD table (only with an anchor) and one plot per metric.

    Outputs depend only on the inputs, so regenerating from the same
    curves gives byte-identical files.
    """
    if not curves:
        raise ValueError("emit_report needs at least one curve")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"results": out / "results.csv", "points": out / "points.jsonl"}
    files["results"].write_text(results_table(curves, baseline))
    files["points"].write_text("".join(p.to_json(c.name) + "\n" for c in curves for p in c.points))
    if anchor is not None:
        tests = [c for c in curves if c.name != anchor.name]
        files["bd"] = out / "bd_table.csv"
        files["bd"].write_text(bd_table(anchor, tests))
    plotted = [anchor] + [c for c in curves if c.name != anchor.name] if anchor is not None else curves
    for metric in ("psnr_db", "ms_ssim", *TASK_METRICS):
        if all(_has_metric(p, metric) for c in plotted for p in c.points):
            files[f"plot_{metric}"] = plot_curves(plotted, metric, out / f"rd_{metric}.png", baseline)
    return files
