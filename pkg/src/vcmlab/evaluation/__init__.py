"""Metrics, rate/quality curves, Bjøntegaard deltas and reports."""
from .curves import BDReport, RDCurve, RDPoint, bd_quality, bd_rate, bd_report, metric_scale
from .evaluate import (EvalResult, aggregate_records, evaluate_image, evaluate_model, point_from_records, read_records,
                       write_records)
from .metrics import (ap_from_matches, average_precision_per_class, confusion_matrix, match_instances, miou,
                      miou_from_confusion, ms_ssim, psnr, semantic_to_instances, wap)
from .report import bd_rows, bd_table, emit_report, plot_curves, results_table

__all__ = [
    "BDReport", "RDCurve", "RDPoint", "bd_quality", "bd_rate", "bd_report", "metric_scale",
    "EvalResult", "aggregate_records", "evaluate_image", "evaluate_model", "point_from_records", "read_records", "write_records",
    "ap_from_matches", "average_precision_per_class", "confusion_matrix", "match_instances", "miou",
    "miou_from_confusion", "ms_ssim", "psnr", "semantic_to_instances", "wap",
    "bd_rows", "bd_table", "emit_report", "plot_curves", "results_table",
]
