"""Rate/quality points, curves, their line-oriented file format, and
Bjøntegaard deltas between curves.

Curve files hold one JSON object per line, one line per point. External
anchors (e.g. a conventional codec run elsewhere) are imported by writing
their bpp/metric pairs in the same format.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from ..errors import DataError, NoOverlapError

# metrics reported on a 0..1 scale are expressed in percentage points
UNIT_RANGE_METRICS = {"ms_ssim", "miou", "wap"}
# BD values are rounded to this many decimals so exact cases (identical
# curves, constant offsets) report exact numbers instead of float residue
BD_DECIMALS = 9


@dataclass
class RDPoint:
    bpp: float
    psnr_db: float | None = None
    ms_ssim: float | None = None
    task_metrics: dict = field(default_factory=dict)
    model_id: str = ""
    lam: float | None = None

    def metric(self, name: str) -> float:
        if name == "bpp":
            return self.bpp
        if name in ("psnr", "psnr_db"):
            return self.psnr_db
        if name == "ms_ssim":
            return self.ms_ssim
        if name not in self.task_metrics:
            raise KeyError(f"point {self.model_id!r} has no metric {name!r}")
        return self.task_metrics[name]

    def to_json(self, curve: str = "") -> str:
        d = asdict(self)
        if curve:
            d = {"curve": curve, **d}
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RDPoint":
        return cls(bpp=float(d["bpp"]), psnr_db=d.get("psnr_db"), ms_ssim=d.get("ms_ssim"),
                   task_metrics=dict(d.get("task_metrics", {})), model_id=str(d.get("model_id", "")),
                   lam=d.get("lam"))


@dataclass
class RDCurve:
    name: str
    points: list[RDPoint]

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.bpp)
        bpps = [p.bpp for p in self.points]
        if any(b <= 0 for b in bpps):
            raise DataError(f"curve {self.name!r}: bpp must be positive for log-rate interpolation")
        if len(set(bpps)) != len(bpps):
            raise DataError(f"curve {self.name!r} has duplicate bpp values")

    def rates(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points], dtype=np.float64)

    def values(self, metric: str) -> np.ndarray:
        return np.array([p.metric(metric) for p in self.points], dtype=np.float64)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text("".join(p.to_json(self.name) + "\n" for p in self.points))
        return path

    @classmethod
    def load(cls, path) -> "RDCurve":
        path = Path(path)
        rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        if not rows:
            raise DataError(f"{path} contains no points")
        name = rows[0].get("curve") or path.stem
        return cls(name, [RDPoint.from_dict(r) for r in rows])


def metric_scale(metric: str) -> float:
    return 100.0 if metric in UNIT_RANGE_METRICS else 1.0


def _mean_gap(x_a, y_a, x_t, y_t) -> float:
    lo, hi = max(x_a.min(), x_t.min()), min(x_a.max(), x_t.max())
    if not hi > lo:
        raise NoOverlapError(f"no overlap: anchor [{x_a.min():.4g}, {x_a.max():.4g}], "
                             f"test [{x_t.min():.4g}, {x_t.max():.4g}]")
    f_a, f_t = PchipInterpolator(x_a, y_a), PchipInterpolator(x_t, y_t)
    return float((f_t.integrate(lo, hi) - f_a.integrate(lo, hi)) / (hi - lo))


def _finite(x, y):
    keep = np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def bd_quality(anchor: RDCurve, test: RDCurve, metric: str) -> float:
    """Mean vertical gap of metric-vs-log2(bpp) interpolants over the common rate range.

    Unit-range metrics are reported in percentage points; PSNR in dB.
    Interpolation is monotone piecewise-cubic (PCHIP), integrated exactly.
    """
    s = metric_scale(metric)
    x_a, y_a = _finite(np.log2(anchor.rates()), anchor.values(metric) * s)
    x_t, y_t = _finite(np.log2(test.rates()), test.values(metric) * s)
    if len(x_a) < 2 or len(x_t) < 2:
        raise DataError("BD needs at least two finite points per curve")
    return round(_mean_gap(x_a, y_a, x_t, y_t), BD_DECIMALS)


def _by_metric(curve: RDCurve, metric: str):
    q, r = _finite(curve.values(metric), np.log2(curve.rates()))
    order = np.argsort(q, kind="stable")
    q, r = q[order], r[order]
    if len(q) < 2 or np.any(np.diff(q) <= 0):
        raise DataError(f"curve {curve.name!r}: {metric} must take at least two distinct values and "
                        "be strictly monotone in rate for BD-rate")
    return q, r


def bd_rate(anchor: RDCurve, test: RDCurve, metric: str) -> float:
    """Average rate difference in percent at equal quality; negative means savings."""
    q_a, r_a = _by_metric(anchor, metric)
    q_t, r_t = _by_metric(test, metric)
    gap = _mean_gap(q_a, r_a, q_t, r_t)
    return round(100.0 * (2.0 ** gap - 1.0), BD_DECIMALS)


@dataclass
class BDReport:
    anchor: str
    test: str
    metric: str
    bd_quality: float | None
    bd_rate: float | None
    overlap: tuple[float, float] | None
    error: str | None = None


def bd_report(anchor: RDCurve, test: RDCurve, metric: str) -> BDReport:
    """Both deltas for one pair; failures are captured rather than raised."""
    lo = max(anchor.rates().min(), test.rates().min())
    hi = min(anchor.rates().max(), test.rates().max())
    overlap = (float(lo), float(hi)) if hi > lo else None
    quality = rate = None
    errors = []
    try:
        quality = bd_quality(anchor, test, metric)
    except (NoOverlapError, DataError) as e:
        errors.append(f"bd_quality: {e}")
    try:
        rate = bd_rate(anchor, test, metric)
    except (NoOverlapError, DataError) as e:
        errors.append(f"bd_rate: {e}")
    if quality is not None and not math.isfinite(quality):
        quality = None
    return BDReport(anchor.name, test.name, metric, quality, rate, overlap, "; ".join(errors) or None)
