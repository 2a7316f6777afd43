"""Model evaluation through the real bitstream path.

Every image is compressed to bytes, parsed back and decoded; the rate is
the measured payload size. Each image yields one JSON record holding enough
raw statistics (bits, pixels, confusion matrices, instance matches) for the
model-level numbers to be recomputed exactly from the records alone.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..codec import HyperpriorCodec, compress, decompress, load_codec
from ..datasets import SequenceDataset
from ..entropy import Bitstream
from ..errors import CodingError, DataError
from ..task import FrozenNetworkHandle
from .curves import RDPoint
from .metrics import (ap_from_matches, confusion_matrix, match_instances, miou_from_confusion, ms_ssim, psnr,
                      semantic_to_instances, wap_from_ap)

log = logging.getLogger(__name__)

BASELINE_ID = "uncompressed"


@dataclass
class EvalResult:
    point: RDPoint
    baseline: RDPoint
    records: list[dict]
    failures: list[dict] = field(default_factory=list)


def _task_stats(net: FrozenNetworkHandle, x: torch.Tensor, gt: np.ndarray) -> dict:
    with torch.no_grad():
        probs = torch.softmax(net.predict(x).logits.float(), dim=1)[0].numpy()
    labels = probs.argmax(axis=0)
    k = probs.shape[0]
    pred_inst = semantic_to_instances(labels, probs)
    gt_inst = semantic_to_instances(gt)
    return {"confusion": confusion_matrix(labels, gt, k).tolist(), "matches": match_instances(pred_inst, gt_inst, k)}


def evaluate_image(model: HyperpriorCodec, image: np.ndarray, gt: np.ndarray | None,
                   net: FrozenNetworkHandle | None, image_id: str, lam: float = 0.0) -> dict:
    """One per-image record; coding failures are re-raised with ``image_id`` attached."""
    x = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1)[None].float().div(255.0)
    h, w = image.shape[:2]
    try:
        data = compress(model, x, lam).to_bytes()
        x_hat = decompress(model, Bitstream.from_bytes(data))
    except CodingError as e:
        raise type(e)(f"image {image_id}: {e}") from e
    bits = Bitstream.from_bytes(data).payload_bits
    ref = x[0].permute(1, 2, 0).double().numpy()
    rec = x_hat[0].permute(1, 2, 0).double().numpy()
    record = {"image": image_id, "bits": bits, "stream_bytes": len(data), "pixels": h * w,
              "bpp": bits / (h * w), "psnr_db": psnr(rec, ref), "ms_ssim": ms_ssim(rec, ref)}
    if net is not None and gt is not None:
        record["task"] = _task_stats(net, x_hat, gt)
        record["baseline_task"] = _task_stats(net, x, gt)
    return record


def _task_metrics(stats: list[dict]) -> dict:
    if not stats:
        return {}
    conf = np.sum([np.asarray(s["confusion"]) for s in stats], axis=0)
    out = {"miou": miou_from_confusion(conf)}
    ap, counts = ap_from_matches([s["matches"] for s in stats], conf.shape[0])
    try:
        out["wap"] = wap_from_ap(ap, counts)
    except DataError:
        pass
    return out


def _mean_finite(values) -> float | None:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.inf


def aggregate_records(records: list[dict], model_id: str = "", lam: float | None = None) -> tuple[RDPoint, RDPoint]:
    """Model-level point and uncompressed baseline from per-image records.

    bpp is pooled (total bits over total pixels). PSNR averages finite
    values; images coded losslessly are left out. Records are sorted by
    image id first so the reduction does not depend on completion order.
    """
    if not records:
        raise DataError("no per-image records to aggregate")
    records = sorted(records, key=lambda r: r["image"])
    bpp = sum(r["bits"] for r in records) / sum(r["pixels"] for r in records)
    point = RDPoint(bpp=bpp, psnr_db=_mean_finite(r["psnr_db"] for r in records),
                    ms_ssim=float(np.mean([r["ms_ssim"] for r in records])),
                    task_metrics=_task_metrics([r["task"] for r in records if "task" in r]),
                    model_id=model_id, lam=lam)
    baseline = RDPoint(bpp=math.inf, psnr_db=math.inf, ms_ssim=1.0,
                       task_metrics=_task_metrics([r["baseline_task"] for r in records if "baseline_task" in r]),
                       model_id=BASELINE_ID)
    return point, baseline


def evaluate_model(checkpoint, dataset: SequenceDataset, net: FrozenNetworkHandle | None = None,
                   records_path=None, on_error: str = "raise") -> EvalResult:
    """Evaluate a codec (model or checkpoint path) on the labeled frame of every sequence.

    With ``on_error="skip"`` coding failures are logged and collected in
    ``failures`` instead of aborting the run.
    """
    if isinstance(checkpoint, HyperpriorCodec):
        model, meta = checkpoint.eval(), {}
    else:
        model, meta = load_codec(checkpoint)
    if len(dataset) == 0:
        raise DataError("empty evaluation dataset")
    records, failures = [], []
    for i, seq in enumerate(dataset.sequences):
        image_id = seq.name or f"{i:05d}"
        gt = seq.annotation if net is not None else None
        try:
            records.append(evaluate_image(model, dataset.labeled_frame(i), gt, net, image_id, meta.get("lam") or 0.0))
        except CodingError as e:
            if on_error != "skip":
                raise
            log.error("%s", e)
            failures.append({"image": image_id, "error": f"{type(e).__name__}: {e}"})
    model_id, lam = f"{model.model_id():016x}", meta.get("lam")
    for r in records:
        r.update(model_id=model_id, lam=lam)
    point, baseline = aggregate_records(records, model_id, lam)
    if records_path is not None:
        write_records(records_path, records)
    return EvalResult(point, baseline, records, failures)


def write_records(path, records: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in sorted(records, key=lambda r: r["image"])))
    return path


def read_records(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def point_from_records(path) -> tuple[RDPoint, RDPoint]:
    """Recompute a model's point (and its baseline) from a persisted records file."""
    records = read_records(path)
    if not records:
        raise DataError(f"{path} holds no records")
    return aggregate_records(records, records[0].get("model_id", ""), records[0].get("lam"))
