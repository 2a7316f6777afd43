"""Run the three-ladder toy experiment and write its report.

    python demos/toy_experiment.py OUT_DIR

Roughly 30 minutes on one CPU core. The report covers the first finetune
seed; the printed BD values are averaged over all seeds. Rerunning with the
same OUT_DIR reuses the cached pretrain checkpoint and result file.
"""
import argparse
import logging
from pathlib import Path

import torch

from vcmlab.evaluation import bd_quality, emit_report
from vcmlab.toy import run_toy_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=Path)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)

    res = run_toy_experiment(out_dir=args.out)
    anchor = res.curves["mse"]
    files = emit_report(list(res.curves.values()), args.out / "report", anchor=anchor, baseline=res.baseline)
    for name in ("pseudo_gt_labeled_only", "pseudo_gt_random_frame"):
        per_seed = [bd_quality(c["mse"], c[name], "miou") for c in res.runs.values()]
        print(f"{name:24s} BD mIoU {res.mean_bd_quality('mse', name, 'miou'):+.2f} pp "
              f"(per seed {', '.join(f'{v:+.2f}' for v in per_seed)})")
    print("report:", files["bd"].parent)


if __name__ == "__main__":
    main()
