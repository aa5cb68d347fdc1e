"""Full, positive-only and negative-only advantage masks without a penalty.

Reports final entropy, train accuracy and probe ECE drift per mask.

    python scripts/masking_experiment.py --seeds 3 --out runs/masking.csv
"""

import argparse
import csv

from srkl_lab.config import RunConfig
from srkl_lab.divergence import DivergenceKind
from srkl_lab.experiment import run_training
from srkl_lab.rft import MaskMode


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--out", default="masking.csv")
    args = ap.parse_args()

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mask", "seed", "entropy", "accuracy", "ece_drift"])
        for mask in MaskMode:
            for seed in range(args.seeds):
                cfg = RunConfig(seed=seed)
                cfg.divergence.kind = DivergenceKind.NONE
                cfg.surrogate.mask_mode = mask
                cfg.train.steps = cfg.eval.eval_every = args.steps
                res = run_training(cfg, write=False)
                f = res.final
                drift = f["ece_probe"] - res.baseline["ece_probe"]
                w.writerow([mask.value, seed, f["entropy_train_task"], f["accuracy_train_task"], drift])
                print(f"{mask.value} seed {seed}: entropy {f['entropy_train_task']:.4f} "
                      f"accuracy {f['accuracy_train_task']:.4f} ECE drift {drift:+.4f}")


if __name__ == "__main__":
    main()
