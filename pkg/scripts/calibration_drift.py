"""Probe-set ECE before and after training, per divergence kind and seed.

    python scripts/calibration_drift.py --seeds 5 --out runs/drift.csv
"""

import argparse
import csv

from srkl_lab.config import RunConfig
from srkl_lab.divergence import DivergenceKind
from srkl_lab.experiment import run_training


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--alpha", type=float, default=0.8)
    ap.add_argument("--beta", type=float, default=0.04)
    ap.add_argument("--out", default="calibration_drift.csv")
    args = ap.parse_args()

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "seed", "ece_base", "ece_final", "drift", "probe_accuracy"])
        for kind in DivergenceKind:
            drifts = []
            for seed in range(args.seeds):
                cfg = RunConfig(seed=seed)
                cfg.divergence.kind, cfg.divergence.alpha, cfg.divergence.beta = kind, args.alpha, args.beta
                cfg.train.steps = cfg.eval.eval_every = args.steps
                res = run_training(cfg, write=False)
                base, final = res.baseline["ece_probe"], res.final["ece_probe"]
                drifts.append(final - base)
                w.writerow([kind.value, seed, base, final, final - base, res.final["accuracy_probe"]])
            print(f"{kind.value}: mean ECE drift {sum(drifts) / len(drifts):+.4f}")


if __name__ == "__main__":
    main()
