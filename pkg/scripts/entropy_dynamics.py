"""Per-step token entropy and accuracy for None, RKL and SRKL runs.

Writes one CSV row per (kind, seed, step) and prints the final ordering.

    python scripts/entropy_dynamics.py --seeds 5 --steps 500 --out runs/entropy.csv
"""

import argparse
import csv

from srkl_lab.config import RunConfig
from srkl_lab.divergence import DivergenceKind
from srkl_lab.experiment import run_training

KINDS = (DivergenceKind.NONE, DivergenceKind.SRKL, DivergenceKind.RKL)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--eval-every", type=int, default=50)
    ap.add_argument("--out", default="entropy_dynamics.csv")
    args = ap.parse_args()

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "seed", "step", "entropy", "accuracy", "mean_reward"])
        for seed in range(args.seeds):
            finals = {}
            for kind in KINDS:
                cfg = RunConfig(seed=seed)
                cfg.divergence.kind = kind
                cfg.train.steps, cfg.eval.eval_every = args.steps, args.eval_every
                res = run_training(cfg, write=False)
                for r in res.records:
                    if r["entropy_train_task"] is not None:
                        w.writerow([kind.value, seed, r["step"], r["entropy_train_task"],
                                    r["accuracy_train_task"], r["mean_reward"]])
                finals[kind] = res.final
            h = {k.value: round(f["entropy_train_task"], 4) for k, f in finals.items()}
            acc = {k.value: round(f["accuracy_train_task"], 4) for k, f in finals.items()}
            print(f"seed {seed}: entropy {h}  accuracy {acc}")


if __name__ == "__main__":
    main()
