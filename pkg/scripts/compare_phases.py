"""Dev EER after each training phase, averaged over seeds.

    python scripts/compare_phases.py --seeds 5
"""

import argparse

import numpy as np

from srctrace.experiment import run_seed
from srctrace.losses import ContrastiveConfig
from srctrace.synthcorpus import CorpusConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--alpha-zero", action="store_true", help="also run phase III without the contrastive term")
    args = ap.parse_args()

    variants = {"III-a0": None} if args.alpha_zero else {}
    rows = []
    for seed in range(args.seeds):
        res = run_seed(CorpusConfig(), seed, variants=variants)
        tags = list(res.reports)
        row = [100 * res.eer(t) for t in tags]
        rows.append(row)
        print(f"seed {seed}  " + "  ".join(f"{t}={v:6.2f}" for t, v in zip(tags, row)), flush=True)
        known = res.reports["III"].mean_eer("known")
        unseen = res.reports["III"].mean_eer("dev-only")
        print(f"        phase III per-method mean: known={100 * known:.2f} dev-only={100 * unseen:.2f}")
    mean = np.mean(rows, axis=0)
    print("mean    " + "  ".join(f"{t}={v:6.2f}" for t, v in zip(tags, mean)))


if __name__ == "__main__":
    main()
