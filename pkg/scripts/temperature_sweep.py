"""Phase III dev EER for several contrastive temperatures (and alpha = 0).

    python scripts/temperature_sweep.py --taus 0.05 0.07 0.1 --seeds 5
"""

import argparse

import numpy as np

from srctrace.experiment import run_seed
from srctrace.losses import ContrastiveConfig
from srctrace.synthcorpus import CorpusConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--taus", type=float, nargs="+", default=[0.05, 0.07, 0.1])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    variants = {f"tau={t}": ContrastiveConfig(temperature=t) for t in args.taus}
    variants["alpha=0"] = ContrastiveConfig(alpha=0.0)
    table = {}
    for seed in range(args.seeds):
        res = run_seed(CorpusConfig(), seed, variants=variants)
        for tag in ["II", *variants]:
            table.setdefault(tag, []).append(100 * res.eer(tag))
        print(f"seed {seed} done", flush=True)
    for tag, vals in table.items():
        print(f"{tag:10s} mean {np.mean(vals):6.2f}  per seed " + " ".join(f"{v:.2f}" for v in vals))


if __name__ == "__main__":
    main()
