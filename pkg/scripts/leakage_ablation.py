"""Phase II dev EER as a function of how much source style leaks through conversion.

    python scripts/leakage_ablation.py --midpoints 0.1 0.3 0.6 --seeds 5
"""

import argparse

import numpy as np

from srctrace.experiment import binomial_interval, leak_range, run_seed
from srctrace.synthcorpus import CorpusConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--midpoints", type=float, nargs="+", default=[0.1, 0.3, 0.6])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    for mid in args.midpoints:
        lo, hi = leak_range(mid)
        eers = [run_seed(CorpusConfig(leak_min=lo, leak_max=hi), s, through="II").eer("II") for s in range(args.seeds)]
        print(f"leak [{lo:.3f}, {hi:.3f}]  mean EER {100 * np.mean(eers):6.2f}  per seed "
              + " ".join(f"{100 * e:.2f}" for e in eers), flush=True)

    control = CorpusConfig(leak_min=0.0, leak_max=0.0, noise_scale=0.0)
    rep = run_seed(control, 0, through="II", allow_zero_leak=True).reports["II"]
    lo, hi = binomial_interval(rep.eer, rep.n_target + rep.n_nontarget)
    print(f"zero leak      EER {100 * rep.eer:6.2f}  95% interval [{100 * lo:.2f}, {100 * hi:.2f}]")


if __name__ == "__main__":
    main()
