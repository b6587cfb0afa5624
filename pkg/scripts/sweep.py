"""Grid over config overrides for one experiment; prints posterior means per seed.

    python3 scripts/sweep.py mvn16 --seeds 0 1 --grid train.lr=0.001,0.003 train.minibatch=20,50
"""
import argparse
import itertools
import time

import numpy as np

from abcgan.config import apply_overrides, parse_value
from abcgan.experiments import default_config
from abcgan.harness import run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("experiment")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--grid", nargs="*", default=[], metavar="KEY=V1,V2")
    p.add_argument("--out", default="sweeps")
    args = p.parse_args()

    keys, values = [], []
    for item in args.grid:
        key, vals = item.split("=", 1)
        keys.append(key)
        values.append([parse_value(v) for v in vals.split(",")])
    for combo in itertools.product(*values):
        overrides = dict(zip(keys, combo))
        tag = "_".join(f"{k.split('.')[-1]}{v}" for k, v in overrides.items()) or "defaults"
        for seed in args.seeds:
            cfg = apply_overrides(default_config(args.experiment), overrides)
            start = time.perf_counter()
            rep = run(cfg, seed, f"{args.out}/{args.experiment}_{tag}_{seed}").report
            mean = np.round(list(rep["mean"].values()), 3)
            print(f"{tag} seed {seed}: mean {mean}  ({time.perf_counter() - start:.0f} s)", flush=True)


if __name__ == "__main__":
    main()
