"""Median Frobenius relative error of each GEMM mode against the fp64 oracle, by size."""
import argparse

import numpy as np

from mixfp.cli import random_matrix
from mixfp.emugemm import GemmMode, gemm_report


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", default="8,32,64,128")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--scale", type=float, default=1.0)
    args = p.parse_args()

    modes = [GemmMode.NAIVE16, GemmMode.THREETERM, GemmMode.FOURTERM, GemmMode.EXACT32]
    print("n," + ",".join(m.value for m in modes))
    for n in map(int, args.sizes.split(",")):
        errs = {m: [] for m in modes}
        for seed in range(args.seeds):
            rng = np.random.default_rng(seed)
            a, b = random_matrix(rng, n, n, args.scale), random_matrix(rng, n, n, args.scale)
            for m in modes:
                errs[m].append(gemm_report(a, b, m).frobenius_rel_error_vs_oracle)
        print(f"{n}," + ",".join(f"{np.median(errs[m]):.3e}" for m in modes))


if __name__ == "__main__":
    main()
