"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from lightsb_ou import _pykernels

try:
    from lightsb_ou import _core
except ImportError:
    _core = None


def cases(rng):
    K, d, B = 30, 2, 128
    logits = rng.normal(size=K)
    means = rng.normal(size=(K, d))
    log_diag = 0.3 * rng.normal(size=(K, d))
    A = rng.normal(size=(B, d)) * 10
    Y = rng.normal(size=(B, d))
    X1, X2 = rng.normal(size=(4000, 2)), rng.normal(size=(4000, 2))
    return {
        "loss+grad K=30 B=128": lambda m: m.mixture_loss_grad(logits, means, log_diag, 0.1, A, Y),
        "pair distance 4000x4000": lambda m: m.mean_pairwise_distance(X1, X2),
        "pair gaussian 4000x4000": lambda m: m.mean_pairwise_gaussian(X1, X2, 0.5),
    }


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if _core is None:
        print("compiled extension not built; only the numpy fallback is available")
    print(f"{'kernel':<26} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in cases(np.random.default_rng(0)).items():
        n = 200 if name.startswith("loss") else 2
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=n, repeat=args.repeat)) / n
        if _core is None:
            print(f"{name:<26} {t_py * 1e3:>10.3f} {'-':>10} {'-':>8}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_core), number=n, repeat=args.repeat)) / n
        print(f"{name:<26} {t_py * 1e3:>10.3f} {t_c * 1e3:>10.3f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
