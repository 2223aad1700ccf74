"""Time the compiled QR kernel against the numpy fallback, and Alg1 against Alg2.

Run with ``python benchmarks/bench_qr.py``. Prints a CSV table to stdout.
"""
import argparse
import sys
import timeit

import numpy as np

from stiefel_relu import linalg
from stiefel_relu.initializers import generate_alg1, generate_alg2, make_rng

SHAPES = [(16, 8), (64, 32), (64, 64), (256, 64), (512, 256), (784, 64)]
GEN_SIZES = [(8, 16), (32, 64), (64, 64), (64, 784), (256, 512)]


def best_of(fn, repeat):
    t = timeit.Timer(fn)
    number, _ = t.autorange()
    return min(t.repeat(repeat, number)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = make_rng(0)

    print("kind,shape,backend_or_method,seconds,speedup")
    backends = sorted(linalg.BACKENDS)
    if "cython" not in backends:
        print("# compiled kernel not built; timing the numpy fallback only", file=sys.stderr)
    for n, m in SHAPES:
        a = rng.standard_normal((n, m))
        times = {b: best_of(lambda b=b: linalg.qr_thin(a, backend=b), args.repeat)
                 for b in backends}
        for b in backends:
            print(f"qr,{n}x{m},{b},{times[b]:.3e},{times['python'] / times[b]:.2f}")
        ref = np.linalg.qr(a)[1]
        for b in backends:
            r = linalg.qr_thin(a, backend=b).r
            assert np.allclose(np.abs(np.diag(r)), np.abs(np.diag(ref)))
    for m, n in GEN_SIZES:
        t1 = best_of(lambda: generate_alg1(m, n, rng, check=False), args.repeat)
        t2 = best_of(lambda: generate_alg2(m, n, rng, check=False), args.repeat)
        print(f"gen,{m}x{n},alg1,{t1:.3e},1.00")
        print(f"gen,{m}x{n},alg2,{t2:.3e},{t1 / t2:.2f}")


if __name__ == "__main__":
    main()
