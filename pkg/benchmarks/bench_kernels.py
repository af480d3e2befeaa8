"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from roar.augment import hann
from roar.kernels import get_backend


def cases(rng):
    Ws = [rng.standard_normal((a, b)) for a, b in [(2, 64), (64, 64), (64, 3)]]
    bs = [rng.standard_normal(b) for b in (64, 64, 3)]
    X32, X1 = rng.standard_normal((32, 2)), rng.standard_normal((1, 2))
    dout = rng.standard_normal((32, 3))
    sig, rir = rng.standard_normal(16000), rng.standard_normal(400)
    win = hann(1024)
    return {
        "mlp_forward batch=1": lambda k: k.mlp_forward(X1, Ws, bs),
        "mlp_forward batch=32": lambda k: k.mlp_forward(X32, Ws, bs),
        "mlp fwd+bwd batch=32": lambda k: k.mlp_backward(k.mlp_forward(X32, Ws, bs), Ws, dout),
        "convolve_full 16000x400": lambda k: k.convolve_full(sig, rir),
        "linear_resample 16000": lambda k: k.linear_resample(sig, 14545, 1.1),
        "ola_stretch 16000 (WSOLA)": lambda k: k.ola_stretch(sig[:14545], 16000, 363.6, 400, win, 200),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = get_backend("python")
    try:
        cy = get_backend("cython")
    except ImportError:
        cy = None
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':28s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        number = max(1, int(0.2 / max(1e-7, timeit.timeit(lambda: fn(py), number=1))))
        t_py = min(timeit.repeat(lambda: fn(py), number=number, repeat=args.repeat)) / number
        if cy is None:
            print(f"{name:28s} {t_py * 1e6:10.1f}us")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=number, repeat=args.repeat)) / number
        print(f"{name:28s} {t_py * 1e6:10.1f}us {t_cy * 1e6:10.1f}us {t_py / t_cy:7.2f}x")


if __name__ == "__main__":
    main()
