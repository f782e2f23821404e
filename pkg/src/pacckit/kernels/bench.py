"""Side-by-side timing of the numpy and numba kernel backends.

Run as ``python -m pacckit.kernels.bench``. Each kernel is timed on batch
shapes matching a real training step; the numba column includes neither the
first-call compile (warmed up beforehand) nor allocation of the inputs.

For an end-to-end comparison, run any pipeline command twice with
PACCKIT_NUMBA=0 and =1 -- backend selection is an import-time env flag.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from . import available_backends, get_impl


def _time_call(fn, args, repeat: int, number: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / number)
    return best


def _cases(batch: int, d_in: int, d_out: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((batch, d_in))
    w = rng.standard_normal((d_out, d_in))
    b = rng.standard_normal(d_out)
    gy = rng.standard_normal((batch, d_out))
    z = rng.standard_normal((batch, d_out))
    s = 1.0 / (1.0 + np.exp(-rng.standard_normal(batch)))
    y = (rng.random(batch) < 0.1).astype(np.float64)
    n_params = d_in * d_out
    p = rng.standard_normal(n_params)
    g = rng.standard_normal(n_params)
    m = np.zeros(n_params)
    v = np.zeros(n_params)
    return [
        ("dense_forward", (x, w, b)),
        ("dense_backward", (x, w, gy)),
        ("relu", (z,)),
        ("relu_backward", (z, gy)),
        ("sigmoid", (z, 1e-7)),
        ("sigmoid_backward", (s, s.copy(), 1e-7)),
        ("bce_mean", (s, y)),
        ("bce_grad_mean", (s, y)),
        ("adam_step", (p, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8)),
    ]


def run(batch: int = 256, d_in: int = 32, d_out: int = 32,
        repeat: int = 5, number: int = 200, seed: int = 0) -> None:
    backends = available_backends()
    impls = {name: get_impl(name) for name in backends}
    cases = _cases(batch, d_in, d_out, seed)

    # Warm up JIT compilation before timing.
    for name, args in cases:
        for impl in impls.values():
            getattr(impl, name)(*args)

    print(f"batch={batch} d_in={d_in} d_out={d_out} "
          f"(best of {repeat} x {number} calls, microseconds per call)")
    cols = "".join(f"{b:>12}" for b in backends)
    print(f"{'kernel':<18}{cols}{'speedup' if len(backends) > 1 else '':>10}")
    for name, args in cases:
        times = {}
        for b in backends:
            times[b] = _time_call(getattr(impls[b], name), args, repeat, number)
        row = f"{name:<18}" + "".join(f"{times[b] * 1e6:>12.2f}" for b in backends)
        if len(backends) > 1:
            row += f"{times['numpy'] / times['numba']:>9.2f}x"
        print(row)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="kernel backend benchmark")
    parser.add_argument("--batch", type=int, default=256)
    parser.add_argument("--d-in", type=int, default=32)
    parser.add_argument("--d-out", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=200)
    args = parser.parse_args(argv)
    run(args.batch, args.d_in, args.d_out, args.repeat, args.number)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
