#!/usr/bin/env python3
"""Times the compiled kernels against their numpy fallbacks.

Covers the per-kernel hot paths and one end-to-end slice (a weighted
training epoch plus a sampling pass) under each backend. Run after
building the extension:

    python benchmarks/bench_backends.py [--repeats 7]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ridkit import _pykernels, backend
from ridkit.flow import WnllConfig, build_flow, flow_sample, train_flow_wnll

try:
    from ridkit import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    p = rng.standard_normal((256, 128))
    g = rng.standard_normal((256, 128))
    m = rng.standard_normal((256, 128)) * 0.1
    v = np.abs(rng.standard_normal((256, 128))) * 0.01
    a = rng.standard_normal((4096, 2))
    s = rng.standard_normal((4096, 2))
    t = rng.standard_normal((4096, 2))
    big = rng.standard_normal((8192, 2))
    return {
        "adam_update(256x128)": lambda k: k.adam_update(p, g, m, v, 10, 1e-3, 0.9, 0.999, 1e-8, 1e-5),
        "coupling_fwd(4096x2)": lambda k: k.coupling_fwd(a, s, t, 2.0),
        "coupling_inv(4096x2)": lambda k: k.coupling_inv(a, s, t, 2.0),
        "softclamp(4096x2)": lambda k: k.softclamp(s, 2.0),
        "row_sumsq_diff(8192x2)": lambda k: k.row_sumsq_diff(big, np.flip(big, axis=0)),
    }


def end_to_end(backend_name: str, rng) -> dict[str, float]:
    backend.use(backend_name)
    x = rng.standard_normal((2000, 2))
    y = rng.standard_normal((2000, 1))
    model = build_flow(2, 1, n_blocks=6, hidden=(64, 64), seed=0)
    t0 = time.perf_counter()
    trained, _ = train_flow_wnll(model, x, y, None, WnllConfig(epochs=5, batch_size=250, seed=0))
    train_s = time.perf_counter() - t0
    t0 = time.perf_counter()
    flow_sample(trained, y[:512], 16, seed=1)
    sample_s = time.perf_counter() - t0
    return {"train_5_epochs_s": train_s, "sample_8192_s": sample_s}


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()
    if _ckernels is None:
        print("compiled kernels not built; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    print(f"{'kernel':26s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, fn in cases.items():
        t_py = best_of(lambda: fn(_pykernels), args.repeats)
        t_c = best_of(lambda: fn(_ckernels), args.repeats)
        print(f"{name:26s} {t_py * 1e6:9.1f}us {t_c * 1e6:9.1f}us {t_py / t_c:7.2f}x")
    original = backend.BACKEND_NAME
    try:
        for name in ("python", "compiled"):
            stats = end_to_end(name, np.random.default_rng(1))
            line = " ".join(f"{k}={v:.3f}" for k, v in stats.items())
            print(f"end-to-end [{name:8s}] {line}")
    finally:
        backend.use(original)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
