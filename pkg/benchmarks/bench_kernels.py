"""Compare the numba kernels with their pure-numpy twins.

    python benchmarks/bench_kernels.py [--repeat 20]

Kernel timings import both backends directly. The full training-step
timing runs once per backend in a subprocess, since the backend is fixed
at import time by BBFN_KERNELS.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    N, T, h, d = 32, 12, 16, 32
    gi = rng.normal(size=(N, T, 3 * h))
    U = rng.normal(size=(h, 3 * h)) * 0.3
    bh = np.zeros(3 * h)
    mask = np.ones((N, T), dtype=bool)
    mask[::3, 8:] = False
    dout = rng.normal(size=(N, T, h))
    x = rng.normal(size=(N * T, d))
    g, b = np.ones(d), np.zeros(d)
    s = rng.normal(size=(N * 4 * T, T))
    sm = np.ones_like(s, dtype=bool)

    def gru(k):
        return lambda: k.gru_scan_backward(dout, U, mask, False, k.gru_scan_forward(gi, U, bh, mask, False)[1])

    def ln(k):
        def run():
            y, xh, rs = k.layer_norm_forward(x, g, b, 1e-5)
            k.layer_norm_backward(y, xh, rs, g)
        return run

    def sm_(k):
        def run():
            p = k.softmax_forward(s, sm)
            k.softmax_backward(p, p)
        return run

    return {"gru_scan fwd+bwd": gru, "layer_norm fwd+bwd": ln, "softmax fwd+bwd": sm_}


def train_step_time(repeat):
    from bbfn.data import SyntheticGenSpec, generate, make_batches
    from bbfn.model import BBFN, ModelConfig
    from bbfn.optim import Adam

    recs = generate(SyntheticGenSpec(seed=0), 16)
    batch = next(make_batches(recs, 16))
    model = BBFN(ModelConfig(d=16, heads=4), seed=0).to(np.float32)
    opt = Adam(model.parameters(), lr=1e-3)

    def step():
        opt.zero_grad()
        total, _, _ = model.loss(model(batch))
        total.backward()
        opt.step()

    return best_of(step, repeat)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--train-step-only", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.train_step_only:
        print(json.dumps({"seconds": train_step_time(args.repeat)}))
        return

    from bbfn.kernels import _numba, _numpy

    rng = np.random.default_rng(0)
    print(f"{'case':24s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, make in kernel_cases(rng).items():
        t_np = best_of(make(_numpy), args.repeat)
        t_nb = best_of(make(_numba), args.repeat)
        print(f"{name:24s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.2f}")
    step = {}
    for backend in ("numpy", "numba"):
        out = subprocess.run([sys.executable, __file__, "--train-step-only", "--repeat", str(args.repeat)],
                             env={**os.environ, "BBFN_KERNELS": backend}, capture_output=True, text=True, check=True)
        step[backend] = json.loads(out.stdout)["seconds"]
    print(f"{'train step (d=16,N=16)':24s} {step['numpy'] * 1e3:10.3f} {step['numba'] * 1e3:10.3f} "
          f"{step['numpy'] / step['numba']:8.2f}")


if __name__ == "__main__":
    main()
