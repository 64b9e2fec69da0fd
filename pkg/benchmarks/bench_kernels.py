#!/usr/bin/env python3
"""Benchmark the compiled kernels against their pure-numpy twins.

Runs each hot kernel (patch gather/scatter for convolutions, the fused
optimizer update, embedding-row scatter) on workload-shaped inputs under
both backends, checks that the outputs agree, and prints a timing table.
With --end-to-end it also times one full masked-reconstruction training
step per backend in separate subprocesses, since the backend is fixed at
import time.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--quick] [--end-to-end]
"""

import argparse
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from cloudvol.tensor import _kernels_np

try:
    from cloudvol.tensor import _kernels
except ImportError:
    _kernels = None


def _time(fn, repeats):
    """Median wall time over repeats, after one warmup call."""
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def _row(name, np_time, cy_time, diff):
    speed = f"{np_time / cy_time:6.2f}x" if cy_time else "   n/a"
    cy = f"{cy_time * 1e3:10.3f}" if cy_time else "       n/a"
    print(f"{name:<42} {np_time * 1e3:10.3f} {cy} {speed} {diff:>12.3e}")


def bench_im2col(rng, repeats, quick):
    b, hw, c, k = (2, 34, 11, 3) if quick else (8, 66, 32, 3)
    xp = rng.standard_normal((b, hw, hw, c)).astype(np.float32)
    ref = _kernels_np.im2col(xp, k, 1)
    cy_time = diff = None
    if _kernels is not None:
        got = _kernels.im2col(xp, k, 1)
        diff = float(np.abs(ref - got).max())
        cy_time = _time(lambda: _kernels.im2col(xp, k, 1), repeats)
    np_time = _time(lambda: _kernels_np.im2col(xp, k, 1), repeats)
    _row(f"im2col  {b}x{hw}x{hw}x{c} k{k}", np_time, cy_time, diff or 0.0)


def bench_col2im(rng, repeats, quick):
    b, hw, c, k = (2, 34, 11, 3) if quick else (8, 66, 32, 3)
    shape = (b, hw, hw, c)
    ho = hw - k + 1
    cols = rng.standard_normal((b * ho * ho, k * k * c)).astype(np.float32)
    ref = _kernels_np.col2im(cols, shape, k, 1)
    cy_time = diff = None
    if _kernels is not None:
        got = _kernels.col2im(cols, shape, k, 1)
        diff = float(np.abs(ref - got).max())
        cy_time = _time(lambda: _kernels.col2im(cols, shape, k, 1), repeats)
    np_time = _time(lambda: _kernels_np.col2im(cols, shape, k, 1), repeats)
    _row(f"col2im  {b}x{hw}x{hw}x{c} k{k}", np_time, cy_time, diff or 0.0)


def bench_adam(rng, repeats, quick):
    n = 200_000 if quick else 2_000_000
    grad = rng.standard_normal(n).astype(np.float32)

    def make():
        return (rng.standard_normal(n).astype(np.float32),
                np.zeros(n, dtype=np.float32), np.zeros(n, dtype=np.float32))

    args = dict(lr=1.5e-4, beta1=0.9, beta2=0.999, eps=1e-8,
                bias1=0.1, bias2=0.001, weight_decay=1e-5)
    p0, m0, v0 = make()
    pn, mn, vn = p0.copy(), m0.copy(), v0.copy()
    _kernels_np.adam_step_inplace(pn, grad, mn, vn, **args)
    cy_time = diff = None
    if _kernels is not None:
        pc, mc, vc = p0.copy(), m0.copy(), v0.copy()
        _kernels.adam_step_inplace(pc, grad, mc, vc, **args)
        diff = float(max(np.abs(pn - pc).max(), np.abs(mn - mc).max(),
                         np.abs(vn - vc).max()))
        pw, mw, vw = make()
        cy_time = _time(
            lambda: _kernels.adam_step_inplace(pw, grad, mw, vw, **args),
            repeats)
    px, mx, vx = make()
    np_time = _time(
        lambda: _kernels_np.adam_step_inplace(px, grad, mx, vx, **args),
        repeats)
    _row(f"adam_step  {n:,} params", np_time, cy_time, diff or 0.0)


def bench_scatter(rng, repeats, quick):
    rows_n, table_n, d = (2_000, 256, 64) if quick else (40_000, 1024, 96)
    indices = rng.integers(0, table_n, size=rows_n)
    rows = rng.standard_normal((rows_n, d)).astype(np.float32)
    ref = np.zeros((table_n, d), dtype=np.float32)
    _kernels_np.scatter_add_rows(ref, indices, rows)
    cy_time = diff = None
    if _kernels is not None:
        got = np.zeros((table_n, d), dtype=np.float32)
        _kernels.scatter_add_rows(got, indices, rows)
        diff = float(np.abs(ref - got).max())
        tgt = np.zeros((table_n, d), dtype=np.float32)
        cy_time = _time(
            lambda: _kernels.scatter_add_rows(tgt, indices, rows), repeats)
    tgt2 = np.zeros((table_n, d), dtype=np.float32)
    np_time = _time(
        lambda: _kernels_np.scatter_add_rows(tgt2, indices, rows), repeats)
    _row(f"scatter_add  {rows_n:,} rows d{d}", np_time, cy_time, diff or 0.0)


_STEP_SNIPPET = """
import time
import numpy as np
from cloudvol.models import SwinMAE, desk_swin_config
from cloudvol.tensor.adam import Adam
from cloudvol.tensor.backend import kernel_backend

rng = np.random.default_rng(0)
model = SwinMAE(desk_swin_config(), rng)
opt = Adam(dict(model.named_parameters()))
x = rng.uniform(-1, 1, size=(4, 64, 64, 11)).astype(np.float32)
meta = rng.uniform(0, 1, size=(4, 13)).astype(np.float32)

from cloudvol.tensor.core import Tensor
loss, _ = model.loss(Tensor(x), Tensor(meta), model.sample_mask(rng))
loss.backward()
opt.step()
opt.zero_grad()

t0 = time.perf_counter()
for _ in range({steps}):
    loss, _ = model.loss(Tensor(x), Tensor(meta), model.sample_mask(rng))
    loss.backward()
    opt.step()
    opt.zero_grad()
dt = (time.perf_counter() - t0) / {steps}
print(f"{{kernel_backend()}} backend: {{dt:.3f}} s/step, loss {{float(loss.data):.6f}}")
"""


def bench_end_to_end(steps):
    print(f"\nfull training step, batch 4 at 64px ({steps} steps each):")
    for backend in ("cython", "numpy"):
        env = dict(os.environ, CLOUDVOL_KERNELS=backend)
        proc = subprocess.run(
            [sys.executable, "-c", _STEP_SNIPPET.format(steps=steps)],
            env=env, capture_output=True, text=True)
        if proc.returncode:
            print(f"  {backend}: failed\n{proc.stderr.strip()}")
        else:
            print(f"  {proc.stdout.strip()}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--quick", action="store_true",
                    help="smaller inputs, for smoke runs")
    ap.add_argument("--end-to-end", action="store_true",
                    help="also time a full training step per backend")
    args = ap.parse_args()

    if _kernels is None:
        print("compiled extension not built; timing the numpy backend only")
    rng = np.random.default_rng(12345)
    print(f"{'kernel':<42} {'numpy ms':>10} {'cython ms':>10} {'speedup':>7} "
          f"{'max|diff|':>12}")
    bench_im2col(rng, args.repeats, args.quick)
    bench_col2im(rng, args.repeats, args.quick)
    bench_adam(rng, args.repeats, args.quick)
    bench_scatter(rng, args.repeats, args.quick)
    if args.end_to_end:
        bench_end_to_end(2 if args.quick else 5)


if __name__ == "__main__":
    main()
