#!/usr/bin/env python3
"""Time the minibatch-gradient kernel: numba fast path vs numpy fallback.

The kernel is the per-iteration hot spot of a simulated run (one minibatch
gradient per agent per iteration). Shapes below match the n=30 ring
experiment. Run: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from proxnet import kernels
from proxnet.data import partition_heterogeneous, synthetic_binary
from proxnet.oracle import TanhObjective

N_SAMPLES, DIM, AGENTS, BATCH = 2000, 50, 30, 16
REPEATS = 2000


def build_case():
    ds = synthetic_binary(N_SAMPLES, DIM, seed=0, margin=1.0)
    part = partition_heterogeneous(ds, AGENTS)
    objectives = [TanhObjective(ds.features[i], ds.labels[i]) for i in part.per_agent]
    feats, labs, offsets = kernels.stack_tanh_data(objectives)
    rng = np.random.default_rng(1)
    sizes = np.diff(offsets)
    batch_idx = rng.integers(0, sizes.min(), size=(AGENTS, BATCH))
    x_stack = np.ascontiguousarray(rng.standard_normal((AGENTS, DIM)))
    return feats, labs, offsets, batch_idx, x_stack


def timeit(fn, args, repeats=REPEATS):
    fn(*args)  # warm-up (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    feats, labs, offsets, batch_idx, x_stack = build_case()
    out_np = np.empty_like(x_stack)
    args_np = (feats, labs, offsets, batch_idx, x_stack, out_np)
    t_np = timeit(kernels.tanh_minibatch_grads_numpy, args_np)
    print(f"{AGENTS} agents x batch {BATCH} x dim {DIM}, {REPEATS} calls each")
    print(f"numpy fallback : {t_np * 1e6:9.2f} us/call")

    if kernels.HAVE_NUMBA:
        out_nb = np.empty_like(x_stack)
        args_nb = (feats, labs, offsets, batch_idx, x_stack, out_nb)
        t_nb = timeit(kernels.tanh_minibatch_grads, args_nb)
        print(f"numba kernel   : {t_nb * 1e6:9.2f} us/call  ({t_np / t_nb:.1f}x faster)")
        print(f"max |numba - numpy| = {np.abs(out_nb - out_np).max():.3e}")
    else:
        print("numba unavailable (or PROXNET_PURE_NUMPY set); fallback path only")


if __name__ == "__main__":
    main()
