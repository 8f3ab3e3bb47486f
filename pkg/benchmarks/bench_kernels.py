"""Side-by-side timing of the numba-accelerated and pure-numpy kernels.

Runs each kernel on the model's real working shapes (default desk-size
training batches plus the full-size single-sample case) and reports
mean wall time per call and the speedup of the active numba path. Also
times one full training step through the whole graph on both paths.

Run:

    python benchmarks/bench_kernels.py [--repeats 20]

The env flag EEG4D_DISABLE_NUMBA only affects which path the package
itself uses; this script imports both implementations directly.
"""

import argparse
import time

import numpy as np

from eeg4d.kernels import numba_impl, numpy_impl

# (label, B, H, W, Cin, Cout, k) padded shapes as the conv op sees them
CONV_SHAPES = [
    ("desk stage1 (batch 72)", 72, 23, 23, 10, 6, 5),
    ("desk stage2 (batch 72)", 72, 23, 23, 6, 8, 5),
    ("desk stage4 (batch 72)", 72, 21, 21, 8, 6, 3),
    ("spatial gate 2->1 k7", 72, 25, 25, 2, 1, 7),
    ("full stage1 (1 sample)", 6, 23, 23, 10, 64, 5),
]


def timeit(fn, *args, repeats):
    fn(*args)                      # warm-up / JIT
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats * 1e3


def bench_conv(repeats):
    print(f"{'conv kernel':<26} {'movement':<8} {'numpy ms':>9} "
          f"{'numba ms':>9} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for label, b, h, w, cin, cout, k in CONV_SHAPES:
        xp = rng.standard_normal((b, h, w, cin)).astype(np.float32)
        kern = rng.standard_normal((k, k, cin, cout)).astype(np.float32)
        bias = np.zeros(cout, dtype=np.float32)
        g = rng.standard_normal((b, h - k + 1, w - k + 1, cout)).astype(np.float32)

        cases = [
            ("forward", (numpy_impl.conv2d_forward, (xp, kern, bias)),
             (numba_impl.conv2d_forward, (xp, kern, bias))),
            ("bwd-in", (numpy_impl.conv2d_backward_input, (g, kern, h, w)),
             (numba_impl.conv2d_backward_input, (g, kern, h, w))),
            ("bwd-k", (numpy_impl.conv2d_backward_kernel, (g, xp, k)),
             (numba_impl.conv2d_backward_kernel, (g, xp, k))),
        ]
        for name, (f_np, a_np), (f_nb, a_nb) in cases:
            ref = np.asarray(f_np(*a_np))
            acc = np.asarray(f_nb(*a_nb))
            assert np.allclose(ref, acc, rtol=1e-3, atol=1e-3), (label, name)
            t_np = timeit(f_np, *a_np, repeats=repeats)
            t_nb = timeit(f_nb, *a_nb, repeats=repeats)
            print(f"{label:<26} {name:<8} {t_np:9.2f} {t_nb:9.2f} "
                  f"{t_np / t_nb:7.2f}x")


def bench_pool(repeats):
    print(f"\n{'pool kernel':<26} {'movement':<8} {'numpy ms':>9} "
          f"{'numba ms':>9} {'speedup':>8}")
    rng = np.random.default_rng(1)
    x = rng.standard_normal((72, 19, 19, 8)).astype(np.float32)
    out, idx = numpy_impl.maxpool2x2_forward(x)
    g = rng.standard_normal(out.shape).astype(np.float32)
    t_np = timeit(numpy_impl.maxpool2x2_forward, x, repeats=repeats)
    t_nb = timeit(numba_impl.maxpool2x2_forward, x, repeats=repeats)
    print(f"{'maxpool 2x2 (batch 72)':<26} {'forward':<8} {t_np:9.2f} "
          f"{t_nb:9.2f} {t_np / t_nb:7.2f}x")
    t_np = timeit(numpy_impl.maxpool2x2_backward, g, idx, 19, 19,
                  repeats=repeats)
    t_nb = timeit(numba_impl.maxpool2x2_backward, g, idx, 19, 19,
                  repeats=repeats)
    print(f"{'maxpool 2x2 (batch 72)':<26} {'backward':<8} {t_np:9.2f} "
          f"{t_nb:9.2f} {t_np / t_nb:7.2f}x")


def bench_train_step(repeats):
    """One optimizer step (batch 12) through each kernel path."""
    import subprocess
    import sys

    code = r"""
import time
import numpy as np
import eeg4d
from eeg4d.diff import backward
from eeg4d.model import ModelConfig, forward_batch, init_params
from eeg4d.train import Adam, TrainConfig, cross_entropy_batch, synth_dataset

cfg = ModelConfig.desk()
samples = synth_dataset(per_class=4, seed=0)
xs = np.stack([s.values for s in samples])
labels = np.array([s.label for s in samples])
params = init_params(cfg, np.random.default_rng(0))
opt = Adam(params, TrainConfig(seed=0))

def step():
    params.zero_grad()
    out = forward_batch(xs, params, cfg)
    loss = cross_entropy_batch(out.pre, labels)
    backward(loss)
    opt.step(params)

step()  # warm-up
t0 = time.perf_counter()
for _ in range(%d):
    step()
dt = (time.perf_counter() - t0) / %d * 1e3
print(f"{'numba' if eeg4d.NUMBA_ACTIVE else 'numpy'} {dt:.1f}")
""" % (repeats, repeats)

    print(f"\n{'full train step (batch 12, desk config)':<44} {'ms':>9}")
    times = {}
    for disable in ("1", "0"):
        res = subprocess.run(
            [sys.executable, "-c", code],
            env={"EEG4D_DISABLE_NUMBA": disable, "PATH": "/usr/bin:/bin"},
            capture_output=True, text=True, check=True,
        )
        path, ms = res.stdout.split()[-2:]
        times[path] = float(ms)
        print(f"{'with ' + path + ' kernels':<44} {float(ms):9.1f}")
    if "numba" in times and "numpy" in times:
        print(f"{'speedup':<44} {times['numpy'] / times['numba']:8.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    bench_conv(args.repeats)
    bench_pool(args.repeats)
    bench_train_step(max(3, args.repeats // 4))


if __name__ == "__main__":
    main()
