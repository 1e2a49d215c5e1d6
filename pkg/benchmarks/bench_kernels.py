"""Compare the numba and pure-numpy kernel paths.

    python benchmarks/bench_kernels.py [--repeat 20]

Kernel timings call both implementations directly.  The end-to-end rows run
``cnn3`` forward/backward in a subprocess per backend, since the backend is
fixed at import by ``SHALLOWNET_DISABLE_NUMBA``.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from shallownet import kernels

E2E = r"""
import json, time, numpy as np
from threadpoolctl import threadpool_limits
from shallownet import nn, backend
m = nn.build_model("cnn3", 0)
one = np.random.default_rng(0).random((1, 3, 64, 64)).astype(np.float32)
batch = np.random.default_rng(1).random((32, 3, 64, 64)).astype(np.float32)
y = np.arange(32) % 2
with threadpool_limits(limits=1):
    for _ in range(5):
        nn.forward(m, one)
    t = time.perf_counter()
    for _ in range({repeat}):
        nn.forward(m, one)
    fwd = (time.perf_counter() - t) / {repeat}
    s, c = nn.forward(m, batch); nn.backward(m, c, y)
    t = time.perf_counter()
    for _ in range(3):
        s, c = nn.forward(m, batch); nn.backward(m, c, y)
    step = (time.perf_counter() - t) / 3
print(json.dumps({{"backend": backend(), "forward_1_ms": 1e3 * fwd, "train_step_32_ms": 1e3 * step}}))
"""


def timeit(fn, *args, repeat=20):
    fn(*args)  # compile / warm caches
    t = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return 1e3 * (time.perf_counter() - t) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = {
        "im2col 32x32x32x32": (kernels.im2col_nb, kernels.im2col_np,
                               (rng.random((32, 32, 32, 32), dtype=np.float32),)),
        "col2im 32x32x32x32": (kernels.col2im_nb, kernels.col2im_np,
                               (rng.random((288, 32 * 32 * 32), dtype=np.float32), 32, 32, 32, 32)),
        "maxpool 32x32x64x64": (kernels.maxpool_nb, kernels.maxpool_np,
                                (rng.random((32, 32, 64, 64), dtype=np.float32),)),
        "matmul 32x8192 @ 8192x128": (kernels.matmul_nb, kernels.matmul_np,
                                      (rng.random((32, 8192), dtype=np.float32),
                                       rng.random((8192, 128), dtype=np.float32))),
    }
    print(f"{'kernel':28} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    with threadpool_limits(limits=1):
        for name, (nb, npy, a) in cases.items():
            t_nb = timeit(nb, *a, repeat=args.repeat)
            t_np = timeit(npy, *a, repeat=max(2, args.repeat // 4))
            print(f"{name:28} {t_nb:10.2f} {t_np:10.2f} {t_np / t_nb:8.2f}")
    print()
    for flag in ("0", "1"):
        env = dict(os.environ, SHALLOWNET_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E.format(repeat=args.repeat * 5)],
                             env=env, capture_output=True, text=True, check=True)
        r = json.loads(out.stdout)
        print(f"cnn3 [{r['backend']:5}] single-image forward {r['forward_1_ms']:7.2f} ms   "
              f"batch-32 train step {r['train_step_32_ms']:8.1f} ms")


if __name__ == "__main__":
    main()
