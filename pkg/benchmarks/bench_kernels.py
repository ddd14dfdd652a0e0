"""Compare the numba and pure-numpy kernel backends.

Each kernel is timed directly through both backends on arrays sized like a
training batch. The end-to-end number (one training phase on a synthetic
cohort) runs in a subprocess per backend, since the backend is fixed when
the package is imported.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--epochs 5]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ssvep_align.kernels import get_kernels

TRAIN_SNIPPET = """
import json, time, warnings
from ssvep_align.align import DanConfig, DanModel
from ssvep_align.align.pairs import make_training_pairs
from ssvep_align.align.training import train_phase
from ssvep_align.kernels import BACKEND
from ssvep_align.synth import SynthConfig, synth_generate

subjects = synth_generate(SynthConfig(n_subjects=2, snr_db=0.0)).subjects
pairs = make_training_pairs(subjects[0], subjects[1])
cfg = DanConfig()
train_phase(DanModel.init(cfg), pairs, 1, "pair_wise", cfg)  # warm-up and JIT compilation
start = time.perf_counter()
train_phase(DanModel.init(cfg), pairs, {epochs}, "pair_wise", cfg)
print(json.dumps({{"backend": BACKEND, "seconds": time.perf_counter() - start}}))
"""


def kernel_cases(rng):
    B, C, T, H = 64, 8, 375, 8
    cols = B * T
    X = rng.standard_normal((C, cols))
    W, b = rng.standard_normal((H, C)), rng.standard_normal(H)
    dY = rng.standard_normal((H, cols))
    z = np.tanh(dY)
    xhat = rng.standard_normal((C, cols))
    inv_std = rng.uniform(0.5, 2.0, C)
    noise = rng.standard_normal((48, C, T))
    ranks2 = 2 * np.arange(1, 26, dtype=np.int64)
    return {
        "dense": lambda k: k.dense(W, b, X),
        "dense_backward": lambda k: k.dense_backward(W, X, dY, True),
        "tanh_backward": lambda k: k.tanh_backward(dY, z),
        "bn_train_forward": lambda k: k.bn_train_forward(X, 1e-5),
        "bn_backward": lambda k: k.bn_backward(xhat, xhat, inv_std),
        "ar1_filter": lambda k: k.ar1_filter(noise, 0.9),
        "signed_rank_null_counts": lambda k: k.signed_rank_null_counts(ranks2),
    }


def best_of(fn, repeat):
    fn()  # compile or warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def train_step_seconds(backend, epochs):
    env = dict(os.environ, SSVEP_ALIGN_NUMBA="1" if backend == "numba" else "0")
    out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(epochs=epochs)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])["seconds"]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20, help="timing repetitions per kernel (best is kept)")
    parser.add_argument("--epochs", type=int, default=5, help="epochs in the end-to-end training measurement")
    args = parser.parse_args(argv)

    backends = {name: get_kernels(name) for name in ("numpy", "numba")}
    print(f"{'kernel':<26}{'numpy ms':>12}{'numba ms':>12}{'speed-up':>10}")
    for name, case in kernel_cases(np.random.default_rng(0)).items():
        t_np = best_of(lambda: case(backends["numpy"]), args.repeat)
        t_nb = best_of(lambda: case(backends["numba"]), args.repeat)
        print(f"{name:<26}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.2f}")

    t_np, t_nb = (train_step_seconds(b, args.epochs) for b in ("numpy", "numba"))
    print(f"{f'train_phase ({args.epochs} epochs)':<26}{t_np * 1e3:>12.1f}{t_nb * 1e3:>12.1f}{t_np / t_nb:>10.2f}")


if __name__ == "__main__":
    main()
