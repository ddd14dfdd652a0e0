import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvep_align import kernels

NB = kernels.get_kernels("numba")
NP = kernels.get_kernels("numpy")


def arrays(seed, rows=5, cols=40, inner=4):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((rows, inner)), rng.standard_normal(rows), rng.standard_normal((inner, cols)),
            rng.standard_normal((rows, cols)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 9), st.integers(1, 300), st.integers(1, 9))
def test_dense_kernels_agree(seed, rows, cols, inner):
    W, b, X, dY = arrays(seed, rows, cols, inner)
    np.testing.assert_allclose(NB.dense(W, b, X), NP.dense(W, b, X), rtol=1e-12, atol=1e-12)
    for got, want in zip(NB.dense_backward(W, X, dY, True), NP.dense_backward(W, X, dY, True)):
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 9), st.integers(2, 300))
def test_bn_and_tanh_kernels_agree(seed, rows, cols):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((rows, cols)) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
    for got, want in zip(NB.bn_train_forward(Y, 1e-5), NP.bn_train_forward(Y, 1e-5)):
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)
    xhat, _, var = NP.bn_train_forward(Y, 1e-5)
    inv_std = 1 / np.sqrt(var + 1e-5)
    d = rng.standard_normal((rows, cols))
    np.testing.assert_allclose(NB.bn_backward(d, xhat, inv_std), NP.bn_backward(d, xhat, inv_std),
                               rtol=1e-10, atol=1e-12)
    z = np.tanh(Y)
    np.testing.assert_allclose(NB.tanh_backward(d, z), NP.tanh_backward(d, z), rtol=1e-12, atol=1e-15)


def test_bn_forward_normalises_rows():
    Y = np.random.default_rng(0).standard_normal((3, 500)) * 4 + 2
    xhat, mean, var = kernels.bn_train_forward(Y, 0.0)
    np.testing.assert_allclose(xhat.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(xhat.var(axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(var, Y.var(axis=1), rtol=1e-12)


def test_ar1_kernels_agree_and_match_recursion():
    e = np.random.default_rng(1).standard_normal((3, 2, 50))
    a, b = NB.ar1_filter(e, 0.9), NP.ar1_filter(e, 0.9)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    y = np.zeros(50)
    for t in range(50):
        y[t] = (0.9 * y[t - 1] if t else 0.0) + e[1, 1, t]
    np.testing.assert_allclose(a[1, 1], y, rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=20))
def test_signed_rank_counts_agree(ranks2):
    ranks2 = np.array(ranks2, dtype=np.int64)
    a, b = NB.signed_rank_null_counts(ranks2), NP.signed_rank_null_counts(ranks2)
    np.testing.assert_array_equal(a, b)
    assert a.sum() == 2 ** len(ranks2)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_kernels("fortran")


_SCRIPT = """
import numpy as np
from ssvep_align import kernels
from ssvep_align.align import DanConfig, DanModel, train_phase
from ssvep_align.align.pairs import PairSet
rng = np.random.default_rng(0)
x = rng.standard_normal((24, 4, 30)); y = rng.standard_normal((24, 4, 30))
pairs = PairSet(x, y, np.zeros(24, dtype=np.int64), np.array(["A"] * 24, dtype=object), np.arange(24))
cfg = DanConfig(n_in_channels=4, n_samples=30, batch_size=8)
best, hist = train_phase(DanModel.init(cfg), pairs, 5, "pair_wise", cfg)
print(kernels.BACKEND)
np.save({path!r}, np.concatenate([a.ravel() for a in best.state().values()] + [[h.val_loss for h in hist]]))
"""


def test_env_flag_selects_backend_and_results_agree(tmp_path):
    outputs = {}
    for flag in ("0", "1"):
        path = tmp_path / f"{flag}.npy"
        env = dict(os.environ, SSVEP_ALIGN_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _SCRIPT.format(path=str(path))], env=env,
                             capture_output=True, text=True, check=True)
        outputs[res.stdout.strip()] = np.load(path)
    assert set(outputs) == {"numpy", "numba"}
    np.testing.assert_allclose(outputs["numba"], outputs["numpy"], rtol=1e-9, atol=1e-11)
