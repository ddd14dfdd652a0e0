"""Hot inner loops, in two interchangeable flavours.

Every kernel exists as a numba-compiled loop nest and as a vectorised numpy
expression with the same signature. ``BACKEND`` names the flavour bound to the
module-level names; ``get_kernels`` returns either set explicitly, which the
tests and the benchmark use to compare them.

Array conventions: network activations are ``(features, columns)`` float64
arrays whose columns enumerate every (trial, time point) of a batch, so each
channel-wise layer is one matrix product and batch statistics are row
reductions. Contractions go through BLAS in both flavours; the numba flavour
fuses the reductions and element-wise passes around them.
"""
from types import SimpleNamespace

import numpy as np

from ._accel import NUMBA_AVAILABLE, USE_NUMBA, njit

# ---------------------------------------------------------------- numpy path


def _dense_np(W, b, X):
    out = W @ X
    out += b[:, None]
    return out


def _dense_backward_np(W, X, dY, need_dx):
    dW = dY @ X.T
    db = dY.sum(axis=1)
    dX = W.T @ dY if need_dx else np.empty((0, 0))
    return dW, db, dX


def _tanh_backward_np(dz, z):
    return dz * (1.0 - z * z)


def _bn_train_forward_np(Y, eps):
    mean = Y.mean(axis=1)
    var = Y.var(axis=1)
    xhat = Y - mean[:, None]
    xhat *= (1.0 / np.sqrt(var + eps))[:, None]
    return xhat, mean, var


def _bn_backward_np(dxhat, xhat, inv_std):
    m = dxhat.shape[1]
    s1 = dxhat.sum(axis=1)
    s2 = np.einsum("ij,ij->i", dxhat, xhat)
    out = m * dxhat - s1[:, None] - xhat * s2[:, None]
    out *= (inv_std / m)[:, None]
    return out


def _ar1_filter_np(e, coef):
    out = np.empty_like(e)
    acc = np.zeros(e.shape[:-1])
    for t in range(e.shape[-1]):
        acc = coef * acc + e[..., t]
        out[..., t] = acc
    return out


def _signed_rank_null_counts_np(ranks2):
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    reach = 0
    for r in ranks2:
        r = int(r)
        counts[r:reach + r + 1] += counts[:reach + 1].copy()
        reach += r
    return counts


# ---------------------------------------------------------------- numba path


@njit
def _dense_nb(W, b, X):
    out = np.dot(W, X)
    for o in range(out.shape[0]):
        bo = b[o]
        for j in range(out.shape[1]):
            out[o, j] += bo
    return out


@njit
def _dense_backward_nb(W, X, dY, need_dx):
    dW = np.dot(dY, X.T)
    db = np.zeros(dY.shape[0])
    for o in range(dY.shape[0]):
        acc = 0.0
        for j in range(dY.shape[1]):
            acc += dY[o, j]
        db[o] = acc
    if need_dx:
        dX = np.dot(W.T.copy(), dY)
    else:
        dX = np.empty((0, 0))
    return dW, db, dX


@njit
def _tanh_backward_nb(dz, z):
    out = np.empty_like(dz)
    for i in range(dz.shape[0]):
        for j in range(dz.shape[1]):
            zz = z[i, j]
            out[i, j] = dz[i, j] * (1.0 - zz * zz)
    return out


@njit
def _bn_train_forward_nb(Y, eps):
    n_f, m = Y.shape
    mean = np.empty(n_f)
    var = np.empty(n_f)
    xhat = np.empty_like(Y)
    for f in range(n_f):
        acc = 0.0
        for j in range(m):
            acc += Y[f, j]
        mu = acc / m
        acc = 0.0
        for j in range(m):
            d = Y[f, j] - mu
            acc += d * d
        v = acc / m
        inv = 1.0 / np.sqrt(v + eps)
        for j in range(m):
            xhat[f, j] = (Y[f, j] - mu) * inv
        mean[f] = mu
        var[f] = v
    return xhat, mean, var


@njit
def _bn_backward_nb(dxhat, xhat, inv_std):
    n_f, m = dxhat.shape
    out = np.empty_like(dxhat)
    for f in range(n_f):
        s1 = 0.0
        s2 = 0.0
        for j in range(m):
            s1 += dxhat[f, j]
            s2 += dxhat[f, j] * xhat[f, j]
        scale = inv_std[f] / m
        for j in range(m):
            out[f, j] = scale * (m * dxhat[f, j] - s1 - xhat[f, j] * s2)
    return out


@njit
def _ar1_filter_nb(e, coef):
    flat = e.reshape(-1, e.shape[-1])
    out = np.empty_like(flat)
    for r in range(flat.shape[0]):
        acc = 0.0
        for t in range(flat.shape[1]):
            acc = coef * acc + flat[r, t]
            out[r, t] = acc
    return out.reshape(e.shape)


@njit
def _signed_rank_null_counts_nb(ranks2):
    total = 0
    for r in ranks2:
        total += r
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    reach = 0
    for r in ranks2:
        # descending sweep lets the update run in place
        for s in range(reach, -1, -1):
            counts[s + r] += counts[s]
        reach += r
    return counts


# ---------------------------------------------------------------- dispatch

_NUMPY = SimpleNamespace(
    name="numpy",
    dense=_dense_np,
    dense_backward=_dense_backward_np,
    tanh_backward=_tanh_backward_np,
    bn_train_forward=_bn_train_forward_np,
    bn_backward=_bn_backward_np,
    ar1_filter=_ar1_filter_np,
    signed_rank_null_counts=_signed_rank_null_counts_np,
)

_NUMBA = SimpleNamespace(
    name="numba",
    dense=_dense_nb,
    dense_backward=_dense_backward_nb,
    tanh_backward=_tanh_backward_nb,
    bn_train_forward=_bn_train_forward_nb,
    bn_backward=_bn_backward_nb,
    ar1_filter=_ar1_filter_nb,
    signed_rank_null_counts=_signed_rank_null_counts_nb,
)


def get_kernels(backend=None):
    """Return the kernel namespace for ``"numba"``, ``"numpy"`` or the active default."""
    if backend is None:
        backend = BACKEND
    if backend == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba is not importable")
        return _NUMBA
    if backend == "numpy":
        return _NUMPY
    raise ValueError(f"unknown kernel backend {backend!r}")


BACKEND = "numba" if USE_NUMBA else "numpy"
_active = get_kernels(BACKEND)


def dense(W, b, X):
    """``W @ X + b[:, None]`` for a ``(features, columns)`` array."""
    return _active.dense(W, b, np.ascontiguousarray(X, dtype=np.float64))


def dense_backward(W, X, dY, need_dx=True):
    """Gradients of a dense layer w.r.t. its weight, bias and (optionally) input."""
    return _active.dense_backward(
        np.ascontiguousarray(W), np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(dY), need_dx
    )


def tanh_backward(dz, z):
    """Chain rule through ``z = tanh(a)``: ``dz * (1 - z**2)``."""
    return _active.tanh_backward(np.ascontiguousarray(dz), np.ascontiguousarray(z))


def bn_train_forward(Y, eps):
    """Normalise each row over its columns; returns xhat, mean and biased variance."""
    return _active.bn_train_forward(np.ascontiguousarray(Y), eps)


def bn_backward(dxhat, xhat, inv_std):
    return _active.bn_backward(np.ascontiguousarray(dxhat), np.ascontiguousarray(xhat), inv_std)


def ar1_filter(e, coef):
    """First-order recursion ``y[t] = coef * y[t-1] + e[t]`` along the last axis, zero initial state."""
    return _active.ar1_filter(np.ascontiguousarray(e, dtype=np.float64), float(coef))


def signed_rank_null_counts(ranks2):
    """Number of sign assignments reaching each rank sum.

    ``ranks2`` holds doubled (hence integral, even with ties) ranks; entry ``s``
    of the result counts the subsets of ranks whose doubled sum is ``s``.
    """
    return _active.signed_rank_null_counts(np.asarray(ranks2, dtype=np.int64))
