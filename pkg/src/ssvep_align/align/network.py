"""The alignment network: spatial convolution, batch norm and two channel-wise FC layers.

Shapes, for a batch of ``B`` trials of ``C`` channels and ``T`` samples::

    x      (B, C, T)
    y1     (B, F, T)    W_s @ x + b_s          spatial filters, kernel (C, 1)
    yb     (B, F, T)    batch norm per filter row, statistics over (B, T)
    a      (B, H, T)    W_1 @ yb + b_1         mixes filters at each time point
    z      (B, H, T)    tanh(a)                identity in the linear ablation
    out    (B, C', T)   W_2 @ z + b_2

All contractions run over the channel/filter axis, one time point at a time,
so internally the batch is laid out as ``(C, B*T)`` and every layer is a
single matrix product.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import kernels
from ..errors import InvalidConfig, NonFiniteInput, ShapeMismatch, StaleCache

PARAM_NAMES = ("W_s", "b_s", "bn_gamma", "bn_beta", "W_1", "b_1", "W_2", "b_2")
STAT_NAMES = ("bn_run_mean", "bn_run_var")
ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class DanConfig:
    n_in_channels: int = 8
    n_samples: int = 375
    n_out_channels: int | None = None
    n_filters: int | None = None
    hidden_dim: int | None = None
    learning_rate: float = 5e-4
    batch_size: int = 64
    pretrain_epochs: int = 500
    finetune_epochs: int = 150
    val_fraction: float = 0.2
    seed: int = 0
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    activation: str = "tanh"

    def __post_init__(self):
        if self.n_out_channels is None:
            object.__setattr__(self, "n_out_channels", self.n_in_channels)
        if self.n_filters is None:
            object.__setattr__(self, "n_filters", self.n_in_channels)
        if self.hidden_dim is None:
            object.__setattr__(self, "hidden_dim", self.n_out_channels)
        for name in ("n_in_channels", "n_samples", "n_out_channels", "n_filters", "hidden_dim", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig("must be >= 1", field=f"dan.{name}")
        for name in ("pretrain_epochs", "finetune_epochs"):
            if int(getattr(self, name)) < 0:
                raise InvalidConfig("must be >= 0", field=f"dan.{name}")
        if not 0 < self.val_fraction < 1:
            raise InvalidConfig("must lie in (0, 1)", field="dan.val_fraction")
        if not self.learning_rate > 0:
            raise InvalidConfig("must be > 0", field="dan.learning_rate")
        if not self.bn_eps > 0:
            raise InvalidConfig("must be > 0", field="dan.bn_eps")
        if not 0 <= self.bn_momentum <= 1:
            raise InvalidConfig("must lie in [0, 1]", field="dan.bn_momentum")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfig(f"must be one of {ACTIVATIONS}", field="dan.activation")

    def to_dict(self) -> dict:
        return asdict(self)

    def param_shapes(self) -> dict:
        C, F, H, O = self.n_in_channels, self.n_filters, self.hidden_dim, self.n_out_channels
        return {
            "W_s": (F, C), "b_s": (F,), "bn_gamma": (F,), "bn_beta": (F,),
            "bn_run_mean": (F,), "bn_run_var": (F,),
            "W_1": (H, F), "b_1": (H,), "W_2": (O, H), "b_2": (O,),
        }


@dataclass(frozen=True, eq=False)
class DanModel:
    """Immutable parameter snapshot; training produces new snapshots."""

    config: DanConfig
    W_s: np.ndarray
    b_s: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_run_mean: np.ndarray
    bn_run_var: np.ndarray
    W_1: np.ndarray
    b_1: np.ndarray
    W_2: np.ndarray
    b_2: np.ndarray
    mode: str = "infer"

    def __post_init__(self):
        for name, shape in self.config.param_shapes().items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(f"{name} has shape {arr.shape}, config implies {shape}")
            if not np.all(np.isfinite(arr)):
                raise NonFiniteInput(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        if np.any(self.bn_run_var < 0):
            raise InvalidConfig("running variance must be >= 0", field="bn_run_var")
        if self.mode not in ("train", "infer"):
            raise InvalidConfig("mode must be 'train' or 'infer'", field="mode")

    @classmethod
    def init(cls, config: DanConfig, rng=None) -> "DanModel":
        """Weights ~ U(+-1/sqrt(fan_in)), biases 0, identity batch norm."""
        rng = np.random.default_rng(config.seed if rng is None else rng)
        shapes = config.param_shapes()

        def uniform(name):
            fan_in = shapes[name][1]
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shapes[name])

        F = config.n_filters
        return cls(
            config=config,
            W_s=uniform("W_s"), b_s=np.zeros(F),
            bn_gamma=np.ones(F), bn_beta=np.zeros(F),
            bn_run_mean=np.zeros(F), bn_run_var=np.ones(F),
            W_1=uniform("W_1"), b_1=np.zeros(config.hidden_dim),
            W_2=uniform("W_2"), b_2=np.zeros(config.n_out_channels),
        )

    @classmethod
    def zeros(cls, config: DanConfig) -> "DanModel":
        """All-zero weights with identity normalisation; maps everything to zero."""
        shapes = config.param_shapes()
        arrays = {n: np.zeros(s) for n, s in shapes.items()}
        arrays["bn_gamma"] = np.ones(shapes["bn_gamma"])
        arrays["bn_run_var"] = np.ones(shapes["bn_run_var"])
        return cls(config=config, **arrays)

    def params(self) -> dict:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def state(self) -> dict:
        return {n: getattr(self, n) for n in PARAM_NAMES + STAT_NAMES}

    def with_arrays(self, **arrays) -> "DanModel":
        return replace(self, **arrays)

    def copy(self) -> "DanModel":
        return replace(self, **{n: a.copy() for n, a in self.state().items()})


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, in the flat ``(features, B*T)`` layout."""

    x: np.ndarray
    xf: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    yb: np.ndarray
    z: np.ndarray
    batch_mean: np.ndarray = field(default=None)
    batch_var: np.ndarray = field(default=None)


def _as_batch(model: DanModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != model.config.n_in_channels:
        raise ShapeMismatch(
            f"expected (batch, {model.config.n_in_channels}, samples) input, got {x.shape if not single else x.shape[1:]}"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("input contains non-finite samples")
    return x, single


def to_flat(x: np.ndarray) -> np.ndarray:
    """``(B, C, T)`` -> ``(C, B*T)``."""
    b, c, t = x.shape
    return np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(c, b * t)


def from_flat(y: np.ndarray, batch: int) -> np.ndarray:
    """``(C, B*T)`` -> ``(B, C, T)``."""
    c = y.shape[0]
    return np.ascontiguousarray(y.reshape(c, batch, -1).transpose(1, 0, 2))


def dan_forward(model: DanModel, x, training: bool | None = None):
    """Run the network on one trial ``(C, T)`` or a batch ``(B, C, T)``.

    In training mode the batch-norm statistics come from the batch itself and
    are returned in the cache (``batch_mean``/``batch_var``); the model is not
    modified, see :func:`update_running_stats`. Returns ``(out, cache)``.
    """
    x, single = _as_batch(model, x)
    training = (model.mode == "train") if training is None else training
    cfg = model.config
    xf = to_flat(x)
    if training:
        # the pre-normalisation bias cancels exactly under batch statistics,
        # so it is left out here and its gradient is identically zero
        y1 = kernels.dense(model.W_s, np.zeros_like(model.b_s), xf)
        xhat, mean, var = kernels.bn_train_forward(y1, cfg.bn_eps)
        inv_std = 1.0 / np.sqrt(var + cfg.bn_eps)
        batch_mean = mean + model.b_s
    else:
        inv_std = 1.0 / np.sqrt(model.bn_run_var + cfg.bn_eps)
        xhat = kernels.dense(model.W_s, model.b_s - model.bn_run_mean, xf)
        xhat *= inv_std[:, None]
        batch_mean = var = None
    yb = xhat * model.bn_gamma[:, None]
    yb += model.bn_beta[:, None]
    z = kernels.dense(model.W_1, model.b_1, yb)
    if cfg.activation == "tanh":
        np.tanh(z, out=z)
    out = from_flat(kernels.dense(model.W_2, model.b_2, z), x.shape[0])
    cache = ForwardCache(x=x, xf=xf, xhat=xhat, inv_std=inv_std, yb=yb, z=z, batch_mean=batch_mean, batch_var=var)
    return (out[0] if single else out), cache


def update_running_stats(model: DanModel, cache: ForwardCache) -> DanModel:
    """Fold a training batch's statistics into the running estimates (unbiased variance)."""
    m = model.config.bn_momentum
    n = cache.x.shape[0] * cache.x.shape[2]
    unbiased = cache.batch_var * (n / (n - 1)) if n > 1 else cache.batch_var
    return model.with_arrays(
        bn_run_mean=(1 - m) * model.bn_run_mean + m * cache.batch_mean,
        bn_run_var=(1 - m) * model.bn_run_var + m * unbiased,
    )


def dan_loss(pred, target) -> float:
    """Squared Frobenius error per trial, averaged over the batch."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    if pred.ndim == 2:
        pred, target = pred[None], target[None]
    diff = (pred - target).reshape(-1)
    return float(np.dot(diff, diff) / pred.shape[0])


def dan_backward(model: DanModel, x, target, cache: ForwardCache, out=None) -> dict:
    """Exact gradients of :func:`dan_loss` for a training-mode forward pass.

    ``x`` must be the batch the cache was built from. ``out`` may be passed to
    skip recomputing the final layer.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if cache.batch_var is None:
        raise StaleCache("cache comes from an inference-mode pass")
    if cache.x is not x and (cache.x.shape != x.shape or not np.array_equal(cache.x, x)):
        raise StaleCache("backward called with a different batch than the cached forward pass")
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 2:
        target = target[None]
    if out is None:
        out = from_flat(kernels.dense(model.W_2, model.b_2, cache.z), x.shape[0])
    if target.shape != out.shape:
        raise ShapeMismatch(f"target {target.shape} vs output {out.shape}")

    n = x.shape[0]
    dout = to_flat(out - target)
    dout *= 2.0 / n
    dW_2, db_2, dz = kernels.dense_backward(model.W_2, cache.z, dout)
    da = kernels.tanh_backward(dz, cache.z) if model.config.activation == "tanh" else dz
    dW_1, db_1, dyb = kernels.dense_backward(model.W_1, cache.yb, da)
    dgamma = np.einsum("ij,ij->i", dyb, cache.xhat)
    dbeta = dyb.sum(axis=1)
    dy1 = kernels.bn_backward(dyb * model.bn_gamma[:, None], cache.xhat, cache.inv_std)
    dW_s, _, _ = kernels.dense_backward(model.W_s, cache.xf, dy1, need_dx=False)
    return {
        "W_s": dW_s,
        "b_s": np.zeros_like(model.b_s),
        "bn_gamma": dgamma,
        "bn_beta": dbeta,
        "W_1": dW_1,
        "b_1": db_1,
        "W_2": dW_2,
        "b_2": db_2,
    }


def predict(model: DanModel, x, batch_size: int = 256) -> np.ndarray:
    """Inference-mode outputs for a batch, evaluated in chunks."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        return np.empty((0, model.config.n_out_channels, x.shape[2]))
    parts = [dan_forward(model, x[i:i + batch_size], training=False)[0] for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(parts)
