"""Small convolutional network for 27x8 spectrogram patches, with forward
pass and backpropagation implemented in numpy.

Architecture: conv 16@3x3 -> maxpool 2x2 -> conv 32@3x3 -> maxpool 2x2
-> fc 64 -> fc 32 (ReLU throughout) -> fc 1 with sigmoid. Convolutions
use same padding, pooling uses floor semantics, so patches flow
27x8 -> 13x4 -> 6x2. Training is mini-batch SGD with momentum on a
class-weighted cross-entropy; everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FitError

INPUT_BANDS = 27
INPUT_FRAMES = 8

_PARAM_SHAPES = {
    "W1": (16, 1, 3, 3),
    "b1": (16,),
    "W2": (32, 16, 3, 3),
    "b2": (32,),
    "W3": (64, 384),
    "b3": (64,),
    "W4": (32, 64),
    "b4": (32,),
    "W5": (1, 32),
    "b5": (1,),
}


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


def _im2col(x):
    """Unfold padded 3x3 neighborhoods: (B, C, H, W) -> (B*H*W, C*9)."""
    B, C, H, Wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    # windows: (B, C, H, W, 3, 3) -> (B, H, W, C, 3, 3)
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        B * H * Wd, C * 9
    )


def _conv_forward(x, W, b):
    """3x3 convolution with same (zero) padding, as one matmul per layer."""
    B, _, H, Wd = x.shape
    n_out = W.shape[0]
    cols = _im2col(x)
    out = cols @ W.reshape(n_out, -1).T + b
    return out.reshape(B, H, Wd, n_out).transpose(0, 3, 1, 2)


def _conv_backward(dout, x, W):
    B, C, H, Wd = x.shape
    n_out = W.shape[0]
    dout_mat = dout.transpose(0, 2, 3, 1).reshape(B * H * Wd, n_out)
    cols = _im2col(x)
    dW = (dout_mat.T @ cols).reshape(W.shape)
    db = dout_mat.sum(axis=0)
    dcols = (dout_mat @ W.reshape(n_out, -1)).reshape(B, H, Wd, C, 3, 3)
    dxp = np.zeros((B, C, H + 2, Wd + 2))
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di : di + H, dj : dj + Wd] += dcols[:, :, :, :, di, dj].transpose(
                0, 3, 1, 2
            )
    return dxp[:, :, 1:-1, 1:-1], dW, db


def _pool_forward(x):
    """2x2 max pooling with floor semantics (odd trailing rows dropped)."""
    B, C, H, Wd = x.shape
    H2, W2 = H // 2, Wd // 2
    windows = (
        x[:, :, : H2 * 2, : W2 * 2]
        .reshape(B, C, H2, 2, W2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(B, C, H2, W2, 4)
    )
    arg = windows.argmax(axis=-1)  # first maximum: deterministic tie-break
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _pool_backward(dout, arg, x_shape):
    B, C, H, Wd = x_shape
    H2, W2 = H // 2, Wd // 2
    dwindows = np.zeros((B, C, H2, W2, 4))
    np.put_along_axis(dwindows, arg[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :, : H2 * 2, : W2 * 2] = (
        dwindows.reshape(B, C, H2, W2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(B, C, H2 * 2, W2 * 2)
    )
    return dx


def _forward(params, x):
    """Returns (logits, cache) for a batch shaped (B, 1, 27, 8)."""
    z1 = _conv_forward(x, params["W1"], params["b1"])
    a1 = np.maximum(z1, 0.0)
    p1, arg1 = _pool_forward(a1)
    z2 = _conv_forward(p1, params["W2"], params["b2"])
    a2 = np.maximum(z2, 0.0)
    p2, arg2 = _pool_forward(a2)
    flat = p2.reshape(len(x), -1)
    z3 = flat @ params["W3"].T + params["b3"]
    a3 = np.maximum(z3, 0.0)
    z4 = a3 @ params["W4"].T + params["b4"]
    a4 = np.maximum(z4, 0.0)
    logits = (a4 @ params["W5"].T + params["b5"])[:, 0]
    cache = (x, z1, a1, p1, arg1, z2, a2, p2, arg2, flat, z3, a3, z4, a4)
    return logits, cache


def loss_and_gradients(params, x, y, pos_weight=1.0, l2=0.0):
    """Class-weighted cross-entropy loss and backprop gradients for every
    parameter tensor; the entry point for the finite-difference check."""
    y = np.asarray(y, dtype=np.float64)
    logits, cache = _forward(params, x)
    (x0, z1, a1, p1, arg1, z2, a2, p2, arg2, flat, z3, a3, z4, a4) = cache
    sample_weight = np.where(y > 0.5, pos_weight, 1.0)
    per_sample = np.logaddexp(0.0, logits) - y * logits
    loss = float(np.mean(sample_weight * per_sample))
    for name in ("W1", "W2", "W3", "W4", "W5"):
        loss += 0.5 * l2 * float(np.sum(params[name] ** 2))

    dlogits = sample_weight * (_sigmoid(logits) - y) / len(y)
    grads = {}
    dz5 = dlogits[:, None]
    grads["W5"] = dz5.T @ a4 + l2 * params["W5"]
    grads["b5"] = dz5.sum(axis=0)
    dz4 = (dz5 @ params["W5"]) * (z4 > 0)
    grads["W4"] = dz4.T @ a3 + l2 * params["W4"]
    grads["b4"] = dz4.sum(axis=0)
    dz3 = (dz4 @ params["W4"]) * (z3 > 0)
    grads["W3"] = dz3.T @ flat + l2 * params["W3"]
    grads["b3"] = dz3.sum(axis=0)
    dp2 = (dz3 @ params["W3"]).reshape(p2.shape)
    dz2 = _pool_backward(dp2, arg2, a2.shape) * (z2 > 0)
    dp1, dW2, db2 = _conv_backward(dz2, p1, params["W2"])
    grads["W2"] = dW2 + l2 * params["W2"]
    grads["b2"] = db2
    dz1 = _pool_backward(dp1, arg1, a1.shape) * (z1 > 0)
    _, dW1, db1 = _conv_backward(dz1, x0, params["W1"])
    grads["W1"] = dW1 + l2 * params["W1"]
    grads["b1"] = db1
    return loss, grads


def init_params(seed: int) -> dict:
    """He-normal weights, zero biases, fixed draw order."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _PARAM_SHAPES.items():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)
    return params


@dataclass
class ConvNetModel:
    params: dict
    input_mean: float = 0.0
    input_std: float = 1.0
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        for name, shape in _PARAM_SHAPES.items():
            tensor = np.asarray(self.params[name], dtype=np.float64)
            if tensor.shape != shape:
                raise ValueError(f"{name} has shape {tensor.shape}, expected {shape}")
            self.params[name] = tensor

    def predict_proba(self, patches, chunk_size=2048) -> np.ndarray:
        patches = np.asarray(patches, dtype=np.float64)
        if patches.ndim == 2:
            patches = patches[None, :, :]
        if patches.shape[1:] != (INPUT_BANDS, INPUT_FRAMES):
            raise ValueError(
                f"patches must be shaped (n, {INPUT_BANDS}, {INPUT_FRAMES}), "
                f"got {patches.shape}"
            )
        x = (patches - self.input_mean) / self.input_std
        probs = np.empty(len(x))
        for lo in range(0, len(x), chunk_size):
            chunk = x[lo : lo + chunk_size][:, None, :, :]
            logits, _ = _forward(self.params, chunk)
            probs[lo : lo + chunk_size] = _sigmoid(logits)
        return probs

    def to_dict(self) -> dict:
        return {
            "params": {k: v.tolist() for k, v in self.params.items()},
            "input_mean": float(self.input_mean),
            "input_std": float(self.input_std),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ConvNetModel":
        return cls(
            params={k: np.array(v, dtype=np.float64) for k, v in data["params"].items()},
            input_mean=float(data["input_mean"]),
            input_std=float(data["input_std"]),
        )


def train_convnet(patches, y, config) -> ConvNetModel:
    """Mini-batch SGD with momentum on standardized patches.

    Patch standardization is a scalar mean/std over the training set,
    stored with the model. Raises FitError unless both classes appear.
    """
    patches = np.asarray(patches, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if patches.ndim != 3 or patches.shape[1:] != (INPUT_BANDS, INPUT_FRAMES):
        raise ValueError(f"patches must be (n, {INPUT_BANDS}, {INPUT_FRAMES})")
    if len(np.unique(y)) < 2:
        raise FitError("convnet training needs both classes present")
    mean = float(patches.mean())
    std = float(patches.std())
    if std == 0.0:
        std = 1.0
    x = ((patches - mean) / std)[:, None, :, :]
    n_pos = float(y.sum())
    pos_weight = config.class_weight
    if pos_weight is None:
        pos_weight = (len(y) - n_pos) / n_pos
    rng = np.random.default_rng(config.seed)
    params = init_params(config.seed + 1)
    velocity = {name: np.zeros_like(tensor) for name, tensor in params.items()}
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(len(y))
        epoch_loss = 0.0
        for lo in range(0, len(y), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            loss, grads = loss_and_gradients(
                params, x[batch], y[batch], pos_weight, config.l2
            )
            epoch_loss += loss * len(batch)
            for name in params:
                velocity[name] = config.momentum * velocity[name] - config.learning_rate * grads[name]
                params[name] = params[name] + velocity[name]
        history.append(epoch_loss / len(y))
    return ConvNetModel(params=params, input_mean=mean, input_std=std, loss_history=history)
