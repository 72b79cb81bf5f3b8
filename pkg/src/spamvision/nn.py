"""Dense/convolutional network engine with explicit backpropagation.

Everything runs on float64 numpy arrays with channels-last layout: a batch
is (n, d) for dense stacks and (n, h, w, c) for convolutional ones. Batch
gradients reduce through matmul/einsum, so the summation order is fixed and
training is bit-reproducible for a given seed. Two builders cover the
supported architectures: ``build_mlp`` (two ReLU hidden layers of 128, then
a sigmoid unit) and ``build_cnn`` (three ReLU conv layers of 32/32/64
filters with 2x2 max pooling, dropout 0.5, then a sigmoid unit).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import LabeledSet
from .errors import InvalidArgument, ShapeError, StateError
from .serialize import decode_array, encode_array

LOSS_EPS = 1e-7  # prediction clamp for the cross-entropy singularity


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    validation_fraction: float = 0.15
    learning_rate: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise InvalidArgument(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "val_fraction": self.validation_fraction,
            "lr": self.learning_rate,
        }


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


def _he_uniform(rng, fan_in, shape):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _glorot_uniform(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense:
    kind = "dense"

    def __init__(self, in_dim, out_dim, rng=None, init="he"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if rng is None:
            self.weights = np.zeros((in_dim, out_dim))
        elif init == "glorot":
            self.weights = _glorot_uniform(rng, in_dim, out_dim, (in_dim, out_dim))
        else:
            self.weights = _he_uniform(rng, in_dim, (in_dim, out_dim))
        self.biases = np.zeros(out_dim)
        self.grad_weights = None
        self.grad_biases = None
        self._x = None

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"dense layer expects (n, {self.in_dim}), got {x.shape}")
        self._x = x
        return x @ self.weights + self.biases

    def backward(self, dout):
        self.grad_weights = self._x.T @ dout
        self.grad_biases = dout.sum(axis=0)
        return dout @ self.weights.T

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "out_dim": self.out_dim}


class Conv2D:
    """Valid (no padding) stride-1 cross-correlation, one bias per filter."""

    kind = "conv2d"

    def __init__(self, kernel_size, in_channels, out_channels, rng=None):
        self.kernel_size = kernel_size
        self.in_channels = in_channels
        self.out_channels = out_channels
        k = kernel_size
        fan_in = k * k * in_channels
        if rng is None:
            self.weights = np.zeros((k, k, in_channels, out_channels))
        else:
            self.weights = _he_uniform(rng, fan_in, (k, k, in_channels, out_channels))
        self.biases = np.zeros(out_channels)
        self.grad_weights = None
        self.grad_biases = None
        self._cols = None
        self._x_shape = None
        self._out_hw = None

    def forward(self, x, train=False, rng=None):
        k = self.kernel_size
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ShapeError(
                f"conv layer expects (n, h, w, {self.in_channels}), got {x.shape}"
            )
        n, h, w, _ = x.shape
        if h < k or w < k:
            raise ShapeError(f"input {x.shape} is smaller than the {k}x{k} kernel")
        out_h, out_w = h - k + 1, w - k + 1
        windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
        # (n, out_h, out_w, c, k, k) -> rows of length c*k*k
        cols = windows.reshape(n * out_h * out_w, self.in_channels * k * k)
        w_mat = self.weights.transpose(2, 0, 1, 3).reshape(self.in_channels * k * k, -1)
        out = cols @ w_mat + self.biases
        self._cols = cols
        self._x_shape = x.shape
        self._out_hw = (out_h, out_w)
        return out.reshape(n, out_h, out_w, self.out_channels)

    def backward(self, dout):
        k = self.kernel_size
        n, h, w, c = self._x_shape
        out_h, out_w = self._out_hw
        dflat = dout.reshape(-1, self.out_channels)
        gw = (self._cols.T @ dflat).reshape(self.in_channels, k, k, self.out_channels)
        self.grad_weights = gw.transpose(1, 2, 0, 3)
        self.grad_biases = dflat.sum(axis=0)
        dx = np.zeros((n, h, w, c))
        for u in range(k):
            for v in range(k):
                dx[:, u : u + out_h, v : v + out_w, :] += dout @ self.weights[u, v].T
        return dx

    def config(self) -> dict:
        return {
            "kernel_size": self.kernel_size,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
        }


class MaxPool2D:
    """2x2 window, stride 2; odd trailing rows/columns are dropped, and a
    dimension of size 1 passes through unpooled."""

    kind = "maxpool2d"
    weights = None
    biases = None

    def __init__(self):
        self._cache = None

    def forward(self, x, train=False, rng=None):
        n, h, w, c = x.shape
        ph = 2 if h >= 2 else 1
        pw = 2 if w >= 2 else 1
        out_h, out_w = h // ph, w // pw
        xt = x[:, : out_h * ph, : out_w * pw, :]
        windows = (
            xt.reshape(n, out_h, ph, out_w, pw, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(n, out_h, out_w, ph * pw, c)
        )
        arg = windows.argmax(axis=3)
        out = np.take_along_axis(windows, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        self._cache = (x.shape, ph, pw, arg)
        return out

    def backward(self, dout):
        x_shape, ph, pw, arg = self._cache
        n, h, w, c = x_shape
        out_h, out_w = dout.shape[1], dout.shape[2]
        dwin = np.zeros((n, out_h, out_w, ph * pw, c))
        np.put_along_axis(dwin, arg[:, :, :, None, :], dout[:, :, :, None, :], axis=3)
        dxt = (
            dwin.reshape(n, out_h, out_w, ph, pw, c)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(n, out_h * ph, out_w * pw, c)
        )
        dx = np.zeros(x_shape)
        dx[:, : out_h * ph, : out_w * pw, :] = dxt
        return dx

    def config(self) -> dict:
        return {}


class ReLU:
    kind = "relu"
    weights = None
    biases = None

    def __init__(self):
        self._mask = None

    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)

    def config(self) -> dict:
        return {}


class Sigmoid:
    kind = "sigmoid"
    weights = None
    biases = None

    def __init__(self):
        self._out = None

    def forward(self, x, train=False, rng=None):
        out = np.empty_like(x, dtype=np.float64)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out
        return out

    def backward(self, dout):
        return dout * self._out * (1.0 - self._out)

    def config(self) -> dict:
        return {}


class Dropout:
    """Inverted dropout: train mode zeroes each element with probability
    ``rate`` and scales survivors by 1/(1-rate); eval mode is the identity."""

    kind = "dropout"
    weights = None
    biases = None

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise InvalidArgument(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise InvalidArgument("train-mode dropout needs a random generator")
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask

    def config(self) -> dict:
        return {"rate": self.rate}


class Flatten:
    kind = "flatten"
    weights = None
    biases = None

    def __init__(self):
        self._shape = None

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)

    def config(self) -> dict:
        return {}


_LAYER_TYPES = {
    "dense": Dense,
    "conv2d": Conv2D,
    "maxpool2d": MaxPool2D,
    "relu": ReLU,
    "sigmoid": Sigmoid,
    "dropout": Dropout,
    "flatten": Flatten,
}


class NetModel:
    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self._forward_ran = False

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"model expects input shape (n, {', '.join(map(str, self.input_shape))}), "
                f"got {x.shape}"
            )
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        self._forward_ran = True
        return x

    def backward(self, dout):
        if not self._forward_ran:
            raise StateError("backward called before forward")
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self):
        """(name, layer, attribute) triples for every trainable array."""
        out = []
        for i, layer in enumerate(self.layers):
            if layer.weights is not None:
                out.append((f"layer{i}.{layer.kind}.weights", layer, "weights"))
                out.append((f"layer{i}.{layer.kind}.biases", layer, "biases"))
        return out


def bce_loss(p, y) -> float:
    """Mean binary cross-entropy; predictions clamped to [eps, 1-eps]."""
    p = np.clip(np.asarray(p, dtype=np.float64), LOSS_EPS, 1.0 - LOSS_EPS)
    y = np.asarray(y, dtype=np.float64).reshape(p.shape)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def bce_grad(p, y) -> np.ndarray:
    """Gradient of ``bce_loss`` w.r.t. the raw predictions (zero where the
    clamp is active, matching the loss actually computed)."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(p.shape)
    clamped = np.clip(p, LOSS_EPS, 1.0 - LOSS_EPS)
    grad = (clamped - y) / (clamped * (1.0 - clamped)) / p.size
    grad[(p < LOSS_EPS) | (p > 1.0 - LOSS_EPS)] = 0.0
    return grad


def predict(model: NetModel, x, batch_size: int = 256) -> np.ndarray:
    """Eval-mode scores in (0, 1), one per sample."""
    x = np.asarray(x, dtype=np.float64)
    chunks = [
        model.forward(x[i : i + batch_size], train=False)
        for i in range(0, x.shape[0], batch_size)
    ]
    return np.concatenate(chunks).reshape(-1)


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(getattr(layer, attr)) for _, layer, attr in params]
        self.v = [np.zeros_like(getattr(layer, attr)) for _, layer, attr in params]

    def step(self):
        self.t += 1
        for i, (_, layer, attr) in enumerate(self.params):
            grad = getattr(layer, "grad_" + attr)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[i] / (1.0 - self.beta1**self.t)
            v_hat = self.v[i] / (1.0 - self.beta2**self.t)
            value = getattr(layer, attr)
            value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _eval_metrics(model, x, y, batch_size):
    p = predict(model, x, batch_size)
    loss = bce_loss(p[:, None], y[:, None])
    acc = float(np.mean((p >= 0.5) == (y == 1)))
    return loss, acc


def train(model: NetModel, data: LabeledSet, cfg: TrainConfig):
    """Mini-batch Adam training with a held-out validation slice.

    The validation slice (cfg.validation_fraction of the data) is carved off
    before the first epoch; each epoch shuffles the remaining samples and
    sweeps them in batches of cfg.batch_size. Train loss/accuracy are the
    running batch averages (dropout active), validation metrics are computed
    eval-mode after each epoch. When the validation slice is empty the train
    metrics are recorded in its place. Deterministic for a given rng_seed.
    """
    n = len(data)
    if n == 0:
        raise InvalidArgument("cannot train on an empty set")
    history: list[EpochRecord] = []
    if cfg.epochs == 0:
        return model, history

    rng = np.random.default_rng(cfg.rng_seed)
    order = rng.permutation(n)
    n_val = int(n * cfg.validation_fraction)
    val_idx, fit_idx = order[:n_val], order[n_val:]
    if fit_idx.size == 0:
        raise InvalidArgument("validation split left no training samples")

    x = np.asarray(data.x, dtype=np.float64)
    y = np.asarray(data.y, dtype=np.float64)
    x_fit, y_fit = x[fit_idx], y[fit_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    optimizer = _Adam(model.parameters(), cfg.learning_rate)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(fit_idx.size)
        loss_sum = 0.0
        hit_sum = 0.0
        for start in range(0, perm.size, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            xb, yb = x_fit[batch], y_fit[batch][:, None]
            p = model.forward(xb, train=True, rng=rng)
            loss = bce_loss(p, yb)
            model.backward(bce_grad(p, yb))
            optimizer.step()
            loss_sum += loss * batch.size
            hit_sum += float(np.sum((p.reshape(-1) >= 0.5) == (yb.reshape(-1) == 1)))
        train_loss = loss_sum / perm.size
        train_acc = hit_sum / perm.size
        if val_idx.size:
            val_loss, val_acc = _eval_metrics(model, x_val, y_val, cfg.batch_size)
        else:
            val_loss, val_acc = train_loss, train_acc
        history.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))
    return model, history


def build_mlp(input_len: int, seed: int = 0) -> NetModel:
    rng = np.random.default_rng(seed)
    layers = [
        Dense(input_len, 128, rng, init="he"),
        ReLU(),
        Dense(128, 128, rng, init="he"),
        ReLU(),
        Dense(128, 1, rng, init="glorot"),
        Sigmoid(),
    ]
    return NetModel(layers, (input_len,))


def build_cnn(side: int, channels: int, seed: int = 0) -> NetModel:
    """Three conv/pool stages (32, 32, 64 filters), dropout 0.5, sigmoid unit.

    Kernels default to 3x3 but clamp to the running spatial size so small
    inputs keep every intermediate shape >= 1; pooling is a pass-through once
    a dimension reaches 1.
    """
    if side < 3:
        raise InvalidArgument(f"cnn input side must be >= 3, got {side}")
    rng = np.random.default_rng(seed)
    layers = []
    size = side
    c_in = channels
    for c_out in (32, 32, 64):
        k = min(3, size)
        layers += [Conv2D(k, c_in, c_out, rng), ReLU(), MaxPool2D()]
        size = size - k + 1
        if size >= 2:
            size //= 2
        c_in = c_out
    layers += [
        Dropout(0.5),
        Flatten(),
        Dense(size * size * 64, 1, rng, init="glorot"),
        Sigmoid(),
    ]
    return NetModel(layers, (side, side, channels))


def parameter_count(model: NetModel) -> int:
    return sum(getattr(layer, attr).size for _, layer, attr in model.parameters())


def gradient_check(model: NetModel, x, y, step: float = 1e-5, rng_seed: int = 0,
                   perturb_gradients: bool = False) -> dict:
    """Compare backprop gradients with central finite differences.

    Every forward pass re-seeds the generator so dropout masks are frozen
    across the perturbed evaluations. Returns per-group and overall maximum
    relative error, |fd - bp| / max(|fd| + |bp|, 1e-6).

    ``perturb_gradients`` injects an error into the analytic gradients; it
    exists as a negative control for the verification harness.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def loss_only():
        rng = np.random.default_rng(rng_seed)
        return bce_loss(model.forward(x, train=True, rng=rng), y)

    rng = np.random.default_rng(rng_seed)
    p = model.forward(x, train=True, rng=rng)
    model.backward(bce_grad(p, y))
    groups = model.parameters()
    analytic = [getattr(layer, "grad_" + attr).copy() for _, layer, attr in groups]
    if perturb_gradients and analytic:
        analytic[0].flat[0] += 1.0

    per_group = {}
    worst = 0.0
    for (name, layer, attr), grad in zip(groups, analytic):
        value = getattr(layer, attr)
        fd = np.zeros_like(value)
        flat = value.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss_only()
            flat[i] = orig - step
            lm = loss_only()
            flat[i] = orig
            fd_flat[i] = (lp - lm) / (2.0 * step)
        denom = np.maximum(np.abs(fd) + np.abs(grad), 1e-6)
        err = float(np.max(np.abs(fd - grad) / denom))
        per_group[name] = err
        worst = max(worst, err)
    return {"max_relative_error": worst, "per_group": per_group}


def net_to_dict(model: NetModel) -> dict:
    layers = []
    for layer in model.layers:
        entry = {"kind": layer.kind, "config": layer.config()}
        if layer.weights is not None:
            entry["weights"] = encode_array(layer.weights)
            entry["biases"] = encode_array(layer.biases)
        layers.append(entry)
    return {"input_shape": list(model.input_shape), "layers": layers}


def net_from_dict(d: dict) -> NetModel:
    layers = []
    for entry in d["layers"]:
        cls = _LAYER_TYPES[entry["kind"]]
        cfg = entry.get("config", {})
        if cls is Dense:
            layer = Dense(cfg["in_dim"], cfg["out_dim"])
        elif cls is Conv2D:
            layer = Conv2D(cfg["kernel_size"], cfg["in_channels"], cfg["out_channels"])
        elif cls is Dropout:
            layer = Dropout(cfg["rate"])
        else:
            layer = cls()
        if "weights" in entry:
            layer.weights = decode_array(entry["weights"])
            layer.biases = decode_array(entry["biases"])
        layers.append(layer)
    return NetModel(layers, tuple(d["input_shape"]))
