"""Per-domain CNN: two conv/ReLU/max-pool stages, a 256-unit ReLU layer and a
softmax head, trained by momentum SGD with a step learning-rate schedule.

Tensors are float64. Parameters use (filters, channels, rows, cols) layout;
activations are channels-last internally. Convolutions are valid
cross-correlations.
"""
import hashlib
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from harfuse.container import read_container, write_container
from harfuse.errors import ContractError, DegenerateLabelsError, DivergenceError, FormatError

log = logging.getLogger(__name__)

MAGIC = "HFCNN1"
PARAM_NAMES = ("conv1.W", "conv1.b", "conv2.W", "conv2.b", "fc.W", "fc.b", "cls.W", "cls.b")
WEIGHT_NAMES = ("conv1.W", "conv2.W", "fc.W", "cls.W")


@dataclass(frozen=True)
class CnnArchitecture:
    n_classes: int
    input_shape: tuple = (24, 52)
    conv1_filters: int = 50
    conv1_kernel: int = 5
    conv2_filters: int = 100
    conv2_kernel: int = 5
    pool: int = 2
    fc_units: int = 256

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        if self.n_classes < 2:
            raise ContractError(f"need at least 2 classes, got {self.n_classes}")
        self.shapes()

    def shapes(self):
        """Per-layer output shapes (C, H, W); rejects any non-exact pooling."""
        h, w = self.input_shape
        out = {}
        for name, filters, k in (("conv1", self.conv1_filters, self.conv1_kernel), ("conv2", self.conv2_filters, self.conv2_kernel)):
            h, w = h - k + 1, w - k + 1
            if h < 1 or w < 1:
                raise ContractError(f"{name} output would be empty")
            out[name] = (filters, h, w)
            if h % self.pool or w % self.pool:
                raise ContractError(f"{name} output {h}x{w} is not divisible by pool {self.pool}")
            h, w = h // self.pool, w // self.pool
            out[name.replace("conv", "pool")] = (filters, h, w)
        out["flatten"] = (self.conv2_filters * h * w,)
        out["fc"] = (self.fc_units,)
        out["cls"] = (self.n_classes,)
        return out

    def param_shapes(self):
        s = self.shapes()
        return {
            "conv1.W": (self.conv1_filters, 1, self.conv1_kernel, self.conv1_kernel),
            "conv1.b": (self.conv1_filters,),
            "conv2.W": (self.conv2_filters, self.conv1_filters, self.conv2_kernel, self.conv2_kernel),
            "conv2.b": (self.conv2_filters,),
            "fc.W": (s["flatten"][0], self.fc_units),
            "fc.b": (self.fc_units,),
            "cls.W": (self.fc_units, self.n_classes),
            "cls.b": (self.n_classes,),
        }


@dataclass(frozen=True)
class TrainConfig:
    momentum: float = 0.9
    learning_rate: float = 0.001
    lr_drop_factor: float = 0.5
    lr_drop_period: int = 10
    l2: float = 0.004
    max_epochs: int = 70
    batch_size: int = 64
    seed: int = 0
    # arithmetic type of forward/backward during training; parameters stay float64
    precision: str = "float64"

    def __post_init__(self):
        if self.max_epochs < 1 or self.batch_size < 1 or self.lr_drop_period < 1:
            raise ContractError("max_epochs, batch_size and lr_drop_period must be positive")
        if self.learning_rate <= 0 or self.l2 < 0 or not 0 <= self.momentum < 1:
            raise ContractError("invalid learning rate, l2 or momentum")
        if self.precision not in ("float64", "float32"):
            raise ContractError(f"precision must be float64 or float32, got {self.precision!r}")

    def lr_at(self, epoch):
        """Learning rate for 0-based ``epoch``."""
        return self.learning_rate * self.lr_drop_factor ** (epoch // self.lr_drop_period)


@dataclass(eq=False)
class CnnModel:
    arch: CnnArchitecture
    params: dict
    class_names: tuple = ()
    train_config: TrainConfig = field(default_factory=TrainConfig)
    history: list = field(default_factory=list)
    trained: bool = False


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """n x d features with the identity of each row."""

    values: np.ndarray
    domain: str = ""
    ids: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ContractError(f"features must be 2-D, got {v.shape}")
        ids = tuple(self.ids) if self.ids else tuple(range(v.shape[0]))
        if len(ids) != v.shape[0]:
            raise ContractError(f"{len(ids)} ids for {v.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise ContractError("feature ids contain duplicates")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "ids", ids)


def init_model(arch, seed=0, class_names=()):
    """Fan-in scaled uniform weights in +-sqrt(6 / fan_in); zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return CnnModel(arch, params, tuple(class_names))


# -- layers ---------------------------------------------------------------


def im2col(x, k):
    """(B, H, W, C) -> (B, Ho, Wo, k*k*C) patch matrix for a valid k x k window.

    Patch entries are ordered (row offset, column offset, channel).
    """
    win = sliding_window_view(x, (k, k), axis=(1, 2))
    B, Ho, Wo, C = win.shape[:4]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(B, Ho, Wo, k * k * C)


def _weight_matrix(W):
    """(F, C, k, k) filters as an (F, k*k*C) matrix matching im2col's ordering."""
    F = W.shape[0]
    return W.transpose(0, 2, 3, 1).reshape(F, -1)


def conv_forward(x, W, b):
    """Valid cross-correlation of channels-last ``x`` with (F, C, k, k) filters.

    ``out[n, i, j, f] = b[f] + sum_{c,u,v} W[f, c, u, v] * x[n, i+u, j+v, c]``.
    Returns (output (B, Ho, Wo, F), patch matrix for backward).
    """
    cols = im2col(x, W.shape[-1])
    B, Ho, Wo, K = cols.shape
    # one 2-D GEMM; a 4-D matmul would run as many small batched products
    out = cols.reshape(-1, K) @ _weight_matrix(W).T + b
    return out.reshape(B, Ho, Wo, -1), cols


def conv_backward(dout, cols, x_shape, W, need_dx=True):
    F, C, k, _ = W.shape
    B, Ho, Wo, _ = dout.shape
    d2 = dout.reshape(-1, F)
    dW = (d2.T @ cols.reshape(-1, k * k * C)).reshape(F, k, k, C).transpose(0, 3, 1, 2)
    db = d2.sum(axis=0)
    dx = None
    if need_dx:
        dcols = (d2 @ _weight_matrix(W)).reshape(B, Ho, Wo, k, k, C)
        dx = np.zeros(x_shape, dtype=dout.dtype)
        for u in range(k):
            for v in range(k):
                dx[:, u : u + Ho, v : v + Wo, :] += dcols[:, :, :, u, v, :]
    return np.ascontiguousarray(dW), db, dx


def pool_forward(x, s=2):
    """Non-overlapping s x s max pooling of (B, H, W, C); returns output and
    the argmax within each window (row-major, first max wins)."""
    B, H, W, C = x.shape
    r = x.reshape(B, H // s, s, W // s, s, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, H // s, W // s, C, s * s)
    idx = np.argmax(r, axis=-1)
    out = np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]
    return out, idx


def pool_backward(dout, idx, s=2):
    B, h, w, C = dout.shape
    d = np.zeros((B, h, w, C, s * s), dtype=dout.dtype)
    np.put_along_axis(d, idx[..., None], dout[..., None], axis=-1)
    return d.reshape(B, h, w, C, s, s).transpose(0, 1, 4, 2, 5, 3).reshape(B, h * s, w * s, C)


def _as_batch(model, batch):
    """Images as a channels-last (n, H, W, 1) float batch."""
    x = np.asarray(batch, dtype=np.float64)
    H, W = model.arch.input_shape
    if x.ndim == 4 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 3 or x.shape[1:] != (H, W):
        raise ContractError(f"batch must be (n, {H}, {W}) or (n, 1, {H}, {W}), got {np.shape(batch)}")
    return x[..., None]


def forward(model, batch, dtype=np.float64):
    """Class scores (n, C) and the cached activations needed for backprop.

    Activations are channels-last; the flatten feeding the fc layer follows
    (channel, row, column) order. ``dtype`` sets the arithmetic type.
    """
    p = {k: v.astype(dtype, copy=False) for k, v in model.params.items()}
    x = _as_batch(model, batch).astype(dtype, copy=False)
    s = model.arch.pool
    z1, c1 = conv_forward(x, p["conv1.W"], p["conv1.b"])
    a1 = np.maximum(z1, 0.0)
    p1, i1 = pool_forward(a1, s)
    z2, c2 = conv_forward(p1, p["conv2.W"], p["conv2.b"])
    a2 = np.maximum(z2, 0.0)
    p2, i2 = pool_forward(a2, s)
    flat = p2.transpose(0, 3, 1, 2).reshape(x.shape[0], -1)
    z3 = flat @ p["fc.W"] + p["fc.b"]
    fc = np.maximum(z3, 0.0)
    scores = fc @ p["cls.W"] + p["cls.b"]
    cache = {"params": p, "x": x, "c1": c1, "z1": z1, "p1": p1, "i1": i1, "c2": c2, "z2": z2, "flat": flat, "p2": p2, "i2": i2, "z3": z3, "fc": fc}
    return scores, cache


def softmax_xent(scores, labels):
    """Mean cross-entropy and its gradient w.r.t. the scores."""
    z = scores - scores.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = scores.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return loss, d / n


def backward(model, cache, dscores):
    p = cache["params"]
    s = model.arch.pool
    g = {}
    fc = cache["fc"]
    g["cls.W"] = fc.T @ dscores
    g["cls.b"] = dscores.sum(axis=0)
    dz3 = (dscores @ p["cls.W"].T) * (cache["z3"] > 0)
    g["fc.W"] = cache["flat"].T @ dz3
    g["fc.b"] = dz3.sum(axis=0)
    B, h, w, C = cache["p2"].shape
    dp2 = (dz3 @ p["fc.W"].T).reshape(B, C, h, w).transpose(0, 2, 3, 1)
    dz2 = pool_backward(dp2, cache["i2"], s) * (cache["z2"] > 0)
    g["conv2.W"], g["conv2.b"], dp1 = conv_backward(dz2, cache["c2"], cache["p1"].shape, p["conv2.W"])
    dz1 = pool_backward(dp1, cache["i1"], s) * (cache["z1"] > 0)
    g["conv1.W"], g["conv1.b"], _ = conv_backward(dz1, cache["c1"], cache["x"].shape, p["conv1.W"], need_dx=False)
    return g


def l2_penalty(model, l2):
    return 0.5 * l2 * sum(float(np.sum(model.params[n] ** 2)) for n in WEIGHT_NAMES)


def loss_and_grads(model, batch, labels, l2, dtype=np.float64):
    """(data loss, total loss, gradients of total loss). L2 applies to weights only."""
    labels = np.asarray(labels, dtype=np.int64)
    scores, cache = forward(model, batch, dtype)
    data_loss, dscores = softmax_xent(scores, labels)
    data_loss = float(data_loss)
    grads = backward(model, cache, dscores)
    if l2:
        for n in WEIGHT_NAMES:
            grads[n] = grads[n] + l2 * model.params[n]
    return data_loss, data_loss + l2_penalty(model, l2), grads, scores


def total_loss(model, batch, labels, l2):
    scores, _ = forward(model, batch)
    data_loss, _ = softmax_xent(scores, np.asarray(labels, dtype=np.int64))
    return data_loss + l2_penalty(model, l2)


# -- training ---------------------------------------------------------------


def _stack_images(images):
    if isinstance(images, np.ndarray):
        return images
    return np.stack([getattr(im, "pixels", im) for im in images])


def train(images, labels, cfg=None, n_classes=None, class_names=(), arch=None, model=None):
    """Fit a CNN with momentum SGD on softmax cross-entropy + L2.

    ``images`` is an (n, H, W) stack or a list of DomainImage. ``n_classes``
    defaults to ``max(label) + 1``. Passing ``model`` continues from its weights.
    """
    cfg = cfg or TrainConfig()
    x = _stack_images(images)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ContractError(f"{x.shape[0]} images for {y.shape[0]} labels")
    if np.unique(y).size < 2:
        raise DegenerateLabelsError("training data contains a single class")
    if model is None:
        arch = arch or CnnArchitecture(n_classes=int(n_classes or y.max() + 1), input_shape=x.shape[-2:])
        init_seed, shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(2)
        model = init_model(arch, seed=init_seed, class_names=class_names)
    else:
        shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(2)[1]
    if y.min() < 0 or y.max() >= model.arch.n_classes:
        raise ContractError("labels outside the model's class range")
    rng = np.random.default_rng(shuffle_seed)
    dtype = np.dtype(cfg.precision)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    n = x.shape[0]
    for epoch in range(cfg.max_epochs):
        lr = cfg.lr_at(epoch)
        perm = rng.permutation(n)
        sum_loss = sum_total = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                data_loss, tot, grads, scores = loss_and_grads(model, x[idx], y[idx], cfg.l2, dtype)
            if not np.isfinite(tot):
                raise DivergenceError(epoch)
            for k, g in grads.items():
                v = velocity[k]
                v *= cfg.momentum
                v -= lr * g
                model.params[k] += v
            sum_loss += data_loss * len(idx)
            sum_total += tot * len(idx)
            correct += int(np.sum(np.argmax(scores, axis=1) == y[idx]))
        if not all(np.all(np.isfinite(v)) for v in model.params.values()):
            raise DivergenceError(epoch, "non-finite parameters")
        model.history.append(
            {"epoch": epoch, "lr": float(lr), "loss": float(sum_loss / n), "total_loss": float(sum_total / n), "accuracy": correct / n}
        )
        log.debug("epoch %d lr %.6g loss %.5f acc %.3f", epoch, lr, sum_loss / n, correct / n)
    model.train_config = cfg
    model.trained = True
    return model


def gradient_check(model, batch, labels, n_params=500, h=1e-5, seed=0, names=None, l2=None):
    """Largest relative error between backprop gradients and central differences.

    Checks a seeded random subset of ``n_params`` scalar parameters drawn from
    ``names`` (all tensors by default), or every one of them if fewer exist.
    Relative error is ``|a - n| / max(|a|, |n|, 1e-6)``; the floor keeps
    near-zero gradients above the roundoff of the central difference.
    """
    l2 = model.train_config.l2 if l2 is None else l2
    _, _, grads, _ = loss_and_grads(model, batch, labels, l2)
    names = tuple(names or PARAM_NAMES)
    sizes = [model.params[k].size for k in names]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    flat = np.arange(total) if total <= n_params else np.sort(rng.choice(total, size=n_params, replace=False))
    bounds = np.cumsum([0] + sizes)
    worst = 0.0
    for f in flat:
        t = int(np.searchsorted(bounds, f, side="right") - 1)
        name, j = names[t], int(f - bounds[t])
        param = model.params[name].reshape(-1)
        old = param[j]
        param[j] = old + h
        up = total_loss(model, batch, labels, l2)
        param[j] = old - h
        down = total_loss(model, batch, labels, l2)
        param[j] = old
        num = (up - down) / (2 * h)
        ana = grads[name].reshape(-1)[j]
        err = abs(ana - num) / max(abs(ana), abs(num), 1e-6)
        worst = max(worst, err)
    return worst


def extract_features(model, images, ids=None, domain="", chunk=128):
    """Post-ReLU fully-connected activations, one row per image, order preserved."""
    if not model.trained:
        raise ContractError("extract_features needs a trained model")
    x = _as_batch(model, _stack_images(images))[..., 0]
    rows = []
    for start in range(0, x.shape[0], chunk):
        _, cache = forward(model, x[start : start + chunk])
        rows.append(cache["fc"])
    values = np.concatenate(rows) if rows else np.zeros((0, model.arch.fc_units))
    return FeatureMatrix(values, domain, tuple(ids) if ids is not None else ())


def predict(model, images):
    scores, _ = forward(model, _stack_images(images))
    return np.argmax(scores, axis=1)


# -- persistence ---------------------------------------------------------------


def save_model(model, path):
    header = {
        "kind": "cnn",
        "architecture": asdict(model.arch),
        "class_names": list(model.class_names),
        "train_config": asdict(model.train_config),
        "history": model.history,
        "trained": model.trained,
    }
    write_container(path, MAGIC, header, [(k, model.params[k]) for k in PARAM_NAMES])


def load_model(path):
    header, arrays = read_container(path, MAGIC)
    try:
        arch = CnnArchitecture(**header["architecture"])
        cfg = TrainConfig(**header["train_config"])
        expected = arch.param_shapes()
        params = {}
        for k in PARAM_NAMES:
            if arrays[k].shape != tuple(expected[k]):
                raise FormatError(f"{path}: block {k} has shape {arrays[k].shape}, expected {expected[k]}")
            params[k] = arrays[k].copy()
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: incomplete CNN header or blocks ({exc})") from exc
    return CnnModel(arch, params, tuple(header.get("class_names", ())), cfg, list(header.get("history", [])), bool(header.get("trained")))


def param_digest(model):
    """SHA-256 over all parameter bytes in declared order, for fit-hash comparisons."""
    h = hashlib.sha256()
    for k in PARAM_NAMES:
        h.update(np.ascontiguousarray(model.params[k]).tobytes())
    return h.hexdigest()
