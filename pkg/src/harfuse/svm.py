"""One-vs-rest linear SVM on standardized features.

Each class row minimizes ``mean(max(0, 1 - y (w.x + b))) + lam * (||w||^2 + b^2)``
by seeded stochastic subgradient steps of size ``1 / (lam * t)``. The intercept
is regularized like a weight on a constant feature; left free, its early
``1/lam``-sized steps are never damped and the iterate does not settle. Scores are
``W x_hat + b`` with ``x_hat`` the stored standardization of ``x``.
"""
import hashlib
from dataclasses import dataclass, field

import numpy as np

from harfuse._backend import kernels
from harfuse.container import read_container, write_container
from harfuse.errors import ContractError, DegenerateLabelsError, FormatError

MAGIC = "HFSVM1"


@dataclass(eq=False)
class SvmModel:
    W: np.ndarray
    b: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    class_names: tuple = ()
    lam: float = 1e-3
    epochs: int = 200
    seed: int = 0
    objective: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def n_classes(self):
        return self.W.shape[0]


@dataclass
class Evaluation:
    accuracy: float
    per_class: list
    confusion: np.ndarray


def _values(features):
    v = np.asarray(getattr(features, "values", features), dtype=np.float64)
    if v.ndim != 2:
        raise ContractError(f"features must be 2-D, got {v.shape}")
    return v


def hinge_objective(Xs, Y, W, b, lam):
    """Per-class objective values (C,) on standardized features."""
    margins = 1.0 - Y * (Xs @ W.T + b)
    return np.maximum(margins, 0.0).mean(axis=0) + lam * (np.sum(W * W, axis=1) + b * b)


def svm_train(features, labels, lam=1e-3, epochs=200, seed=0, n_classes=None, class_names=()):
    X = _values(features)
    y = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    if y.shape != (n,):
        raise ContractError(f"{y.shape[0]} labels for {n} samples")
    if n < 2 or np.unique(y).size < 2:
        raise DegenerateLabelsError("SVM training needs at least 2 samples from 2 classes")
    if lam <= 0 or epochs < 1:
        raise ContractError("lam must be > 0 and epochs >= 1")
    C = int(n_classes or y.max() + 1)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Xs = np.ascontiguousarray((X - mean) / scale)
    Y = -np.ones((n, C))
    Y[np.arange(n), y] = 1.0
    W = np.zeros((C, X.shape[1]))
    b = np.zeros(C)
    rng = np.random.default_rng(seed)
    t = 0
    history = np.zeros((epochs, C))
    for e in range(epochs):
        order = rng.permutation(n).astype(np.int64)
        t = kernels.hinge_sgd_epoch(Xs, Y, order, float(lam), W, b, t)
        history[e] = hinge_objective(Xs, Y, W, b, lam)
    return SvmModel(W, b, mean, scale, tuple(class_names), float(lam), int(epochs), int(seed), history)


def svm_score(model, x):
    """Scores ``W x_hat + b`` for one vector (C,) or a batch (n, C)."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.shape[-1] != model.W.shape[1]:
        raise ContractError(f"expected {model.W.shape[1]} features, got {x.shape[-1]}")
    return ((x - model.mean) / model.scale) @ model.W.T + model.b


def predict(model, features):
    """Argmax class per row; ties go to the lowest class index."""
    return np.argmax(np.atleast_2d(svm_score(model, _values(features))), axis=1)


def evaluate(model, features, labels):
    X = _values(features)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise ContractError("cannot evaluate on an empty set")
    pred = predict(model, X)
    C = model.n_classes
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    rows = confusion.sum(axis=1)
    per_class = [float(confusion[i, i] / rows[i]) if rows[i] else None for i in range(C)]
    return Evaluation(float(np.trace(confusion) / confusion.sum()), per_class, confusion)


def save_model(model, path):
    header = {"kind": "svm", "class_names": list(model.class_names), "lam": model.lam, "epochs": model.epochs, "seed": model.seed}
    blocks = [("W", model.W), ("b", model.b), ("mean", model.mean), ("scale", model.scale), ("objective", model.objective)]
    write_container(path, MAGIC, header, blocks)


def load_model(path):
    header, a = read_container(path, MAGIC)
    try:
        return SvmModel(
            a["W"], a["b"], a["mean"], a["scale"], tuple(header["class_names"]),
            float(header["lam"]), int(header["epochs"]), int(header["seed"]), a["objective"],
        )
    except KeyError as exc:
        raise FormatError(f"{path}: incomplete SVM container ({exc})") from exc


def model_digest(model):
    h = hashlib.sha256()
    for arr in (model.W, model.b, model.mean, model.scale):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
