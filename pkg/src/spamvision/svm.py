"""Binary SVM trained by simplified sequential minimal optimization.

The trainer sweeps the samples, picks a Lagrange multiplier that violates
its optimality condition by more than ``tol``, pairs it with a second
multiplier chosen uniformly at random, and solves the two-variable
subproblem in closed form. Training stops after ``max_passes`` consecutive
full sweeps without a change (or at a hard pass cap). Labels are {0, 1}
outside this module and mapped to {-1, +1} internally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import LabeledSet
from .errors import InvalidArgument, ShapeError
from .serialize import decode_array, encode_array

# a multiplier update smaller than this is treated as "no change"
_MIN_STEP = 1e-9

# safety cap on full sweeps so degenerate inputs cannot loop forever
_MAX_TOTAL_PASSES = 2000


@dataclass(frozen=True)
class KernelSpec:
    kind: str                 # "linear" | "rbf"
    gamma: float | None = None  # rbf only

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise InvalidArgument(f"kernel kind must be linear|rbf, got {self.kind!r}")
        if self.kind == "rbf" and (self.gamma is None or self.gamma <= 0):
            raise InvalidArgument(f"rbf kernel needs gamma > 0, got {self.gamma}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma}


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # (n_sv, d)
    duals: np.ndarray            # (n_sv,) alpha_i * y_i
    bias: float
    kernel: KernelSpec
    c: float


def kernel_eval(a, b, spec: KernelSpec) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"kernel arguments differ in shape: {a.shape} vs {b.shape}")
    if spec.kind == "linear":
        return float(a @ b)
    diff = a - b
    return float(np.exp(-spec.gamma * (diff @ diff)))


def _gram(x: np.ndarray, z: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Kernel matrix K[i, j] = k(x[i], z[j])."""
    if spec.kind == "linear":
        return x @ z.T
    sq = np.sum(x * x, axis=1)[:, None] + np.sum(z * z, axis=1)[None, :] - 2.0 * (x @ z.T)
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


def scale_gamma(x: np.ndarray) -> float:
    """The 1 / (n_features * variance) heuristic for the RBF width."""
    var = float(x.var())
    d = x.shape[1]
    if var <= 0.0:
        return 1.0 / d
    return 1.0 / (d * var)


def smo_train(
    data: LabeledSet,
    kernel: KernelSpec,
    c: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 10,
    seed: int = 0,
) -> SvmModel:
    x = np.asarray(data.x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"SVM features must be a 2-d matrix, got shape {x.shape}")
    labels = np.asarray(data.y)
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise InvalidArgument("training needs at least one sample from each class")
    y = np.where(labels == 1, 1.0, -1.0)
    m = x.shape[0]

    k = _gram(x, x, kernel)
    alpha = np.zeros(m)
    b = 0.0
    rng = np.random.default_rng(seed)

    def f(i: int) -> float:
        return float((alpha * y) @ k[:, i] + b)

    quiet_passes = 0
    total_passes = 0
    while quiet_passes < max_passes and total_passes < _MAX_TOTAL_PASSES:
        changed = 0
        for i in range(m):
            e_i = f(i) - y[i]
            r = y[i] * e_i
            if not ((r < -tol and alpha[i] < c) or (r > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(m - 1))
            if j >= i:
                j += 1
            e_j = f(j) - y[j]
            a_i, a_j = alpha[i], alpha[j]
            if y[i] != y[j]:
                low, high = max(0.0, a_j - a_i), min(c, c + a_j - a_i)
            else:
                low, high = max(0.0, a_i + a_j - c), min(c, a_i + a_j)
            if low >= high:
                continue
            eta = 2.0 * k[i, j] - k[i, i] - k[j, j]
            if eta >= 0.0:
                continue
            a_j_new = np.clip(a_j - y[j] * (e_i - e_j) / eta, low, high)
            if abs(a_j_new - a_j) < _MIN_STEP:
                continue
            a_i_new = a_i + y[i] * y[j] * (a_j - a_j_new)
            b1 = b - e_i - y[i] * (a_i_new - a_i) * k[i, i] - y[j] * (a_j_new - a_j) * k[i, j]
            b2 = b - e_j - y[i] * (a_i_new - a_i) * k[i, j] - y[j] * (a_j_new - a_j) * k[j, j]
            if 0.0 < a_i_new < c:
                b = b1
            elif 0.0 < a_j_new < c:
                b = b2
            else:
                b = (b1 + b2) / 2.0
            alpha[i], alpha[j] = a_i_new, a_j_new
            changed += 1
        quiet_passes = quiet_passes + 1 if changed == 0 else 0
        total_passes += 1

    keep = alpha > tol
    return SvmModel(
        support_vectors=x[keep].copy(),
        duals=(alpha * y)[keep].copy(),
        bias=b,
        kernel=kernel,
        c=c,
    )


def decision(model: SvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if model.support_vectors.shape[0] == 0:
        return float(model.bias)
    if x.shape != (model.support_vectors.shape[1],):
        raise ShapeError(
            f"input shape {x.shape} does not match support vectors "
            f"({model.support_vectors.shape[1]},)"
        )
    row = _gram(model.support_vectors, x[None, :], model.kernel)[:, 0]
    return float(model.duals @ row + model.bias)


def decision_batch(model: SvmModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if model.support_vectors.shape[0] == 0:
        return np.full(x.shape[0], model.bias)
    if x.shape[1] != model.support_vectors.shape[1]:
        raise ShapeError(
            f"input shape {x.shape} does not match support vectors "
            f"(n, {model.support_vectors.shape[1]})"
        )
    return _gram(x, model.support_vectors, model.kernel) @ model.duals + model.bias


def linear_weights(model: SvmModel) -> np.ndarray:
    """Primal weight vector sum(duals_i * sv_i); linear kernels only."""
    if model.kernel.kind != "linear":
        raise InvalidArgument("primal weights are only defined for the linear kernel")
    if model.support_vectors.shape[0] == 0:
        return np.zeros(0)
    return model.duals @ model.support_vectors


def svm_to_dict(model: SvmModel) -> dict:
    return {
        "kernel": model.kernel.to_dict(),
        "c": model.c,
        "bias": model.bias,
        "support_vectors": encode_array(model.support_vectors),
        "duals": encode_array(model.duals),
    }


def svm_from_dict(d: dict) -> SvmModel:
    kernel = KernelSpec(kind=d["kernel"]["kind"], gamma=d["kernel"]["gamma"])
    return SvmModel(
        support_vectors=decode_array(d["support_vectors"]),
        duals=decode_array(d["duals"]),
        bias=float(d["bias"]),
        kernel=kernel,
        c=float(d["c"]),
    )
