"""One-hidden-layer surrogate network, confidence ranking and constrained gradient mutation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

from .constants import (
    BATCH_SIZE,
    EPOCHS,
    GRAD_EPSILON,
    GRAD_STEP_SIZE,
    GRAD_STEPS,
    HIDDEN_SIZE,
    LEARNING_RATE,
    PROJECTION_MAX_SWEEPS,
    PROJECTION_TOL,
    TH_CONF2,
)
from .dedup import ViolationArchive
from .grammar import SearchSpaceSchema, denormalize, normalized_constraints

logger = logging.getLogger(__name__)

OUTPUTS = ("logistic", "linear")

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class SurrogateParams:
    hidden_size: int = HIDDEN_SIZE
    epochs: int = EPOCHS
    batch_size: int = BATCH_SIZE
    learning_rate: float = LEARNING_RATE

    def __post_init__(self) -> None:
        if self.hidden_size < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("hidden_size, epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class MlpModel:
    """``f(x) = out(w2 . relu(W1 x + b1) + b2)`` with a logistic or linear output."""

    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    output: str = "logistic"
    target_mean: float = 0.0
    target_scale: float = 1.0
    degenerate: bool = False
    final_loss: float = float("nan")

    @property
    def hidden_size(self) -> int:
        return self.W1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    def _hidden(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pre = X @ self.W1.T + self.b1
        return pre, np.maximum(pre, 0.0)

    def logits(self, X: np.ndarray) -> np.ndarray:
        _, h = self._hidden(np.atleast_2d(X))
        return h @ self.w2 + self.b2

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Confidence of a violation (logistic) or the predicted value (linear), one per row."""
        z = self.logits(X)
        if self.output == "logistic":
            return expit(z)
        return z * self.target_scale + self.target_mean

    def predict(self, x: np.ndarray) -> float:
        return float(self.forward(np.asarray(x, dtype=float)[None, :])[0])

    def grad_input(self, x: np.ndarray) -> np.ndarray:
        """Exact gradient of ``forward`` with respect to one input vector."""
        x = np.asarray(x, dtype=float)
        pre, h = self._hidden(x[None, :])
        dz_dx = self.W1.T @ (self.w2 * (pre[0] > 0))
        if self.output == "logistic":
            s = expit(h[0] @ self.w2 + self.b2)
            return s * (1.0 - s) * dz_dx
        return self.target_scale * dz_dx


def init_model(
    input_dim: int, hidden_size: int, rng: np.random.Generator, output: str = "logistic"
) -> MlpModel:
    if output not in OUTPUTS:
        raise ValueError(f"unknown output {output!r}; expected one of {OUTPUTS}")
    # He initialization for the rectifier layer
    W1 = rng.standard_normal((hidden_size, input_dim)) * math.sqrt(2.0 / max(input_dim, 1))
    w2 = rng.standard_normal(hidden_size) * math.sqrt(1.0 / hidden_size)
    return MlpModel(W1, np.zeros(hidden_size), w2, 0.0, output)


def _loss_and_grads(model: MlpModel, X: np.ndarray, y: np.ndarray):
    pre, h = model._hidden(X)
    z = h @ model.w2 + model.b2
    if model.output == "logistic":
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        dz = (expit(z) - y) / len(y)
    else:
        loss = float(np.mean((z - y) ** 2))
        dz = 2.0 * (z - y) / len(y)
    dw2 = h.T @ dz
    db2 = float(dz.sum())
    dpre = np.outer(dz, model.w2) * (pre > 0)
    dW1 = dpre.T @ X
    db1 = dpre.sum(axis=0)
    return loss, (dW1, db1, dw2, db2)


def train(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    params: Optional[SurrogateParams] = None,
    *,
    output: str = "logistic",
) -> MlpModel:
    """Fit a fresh network with Adam on minibatches.

    Args:
        X: Normalized inputs, one row per sample.
        y: Binary labels for a logistic output, real targets for a linear output.
        rng: Source of the initial weights and the per-epoch shuffles.
        params: Network size and optimizer settings.
        output: ``"logistic"`` (cross-entropy) or ``"linear"`` (mean squared error).

    Returns:
        The trained model. A logistic model trained on single-class labels is flagged
        ``degenerate``.
    """
    params = params or SurrogateParams()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) < 2 or len(X) != len(y):
        raise ValueError(f"need >= 2 matching samples, got X={X.shape} y={y.shape}")

    model = init_model(X.shape[1], params.hidden_size, rng, output)
    target = y
    if output == "linear":
        model.target_mean = float(y.mean())
        model.target_scale = float(y.std()) or 1.0
        target = (y - model.target_mean) / model.target_scale
    elif len(np.unique(y)) < 2:
        model.degenerate = True
        logger.warning("surrogate trained on single-class labels (all %g)", y[0])

    weights = [model.W1, model.b1, model.w2]
    m = [np.zeros_like(p) for p in weights] + [0.0]
    v = [np.zeros_like(p) for p in weights] + [0.0]
    t = 0
    loss = float("nan")
    for _epoch in range(params.epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), params.batch_size):
            batch = order[start : start + params.batch_size]
            loss, grads = _loss_and_grads(model, X[batch], target[batch])
            t += 1
            lr_t = (
                params.learning_rate
                * math.sqrt(1.0 - _ADAM_BETA2**t)
                / (1.0 - _ADAM_BETA1**t)
            )
            for i, g in enumerate(grads):
                m[i] = _ADAM_BETA1 * m[i] + (1.0 - _ADAM_BETA1) * g
                v[i] = _ADAM_BETA2 * v[i] + (1.0 - _ADAM_BETA2) * g * g
                update = lr_t * m[i] / (np.sqrt(v[i]) + _ADAM_EPS)
                if i < 3:
                    weights[i] -= update
                else:
                    model.b2 = float(model.b2 - update)
    model.final_loss, _ = _loss_and_grads(model, X, target)
    logger.debug(
        "trained %s surrogate on %d samples: loss %.4f (last batch %.4f)",
        output,
        len(X),
        model.final_loss,
        loss,
    )
    return model


# === Ranking ===


def compute_th_conf1(confidences: np.ndarray, violation_fraction: float) -> float:
    """Confidence at rank ``ceil(0.25 * p * N)`` of the descending sort, rank clamped to [1, N].

    ``violation_fraction`` is ``p`` as a fraction in [0, 1].
    """
    conf = np.sort(np.asarray(confidences, dtype=float).ravel())[::-1]
    if conf.size == 0:
        raise ValueError("confidences must be non-empty")
    n = conf.size
    rank = min(max(math.ceil(round(0.25 * violation_fraction * n, 9)), 1), n)
    return float(conf[rank - 1])


def rank_and_select(model: MlpModel, candidates: np.ndarray, s: int) -> np.ndarray:
    """Indices of the ``s`` most confident candidates; ties keep candidate order."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if s > len(candidates):
        raise ValueError(f"cannot select {s} of {len(candidates)} candidates")
    conf = model.forward(candidates)
    return np.argsort(-conf, kind="stable")[:s]


# === Constrained gradient mutation ===


@dataclass(frozen=True)
class GradMutationParams:
    th_conf1: float = 0.0
    th_conf2: float = TH_CONF2
    n: int = GRAD_STEPS
    lam: float = GRAD_STEP_SIZE
    epsilon: float = GRAD_EPSILON
    stop_on_drop: bool = False
    x_min: Optional[np.ndarray] = field(default=None, compare=False)
    x_max: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must be in (0, 1]")
        if not 0.0 < self.th_conf2 < 1.0:
            raise ValueError("th_conf2 must be in (0, 1)")
        if self.n < 0:
            raise ValueError("n must be >= 0")

    @classmethod
    def for_schema(cls, schema: SearchSpaceSchema, **kwargs) -> "GradMutationParams":
        """Bounds in normalized space; fields with a single value are pinned at 0."""
        upper = schema.changeable_mask.astype(float)
        return cls(x_min=np.zeros(schema.dim), x_max=upper, **kwargs)


def _constraint_excess(d: np.ndarray, A: np.ndarray, slack: np.ndarray) -> float:
    if A.size == 0:
        return 0.0
    return float(max(0.0, (A @ d - slack).max()))


def project_perturbation(
    dx: np.ndarray,
    x: np.ndarray,
    A: np.ndarray,
    c: np.ndarray,
    epsilon: float,
    lower: np.ndarray | float = 0.0,
    upper: np.ndarray | float = 1.0,
    *,
    tol: float = PROJECTION_TOL,
    max_sweeps: int = PROJECTION_MAX_SWEEPS,
) -> np.ndarray:
    """Euclidean projection of ``dx`` onto the perturbations keeping ``x + d`` feasible.

    The feasible set is the box ``max(lower - x, -eps) <= d <= min(upper - x, eps)``
    intersected with the half-spaces ``A (x + d) <= c``. Dykstra's alternating projection
    runs until the largest residual is within ``tol``.
    """
    dx = np.asarray(dx, dtype=float)
    x = np.asarray(x, dtype=float)
    lo = np.maximum(lower - x, -epsilon)
    hi = np.minimum(upper - x, epsilon)
    A = np.atleast_2d(np.asarray(A, dtype=float)) if np.size(A) else np.empty((0, dx.size))
    slack = np.maximum(np.asarray(c, dtype=float) - A @ x, 0.0) if A.size else np.empty(0)
    row_norm2 = (A * A).sum(axis=1) if A.size else np.empty(0)

    d = dx.copy()
    if A.size == 0:
        return np.clip(d, lo, hi)

    # one Dykstra correction per set: the box, then each half-space
    p_box = np.zeros_like(d)
    p_half = np.zeros((len(A), d.size))
    for _sweep in range(max_sweeps):
        previous = d.copy()
        y = np.clip(d + p_box, lo, hi)
        p_box = d + p_box - y
        d = y
        for j, a in enumerate(A):
            if row_norm2[j] == 0.0:
                continue
            z = d + p_half[j]
            excess = a @ z - slack[j]
            y = z - (excess / row_norm2[j]) * a if excess > 0 else z
            p_half[j] = z - y
            d = y
        box_excess = float(max(0.0, (d - hi).max(), (lo - d).max()))
        residual = max(box_excess, _constraint_excess(d, A, slack))
        if residual <= tol and np.abs(d - previous).max() <= tol:
            break

    # d = 0 is feasible, so shrinking towards it always restores feasibility
    d = np.clip(d, lo, hi)
    excess = A @ d - slack
    if (excess > 0).any():
        ad = A @ d
        over = excess > 0
        d = d * float(np.min(slack[over] / ad[over]))
    return d


def gradient_mutate(
    x: np.ndarray,
    model: MlpModel,
    params: GradMutationParams,
    archive: Optional[ViolationArchive] = None,
    schema: Optional[SearchSpaceSchema] = None,
) -> np.ndarray:
    """Ascend the surrogate confidence from ``x`` (normalized) without leaving the grammar.

    Points already above ``th_conf1`` are returned unchanged. Each step moves by
    ``lam * grad``, clips to the bounds and to ``|dx| <= epsilon``, and projects the
    perturbation back onto the linear constraints. Iteration stops when a step would land
    on a point similar to an archived violation or once confidence exceeds ``th_conf2``.
    With ``stop_on_drop`` it also stops before a step that lowers the confidence.
    """
    x = np.asarray(x, dtype=float)
    if model.predict(x) > params.th_conf1:
        return x.copy()

    x_min = np.zeros_like(x) if params.x_min is None else params.x_min
    x_max = np.ones_like(x) if params.x_max is None else params.x_max
    if schema is not None:
        A, c = normalized_constraints(schema)
    else:
        A, c = np.empty((0, x.size)), np.empty(0)
    check_archive = archive is not None and len(archive) > 0

    dx = np.zeros_like(x)
    confidence = model.predict(x)
    for _ in range(params.n):
        current = x + dx
        moved = np.clip(current + params.lam * model.grad_input(current), x_min, x_max)
        d = np.clip(moved - x, -params.epsilon, params.epsilon)
        if A.size and (A @ (x + d) - c > PROJECTION_TOL).any():
            d = project_perturbation(d, x, A, c, params.epsilon, x_min, x_max)
        if check_archive and not archive.is_unique(denormalize(x + d, archive.schema)):
            break
        new_confidence = model.predict(x + d)
        if not math.isfinite(new_confidence):
            break
        if params.stop_on_drop and new_confidence < confidence:
            break
        dx, confidence = d, new_confidence
        if confidence > params.th_conf2:
            break
    return x + dx


# === Checkpoints ===


def save_model(model: MlpModel, path: str | Path) -> Path:
    """Write the parameters as JSON with a ``[hidden, input]`` shape header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "shape": [model.hidden_size, model.input_dim],
        "output": model.output,
        "target_mean": model.target_mean,
        "target_scale": model.target_scale,
        "degenerate": model.degenerate,
        "W1": model.W1.ravel().tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.tolist(),
        "b2": model.b2,
    }
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def load_model(path: str | Path) -> MlpModel:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    hidden, k = data["shape"]
    return MlpModel(
        W1=np.asarray(data["W1"], dtype=float).reshape(hidden, k),
        b1=np.asarray(data["b1"], dtype=float),
        w2=np.asarray(data["w2"], dtype=float),
        b2=float(data["b2"]),
        output=data.get("output", "logistic"),
        target_mean=float(data.get("target_mean", 0.0)),
        target_scale=float(data.get("target_scale", 1.0)),
        degenerate=bool(data.get("degenerate", False)),
    )
