"""Differentiable numeric primitives and the Adam optimizer.

Each primitive returns its forward value together with a vector-Jacobian
closure: call the closure with the upstream gradient to get the gradients of
the inputs. There is no computation graph or tape; the model chains the
closures by hand in reverse order. Everything runs in float64, and every
primitive accepts either a single vector or a 2-D batch of row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import (
    DegenerateInputError,
    InvalidArgumentError,
    NumericFailureError,
    ShapeError,
)

# Norms at or below this are refused rather than silently stabilized:
# surfacing a degenerate embedding beats masking it.
EPS_NORM = 1e-12


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def apply_linear(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, Callable]:
    """Affine map ``y = x @ weight.T + bias`` with ``weight`` of shape (out, in).

    The closure maps an upstream gradient ``g`` to ``(g_x, g_weight, g_bias)``.
    """
    x = _as_f64(x)
    weight = _as_f64(weight)
    bias = _as_f64(bias)
    if weight.ndim != 2 or bias.shape != (weight.shape[0],):
        raise ShapeError(
            f"weight must be 2-D with bias of length weight.shape[0]; "
            f"got weight {weight.shape}, bias {bias.shape}"
        )
    if x.ndim not in (1, 2) or x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f"input with last dimension {weight.shape[1]} required, got {x.shape}"
        )
    y = x @ weight.T + bias

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g = _as_f64(g)
        if g.shape != y.shape:
            raise ShapeError(f"upstream gradient {g.shape} != output {y.shape}")
        if x.ndim == 1:
            return g @ weight, np.outer(g, x), g.copy()
        return g @ weight, g.T @ x, g.sum(axis=0)

    return y, vjp


def apply_relu(x: np.ndarray) -> tuple[np.ndarray, Callable]:
    """Elementwise ``max(0, x)``; the subgradient at 0 is 0."""
    x = _as_f64(x)
    mask = x > 0
    y = np.where(mask, x, 0.0)

    def vjp(g: np.ndarray) -> np.ndarray:
        return _as_f64(g) * mask

    return y, vjp


def apply_dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool
) -> tuple[np.ndarray, Callable]:
    """Inverted dropout: zero each element with probability ``rate`` and scale
    survivors by ``1/(1-rate)`` so evaluation mode is the identity.

    ``rate=0`` is the identity and consumes no random numbers.
    """
    x = _as_f64(x)
    if not (0.0 <= rate < 1.0):
        raise InvalidArgumentError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, lambda g: _as_f64(g)
    if rng is None:
        raise InvalidArgumentError("training-mode dropout requires an rng")

    scale = 1.0 / (1.0 - rate)
    mask = (rng.random(x.shape) >= rate) * scale
    y = x * mask

    def vjp(g: np.ndarray) -> np.ndarray:
        return _as_f64(g) * mask

    return y, vjp


def l2_normalize(x: np.ndarray) -> tuple[np.ndarray, Callable]:
    """Scale a vector (or each row of a batch) to unit Euclidean norm.

    Refuses inputs with norm <= EPS_NORM. The closure applies the exact
    Jacobian ``(I - y y^T) / ||x||`` per row.
    """
    x = _as_f64(x)
    if x.ndim not in (1, 2):
        raise ShapeError(f"expected 1-D or 2-D input, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms <= EPS_NORM):
        raise DegenerateInputError(
            f"cannot normalize vector with norm <= {EPS_NORM}"
        )
    y = x / norms

    def vjp(g: np.ndarray) -> np.ndarray:
        g = _as_f64(g)
        inner = np.sum(g * y, axis=-1, keepdims=True)
        return (g - inner * y) / norms

    return y, vjp


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> tuple[float, Callable]:
    """Cosine of the angle between two vectors, in [-1, 1], with exact gradients."""
    a = _as_f64(a)
    b = _as_f64(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"expected equal-length vectors, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na <= EPS_NORM or nb <= EPS_NORM:
        raise DegenerateInputError(f"cannot take cosine of vector with norm <= {EPS_NORM}")
    cos = float(np.clip(a @ b / (na * nb), -1.0, 1.0))

    def vjp(g: float) -> tuple[np.ndarray, np.ndarray]:
        ga = g * (b / (na * nb) - cos * a / na**2)
        gb = g * (a / (na * nb) - cos * b / nb**2)
        return ga, gb

    return cos, vjp


def softmax_cross_entropy(
    logits: np.ndarray, true_class: int | np.ndarray
) -> tuple[float | np.ndarray, Callable]:
    """Negative log softmax probability of the true class, max-shifted for stability.

    Accepts a single logit vector with an int label or a (batch, classes) array
    with a label per row; returns a scalar or a per-row loss vector. The closure
    returns ``(softmax - one_hot) * g``.
    """
    logits = _as_f64(logits)
    single = logits.ndim == 1
    z = logits[None, :] if single else logits
    if z.ndim != 2:
        raise ShapeError(f"expected 1-D or 2-D logits, got shape {logits.shape}")
    classes = np.atleast_1d(np.asarray(true_class, dtype=np.int64))
    if classes.shape != (z.shape[0],):
        raise InvalidArgumentError(
            f"need one class index per logit row, got {classes.shape} for {z.shape}"
        )
    n = z.shape[1]
    if np.any(classes < 0) or np.any(classes >= n):
        raise InvalidArgumentError(
            f"class indices must lie in [0, {n}), got {classes.tolist()}"
        )

    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    losses = log_norm - shifted[rows, classes]
    probs = np.exp(shifted - log_norm[:, None])

    def vjp(g) -> np.ndarray:
        g = np.atleast_1d(_as_f64(g))
        if g.shape != (z.shape[0],):
            raise ShapeError(f"upstream gradient must have shape {(z.shape[0],)}")
        grad = probs.copy()
        grad[rows, classes] -= 1.0
        grad *= g[:, None]
        return grad[0] if single else grad

    return (float(losses[0]) if single else losses), vjp


def grad_check(
    fn: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
    point: dict[str, np.ndarray],
    step: float = 1e-6,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``fn`` maps a dict of arrays to ``(scalar value, dict of gradients)`` and
    must be deterministic. Returns the maximum relative error over all
    coordinates, with denominator ``max(|analytic|, |numeric|, 1e-8)``. The
    caller is responsible for picking points away from non-differentiable loci
    (ReLU kinks, zero norms).
    """
    point = {name: _as_f64(arr).copy() for name, arr in point.items()}
    _, grads = fn(point)
    worst = 0.0
    for name, arr in point.items():
        if name not in grads:
            raise InvalidArgumentError(f"fn returned no gradient for {name!r}")
        analytic = _as_f64(grads[name])
        if analytic.shape != arr.shape:
            raise ShapeError(
                f"gradient for {name!r} has shape {analytic.shape}, expected {arr.shape}"
            )
        flat = arr.reshape(-1)
        flat_grad = analytic.reshape(-1)
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + step
            f_plus, _ = fn(point)
            flat[idx] = saved - step
            f_minus, _ = fn(point)
            flat[idx] = saved
            numeric = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(flat_grad[idx]), abs(numeric), 1e-8)
            worst = max(worst, abs(flat_grad[idx] - numeric) / denom)
    return worst


@dataclass
class ParamTensor:
    """A named trainable array with an accumulated gradient of the same shape."""

    name: str
    values: np.ndarray
    grad: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.values = _as_f64(self.values)
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        else:
            self.grad = _as_f64(self.grad)
            if self.grad.shape != self.values.shape:
                raise ShapeError(
                    f"grad shape {self.grad.shape} != values shape {self.values.shape}"
                )

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


@dataclass
class AdamState:
    """Adam moments plus the exponentially decaying learning-rate schedule.

    The effective learning rate at epoch ``e`` is ``base_lr * decay_rate**e``;
    ``step_count`` advances by exactly one per optimizer step.
    """

    base_lr: float
    decay_rate: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.base_lr > 0:
            raise InvalidArgumentError(f"base_lr must be > 0, got {self.base_lr}")
        if not (0.0 < self.decay_rate <= 1.0):
            raise InvalidArgumentError(
                f"decay_rate must be in (0, 1], got {self.decay_rate}"
            )

    def learning_rate(self, epoch: int) -> float:
        return self.base_lr * self.decay_rate**epoch


def adam_step(
    params: Iterable[ParamTensor], state: AdamState, epoch: int = 0
) -> None:
    """One Adam update with bias correction over all params, then zero the grads.

    Raises NumericFailureError naming the parameter if its gradient holds NaN
    or Inf, or if an update would make its values non-finite.
    """
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericFailureError(f"non-finite gradient in parameter {p.name!r}")

    lr = state.learning_rate(epoch)
    t = state.step_count + 1
    for p in params:
        m = state.first_moment.setdefault(p.name, np.zeros_like(p.values))
        v = state.second_moment.setdefault(p.name, np.zeros_like(p.values))
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad**2
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        if not np.all(np.isfinite(p.values)):
            raise NumericFailureError(f"non-finite values in parameter {p.name!r}")
        p.zero_grad()
    state.step_count = t
