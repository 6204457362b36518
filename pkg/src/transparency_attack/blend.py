"""Alpha-layer optimization.

The human-visible composite of a stored background ``B'`` (already scaled)
with opacity ``alpha`` over a white canvas is ``alpha * B' + (1 - alpha)``.
:func:`optimize` fits ``alpha`` so that composite matches a target image by
projected Adam descent on the mean squared error. :func:`closed_form_alpha`
gives the exact per-pixel minimizer and exists to check the iterative path.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError
from .imgio import DEFAULT_SIZE, check_grid, same_shape

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlendConfig:
    size: Tuple[int, int] = DEFAULT_SIZE
    steps: int = 1000
    learning_rate: float = 0.01
    background_scale: float = 0.5
    log_interval: int = 100
    filename_tag: str = "_blended"
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.size) != 2 or min(self.size) < 1:
            raise ValueError(f"size must be two positive ints, got {self.size}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.background_scale <= 1:
            raise ValueError("background_scale must lie in (0, 1]")
        if self.log_interval < 1:
            raise ValueError("log_interval must be >= 1")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be unsigned")
        object.__setattr__(self, "size", (int(self.size[0]), int(self.size[1])))

    def digest(self) -> str:
        """Stable short hash of every field."""
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, alpha: np.ndarray, **hyper) -> "OptimizerState":
        return cls(m=np.zeros_like(alpha), v=np.zeros_like(alpha), **hyper)


@dataclass
class LossTrace:
    entries: List[Tuple[int, float]] = field(default_factory=list)

    def record(self, step: int, loss: float) -> None:
        if self.entries and step <= self.entries[-1][0]:
            raise ValueError("trace steps must be strictly increasing")
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss {loss} at step {step}")
        self.entries.append((int(step), float(loss)))

    @property
    def final_loss(self) -> Optional[float]:
        return self.entries[-1][1] if self.entries else None


def white_like(grid: np.ndarray) -> np.ndarray:
    return np.ones_like(np.asarray(grid, dtype=np.float64))


def blend(alpha: np.ndarray, bg_scaled: np.ndarray, white: np.ndarray | None = None) -> np.ndarray:
    alpha = check_grid(alpha, "alpha")
    bg_scaled = check_grid(bg_scaled, "bg_scaled")
    if white is None:
        white = white_like(alpha)
    white = check_grid(white, "white")
    same_shape(alpha, bg_scaled, white)
    return alpha * bg_scaled + (1.0 - alpha) * white


def mse_loss(blended: np.ndarray, target: np.ndarray) -> float:
    blended = check_grid(blended, "blended")
    target = check_grid(target, "target")
    same_shape(blended, target)
    return float(np.mean((blended - target) ** 2))


def grad_alpha(alpha: np.ndarray, bg_scaled: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of ``mse_loss(blend(alpha, bg_scaled), target)`` w.r.t. alpha."""
    target = check_grid(target, "target")
    blended = blend(alpha, bg_scaled)
    same_shape(blended, target)
    return (blended - target) * _slope(np.asarray(bg_scaled, dtype=np.float64))


def _slope(bg_scaled: np.ndarray) -> np.ndarray:
    # d(blend)/d(alpha) = B' - 1, times the 2/N of the mean squared error
    return (2.0 / bg_scaled.size) * (bg_scaled - 1.0)


def _adam_update(m, v, alpha, grad, t, lr, beta1, beta2, eps, scratch):
    """In-place Adam update of ``m``, ``v`` and ``alpha`` for step ``t`` (1-based)."""
    m *= beta1
    np.multiply(grad, 1.0 - beta1, out=scratch)
    m += scratch
    v *= beta2
    np.multiply(grad, 1.0 - beta2, out=scratch)
    scratch *= grad
    v += scratch
    # alpha -= lr * m_hat / (sqrt(v_hat) + eps)
    np.divide(v, 1.0 - beta2**t, out=scratch)
    np.sqrt(scratch, out=scratch)
    scratch += eps
    np.divide(m, scratch, out=scratch)
    scratch *= lr / (1.0 - beta1**t)
    alpha -= scratch
    np.maximum(alpha, 0.0, out=alpha)
    np.minimum(alpha, 1.0, out=alpha)


def adam_step(
    state: OptimizerState, alpha: np.ndarray, grad: np.ndarray, learning_rate: float
) -> Tuple[OptimizerState, np.ndarray]:
    """One bias-corrected Adam update followed by projection onto [0, 1].

    Returns new state and alpha; the inputs are left untouched.
    """
    alpha = check_grid(alpha, "alpha")
    grad = check_grid(grad, "grad")
    same_shape(alpha, grad, state.m, state.v)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    m, v, new_alpha = state.m.copy(), state.v.copy(), alpha.copy()
    t = state.t + 1
    _adam_update(m, v, new_alpha, grad, t, learning_rate, state.beta1, state.beta2, state.epsilon, np.empty_like(alpha))
    return OptimizerState(m, v, t, state.beta1, state.beta2, state.epsilon), new_alpha


def optimize(
    target: np.ndarray, background: np.ndarray, cfg: BlendConfig = BlendConfig(), label: str = ""
) -> Tuple[np.ndarray, LossTrace]:
    """Fit the alpha layer hiding ``background`` behind ``target``.

    ``background`` is the unscaled hidden image; it is multiplied by
    ``cfg.background_scale`` before blending. Starting from a fully opaque
    layer, each iteration blends, measures the loss, and takes one Adam step.
    The loss is recorded every ``cfg.log_interval`` iterations (measured before
    that iteration's update) and once more for the final alpha at step
    ``cfg.steps``.
    """
    target = check_grid(target, "target")
    background = check_grid(background, "background")
    same_shape(target, background)
    bg_scaled = background * cfg.background_scale
    white = white_like(bg_scaled)

    # Pixels never interact except through the shared 1/N, so pixels with the
    # same (target, background) values follow bit-identical trajectories. Each
    # distinct pair is optimized once and scattered back when the loss is logged.
    pairs = np.stack([target.ravel() + 0.0, bg_scaled.ravel() + 0.0], axis=1)
    unique, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    tgt_u, bg_u = unique[:, 0].copy(), unique[:, 1].copy()
    slope = (2.0 / target.size) * (bg_u - 1.0)

    alpha = np.ones_like(tgt_u)
    state = OptimizerState.zeros_like(alpha)
    trace = LossTrace()
    residual = np.empty_like(alpha)
    grad = np.empty_like(alpha)
    scratch = np.empty_like(alpha)
    for step in range(cfg.steps):
        np.multiply(alpha, bg_u, out=residual)
        np.subtract(1.0, alpha, out=grad)  # (1 - alpha) * white
        residual += grad
        residual -= tgt_u
        if step % cfg.log_interval == 0:
            loss = float(np.mean(residual[inverse] ** 2))
            trace.record(step, loss)  # raises on NaN/inf, which clipping would not clear
            logger.info("%s step %d loss %.6g", label, step, loss)
        np.multiply(residual, slope, out=grad)
        _adam_update(
            state.m, state.v, alpha, grad, step + 1, cfg.learning_rate,
            state.beta1, state.beta2, state.epsilon, scratch,
        )

    alpha = alpha[inverse].reshape(target.shape)
    final = mse_loss(blend(alpha, bg_scaled, white), target)
    trace.record(cfg.steps, final)
    logger.info("%s step %d loss %.6g", label, cfg.steps, final)
    return alpha, trace


def _check_domain(bg_scaled: np.ndarray) -> None:
    if np.any(bg_scaled >= 1.0):
        raise DomainError("scaled background must be < 1 everywhere")


def closed_form_alpha(target: np.ndarray, bg_scaled: np.ndarray) -> np.ndarray:
    """Exact per-pixel minimizer ``clip((1 - T) / (1 - B'), 0, 1)``."""
    target = check_grid(target, "target")
    bg_scaled = check_grid(bg_scaled, "bg_scaled")
    same_shape(target, bg_scaled)
    _check_domain(bg_scaled)
    return np.clip((1.0 - target) / (1.0 - bg_scaled), 0.0, 1.0)


def feasibility_report(target: np.ndarray, bg_scaled: np.ndarray) -> Tuple[float, float]:
    """Return (share of exactly reachable pixels, best achievable MSE).

    A pixel is reachable when ``T >= B'``; otherwise the composite cannot get
    darker than ``B'`` and the minimum residual is ``B' - T``.
    """
    closed_form_alpha(target, bg_scaled)  # validates shapes and domain
    target = np.asarray(target, dtype=np.float64)
    bg_scaled = np.asarray(bg_scaled, dtype=np.float64)
    fraction = float(np.mean(target >= bg_scaled))
    # residual of the clamped minimizer, written so reachable pixels give exactly 0
    shortfall = np.maximum(bg_scaled - target, 0.0)
    return fraction, float(np.mean(shortfall**2))
