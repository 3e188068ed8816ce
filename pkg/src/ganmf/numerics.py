"""Float64 array plumbing shared by the models: initialization, Adam, finite differences.

All training math in this package runs on plain 64-bit numpy arrays and all
gradients are hand-derived closed forms. This module carries the shared
optimizer state plus the central-difference oracle that the test suite uses
to check those closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["matmul", "glorot_uniform", "AdamState", "adam_step", "finite_diff_grad"]


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D arrays, accumulated in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def glorot_uniform(rows: int, cols: int, seed) -> np.ndarray:
    """Glorot uniform init: i.i.d. U(-L, L) with L = sqrt(6 / (rows + cols)).

    ``seed`` may be an int, a SeedSequence or a Generator. A fixed seed gives
    a bit-identical matrix on every call.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dims must be >= 1, got {rows}x{cols}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    limit = float(np.sqrt(6.0 / (rows + cols)))
    return rng.uniform(-limit, limit, size=(rows, cols))


@dataclass
class AdamState:
    """Adam accumulator for exactly one parameter array.

    beta1/beta2/epsilon are fixed at the optimizer's standard defaults; only
    the learning rate is tuned anywhere in this package.
    """

    m: np.ndarray
    v: np.ndarray
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0

    @classmethod
    def for_param(cls, param: np.ndarray, lr: float) -> "AdamState":
        return cls(
            m=np.zeros_like(param, dtype=np.float64),
            v=np.zeros_like(param, dtype=np.float64),
            lr=lr,
        )


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``param`` in place."""
    if param.shape != grad.shape:
        raise ValueError(f"grad shape {grad.shape} does not match param {param.shape}")
    if param.shape != state.m.shape:
        raise ValueError(f"state tracks shape {state.m.shape}, got param {param.shape}")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    param -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def finite_diff_grad(
    f: Callable[[np.ndarray], float], at: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, entry by entry.

    Intentionally naive; this is the independent oracle the analytic
    gradients are checked against, so it must not share code with them.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    at = np.asarray(at, dtype=np.float64)
    grad = np.zeros_like(at)
    it = np.nditer(at, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        bumped = at.copy()
        bumped[idx] = at[idx] + h
        up = float(f(bumped))
        bumped[idx] = at[idx] - h
        down = float(f(bumped))
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"non-finite loss while differencing at {idx}")
        grad[idx] = (up - down) / (2.0 * h)
    return grad
