"""
Weight initialization and the Adam update.
"""
import math
from typing import Iterable, Tuple

import numpy as np

from core.exceptions import ConfigError
from core.tensor import ParamTensor


def glorot_uniform(shape: Tuple[int, int], rng: np.random.Generator, dtype: type) -> np.ndarray:
    """Uniform in +/- sqrt(6 / (fan_in + fan_out))"""
    fan_in, fan_out = shape
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def affine_params(c_in: int, c_out: int, rng: np.random.Generator, dtype: type,
                  name: str, zero: bool = False) -> Tuple[ParamTensor, ParamTensor]:
    """Weight [c_in, c_out] and bias [c_out]; zero=True gives an all-zero layer"""
    if zero:
        weight = np.zeros((c_in, c_out), dtype=dtype)
    else:
        weight = glorot_uniform((c_in, c_out), rng, dtype)
    return (ParamTensor(weight, name=f"{name}.weight"),
            ParamTensor(np.zeros(c_out, dtype=dtype), name=f"{name}.bias"))


def adam_step(params: Iterable[ParamTensor], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update in place; resets grads and advances step counts"""
    if lr <= 0:
        raise ConfigError(f"Adam learning rate must be positive, got {lr}")
    for param in params:
        grad = param.grad.data
        dtype = param.value.dtype.type
        t = param.step_count + 1
        m, v = param.adam_m.data, param.adam_v.data
        m *= dtype(beta1)
        m += dtype(1 - beta1) * grad
        v *= dtype(beta2)
        v += dtype(1 - beta2) * grad * grad
        m_hat = m / dtype(1 - beta1 ** t)
        v_hat = v / dtype(1 - beta2 ** t)
        param.value.data -= dtype(lr) * m_hat / (np.sqrt(v_hat) + dtype(eps))
        param.zero_grad()
        param.step_count = t
