"""
Adam with bias correction, applied per named parameter block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor
from .exceptions import NumericalException, ValidationException

logger = logging.getLogger(__name__)

DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPSILON = 1e-8


@dataclass
class AdamState:
    """
    Moment estimates for one parameter block.

    ``t`` counts completed steps; the update that runs at ``t`` uses ``t + 1``
    for bias correction.
    """

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.00025
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        if self.m.shape != self.v.shape:
            raise ValidationException("Adam moments must have the same shape")
        if self.t < 0:
            raise ValidationException(f"Adam step count must be >= 0, got {self.t}")
        if self.lr < 0:
            raise ValidationException(f"Learning rate must be >= 0, got {self.lr}")

    @classmethod
    def zeros_like(
        cls,
        param: Tensor,
        lr: float,
        beta1: float = DEFAULT_BETA1,
        beta2: float = DEFAULT_BETA2,
        eps: float = DEFAULT_EPSILON,
    ) -> "AdamState":
        return cls(
            m=np.zeros_like(param.data),
            v=np.zeros_like(param.data),
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(
    param: Tensor,
    grad: Optional[np.ndarray],
    state: AdamState,
    block: str = "param",
) -> Tuple[Tensor, AdamState]:
    """
    Apply one Adam update to ``param`` in place and advance ``state``.

    A missing gradient counts as zero.

    Raises:
        NumericalException: If the gradient holds NaN or Inf.
    """
    if grad is None:
        grad = np.zeros_like(param.data)
    if grad.shape != param.shape:
        raise ValidationException(
            f"Gradient shape {grad.shape} does not match parameter {block} {param.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise NumericalException("Non-finite gradient", block=block)

    step = state.t + 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1**step)
    v_hat = state.v / (1.0 - state.beta2**step)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    param.data -= update.astype(param.dtype)
    state.t = step
    return param, state


class Adam:
    """
    Adam over an ordered list of named parameter blocks.

    step() validates every gradient before touching any parameter, so a NaN in
    one block leaves all blocks unchanged.
    """

    def __init__(
        self,
        named_params: Sequence[Tuple[str, Tensor]],
        lr: float,
        beta1: float = DEFAULT_BETA1,
        beta2: float = DEFAULT_BETA2,
        eps: float = DEFAULT_EPSILON,
    ) -> None:
        if not named_params:
            raise ValidationException("Adam needs at least one parameter block")
        self.named_params: List[Tuple[str, Tensor]] = list(named_params)
        self.states: Dict[str, AdamState] = {
            name: AdamState.zeros_like(param, lr, beta1, beta2, eps)
            for name, param in self.named_params
        }

    @property
    def lr(self) -> float:
        return next(iter(self.states.values())).lr

    @property
    def params(self) -> List[Tensor]:
        return [param for _, param in self.named_params]

    def zero_grad(self) -> None:
        for _, param in self.named_params:
            param.grad = None

    def step(self) -> None:
        for name, param in self.named_params:
            if param.grad is not None and not np.all(np.isfinite(param.grad)):
                raise NumericalException("Non-finite gradient", block=name)
        for name, param in self.named_params:
            adam_step(param, param.grad, self.states[name], block=name)
