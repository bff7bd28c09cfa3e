"""
Parameter containers and layers built on the autodiff operations.
"""

from __future__ import annotations

import math
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np

from .autodiff import (
    DEFAULT_DTYPE,
    Tensor,
    conv2d,
    conv_transpose2d,
    linear,
)
from .exceptions import CheckpointException, ValidationException


def kaiming_uniform(
    shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator, dtype: type = DEFAULT_DTYPE
) -> np.ndarray:
    """He-uniform initialisation for ReLU stacks: U(-b, b) with b = sqrt(6 / fan_in)."""
    if fan_in < 1:
        raise ValidationException(f"fan_in must be positive, got {fan_in}")
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """
    Base class for anything holding named parameters.

    Parameters and child modules are registered explicitly and iterated in
    registration order, so parameter names and checkpoint layout are stable.
    """

    def __init__(self) -> None:
        self._parameters: Dict[str, Tensor] = {}
        self._children: Dict[str, Module] = {}

    def register_parameter(self, name: str, tensor: Tensor) -> Tensor:
        if "." in name:
            raise ValidationException(f"Parameter name cannot contain '.': {name}")
        tensor.requires_grad = True
        tensor.name = name
        self._parameters[name] = tensor
        return tensor

    def add_module(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self._parameters.items():
            yield f"{prefix}{name}", tensor
        for child_name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def parameters(self) -> List[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(tensor.size for tensor in self.parameters())

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.grad = None

    def freeze(self) -> None:
        for tensor in self.parameters():
            tensor.requires_grad = False

    def unfreeze(self) -> None:
        for tensor in self.parameters():
            tensor.requires_grad = True

    @property
    def frozen(self) -> bool:
        return not any(tensor.requires_grad for tensor in self.parameters())

    def state_dict(self, prefix: str = "") -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.named_parameters(prefix)}

    def load_state_dict(self, state: Mapping[str, np.ndarray], prefix: str = "") -> None:
        """
        Copy arrays into the parameters of this module.

        Raises:
            CheckpointException: If a parameter is missing or its shape differs.
        """
        for name, tensor in self.named_parameters(prefix):
            if name not in state:
                raise CheckpointException(f"Checkpoint is missing parameter '{name}'")
            array = np.asarray(state[name])
            if array.shape != tensor.shape:
                raise CheckpointException(
                    f"Parameter '{name}' has shape {array.shape} in checkpoint,"
                    f" expected {tensor.shape}"
                )
            tensor.data[...] = array.astype(tensor.dtype)

    def copy_from(self, other: "Module") -> None:
        self.load_state_dict(other.state_dict())

    def astype(self, dtype: type) -> "Module":
        """Recast every parameter in place (gradient checks use float64)."""
        for tensor in self.parameters():
            tensor.data = tensor.data.astype(dtype)
            tensor.grad = None
        return self


class LinearLayer(Module):
    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        dtype: type = DEFAULT_DTYPE,
    ) -> None:
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self.register_parameter(
            "weight",
            Tensor(kaiming_uniform((out_features, in_features), in_features, rng, dtype)),
        )
        self.bias = self.register_parameter(
            "bias", Tensor(np.zeros(out_features, dtype=dtype))
        )

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class ConvLayer(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int,
        rng: np.random.Generator,
        dtype: type = DEFAULT_DTYPE,
    ) -> None:
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        fan_in = in_channels * kernel * kernel
        self.weight = self.register_parameter(
            "weight",
            Tensor(
                kaiming_uniform((out_channels, in_channels, kernel, kernel), fan_in, rng, dtype)
            ),
        )
        self.bias = self.register_parameter(
            "bias", Tensor(np.zeros(out_channels, dtype=dtype))
        )

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride)


class ConvTransposeLayer(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int,
        rng: np.random.Generator,
        dtype: type = DEFAULT_DTYPE,
    ) -> None:
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        fan_in = in_channels * kernel * kernel
        self.weight = self.register_parameter(
            "weight",
            Tensor(
                kaiming_uniform((in_channels, out_channels, kernel, kernel), fan_in, rng, dtype)
            ),
        )
        self.bias = self.register_parameter(
            "bias", Tensor(np.zeros(out_channels, dtype=dtype))
        )

    def __call__(self, x: Tensor) -> Tensor:
        return conv_transpose2d(x, self.weight, self.bias, stride=self.stride)


def named_parameters_of(
    modules: Mapping[str, Module],
) -> List[Tuple[str, Tensor]]:
    """Flatten several modules into one ordered (name, tensor) list under their prefixes."""
    out: List[Tuple[str, Tensor]] = []
    for prefix, module in modules.items():
        out.extend(module.named_parameters(f"{prefix}."))
    return out


def trainable(named: List[Tuple[str, Tensor]]) -> List[Tuple[str, Tensor]]:
    return [(name, tensor) for name, tensor in named if tensor.requires_grad]
