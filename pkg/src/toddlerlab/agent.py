"""
Agent network: convolutional encoder producing an interaction feature map,
intention mask, policy head, twin critics with target copies, and the decoder
used by the autoencoder baseline.

Checkpoint names: ``enc.*``, ``dec.*``, ``pi.*``, ``q1.*``, ``q2.*``,
``q1t.*``, ``q2t.*``, ``intent.*``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import (
    DEFAULT_DTYPE,
    Tensor,
    conv_output_size,
    linear,
    log_softmax,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    softmax,
    softmax_array,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import AgentConfig
from .exceptions import CheckpointException, DimensionException, ValidationException
from .models import NUM_ACTIONS, NUM_INTERACTIONS
from .nn import ConvLayer, ConvTransposeLayer, LinearLayer, Module, kaiming_uniform

logger = logging.getLogger(__name__)

OBSERVATION_CHANNELS = 6


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: int
    stride: int


DQN_STACK: Tuple[ConvSpec, ...] = (
    ConvSpec(32, 8, 4),
    ConvSpec(64, 4, 2),
    ConvSpec(64, 3, 1),
)


def conv_stack_from_config(config: AgentConfig) -> Tuple[ConvSpec, ...]:
    return tuple(
        ConvSpec(c, k, s)
        for c, k, s in zip(config.conv_channels, config.conv_kernels, config.conv_strides)
    )


def conv_shapes(
    resolution: int, stack: Sequence[ConvSpec], in_channels: int = OBSERVATION_CHANNELS
) -> List[Tuple[int, int, int]]:
    """Feature map shapes [C, H, W] from the input through every convolution."""
    shapes = [(in_channels, resolution, resolution)]
    size = resolution
    for spec in stack:
        if size < spec.kernel:
            raise ValidationException(
                f"Resolution {resolution} is too small for the convolution stack"
            )
        size = conv_output_size(size, spec.kernel, spec.stride)
        shapes.append((spec.out_channels, size, size))
    return shapes


def _batched(x: Tensor, rank: int) -> Tuple[Tensor, bool]:
    if x.ndim == rank - 1:
        return reshape(x, (1,) + x.shape), True
    return x, False


class Encoder(Module):
    """
    Convolutional encoder: conv stack with ReLU, flatten, fc1 with ReLU, fc2.

    Maps [6, H, W] (or a batch [B, 6, H, W]) to the interaction feature map
    [K, M] (or [B, K, M]).
    """

    def __init__(
        self,
        rng: np.random.Generator,
        resolution: int = 84,
        num_interactions: int = NUM_INTERACTIONS,
        feature_dim: int = 170,
        hidden_units: int = 512,
        stack: Sequence[ConvSpec] = DQN_STACK,
        dtype: type = DEFAULT_DTYPE,
    ) -> None:
        super().__init__()
        self.resolution = resolution
        self.num_interactions = num_interactions
        self.feature_dim = feature_dim
        self.stack = tuple(stack)
        self.shapes = conv_shapes(resolution, self.stack)
        self.convs: List[ConvLayer] = []
        in_channels = OBSERVATION_CHANNELS
        for i, spec in enumerate(self.stack, start=1):
            conv = ConvLayer(in_channels, spec.out_channels, spec.kernel, spec.stride, rng, dtype)
            self.add_module(f"conv{i}", conv)
            self.convs.append(conv)
            in_channels = spec.out_channels
        c, h, w = self.shapes[-1]
        self.flat_features = c * h * w
        self.fc1 = LinearLayer(self.flat_features, hidden_units, rng, dtype)
        self.fc2 = LinearLayer(hidden_units, num_interactions * feature_dim, rng, dtype)
        self.add_module("fc1", self.fc1)
        self.add_module("fc2", self.fc2)

    @classmethod
    def from_config(
        cls, config: AgentConfig, rng: np.random.Generator, resolution: int
    ) -> "Encoder":
        return cls(
            rng,
            resolution=resolution,
            feature_dim=config.feature_dim,
            hidden_units=config.hidden_units,
            stack=conv_stack_from_config(config),
        )

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.shapes[0]

    def __call__(self, obs: Tensor) -> Tensor:
        x, single = _batched(obs, 4)
        if tuple(x.shape[1:]) != self.input_shape:
            raise DimensionException(
                f"Encoder expects observations of shape {self.input_shape}, got {obs.shape}",
                axis="observation",
            )
        for conv in self.convs:
            x = relu(conv(x))
        x = reshape(x, (x.shape[0], self.flat_features))
        x = relu(self.fc1(x))
        x = self.fc2(x)
        out = reshape(x, (x.shape[0], self.num_interactions, self.feature_dim))
        return reshape(out, out.shape[1:]) if single else out


class MlpEncoder(Module):
    """Two-layer perceptron encoder for vector observations."""

    def __init__(
        self,
        input_dim: int,
        rng: np.random.Generator,
        num_interactions: int = 1,
        feature_dim: int = 16,
        hidden_units: int = 32,
        dtype: type = DEFAULT_DTYPE,
    ) -> None:
        super().__init__()
        self.input_shape: Tuple[int, ...] = (input_dim,)
        self.num_interactions = num_interactions
        self.feature_dim = feature_dim
        self.fc1 = LinearLayer(input_dim, hidden_units, rng, dtype)
        self.fc2 = LinearLayer(hidden_units, num_interactions * feature_dim, rng, dtype)
        self.add_module("fc1", self.fc1)
        self.add_module("fc2", self.fc2)

    def __call__(self, obs: Tensor) -> Tensor:
        x, single = _batched(obs, 2)
        x = self.fc2(relu(self.fc1(x)))
        out = reshape(x, (x.shape[0], self.num_interactions, self.feature_dim))
        return reshape(out, out.shape[1:]) if single else out


class IntentionEmbedding(Module):
    """mask = sigmoid(W · onehot(intention) + b), one gate per feature map row."""

    def __init__(
        self,
        num_interactions: int,
        rng: np.random.Generator,
        dtype: type = DEFAULT_DTYPE,
    ) -> None:
        super().__init__()
        self.num_interactions = num_interactions
        self.weight = self.register_parameter(
            "weight",
            Tensor(
                kaiming_uniform((num_interactions, num_interactions), num_interactions, rng, dtype)
            ),
        )
        self.bias = self.register_parameter(
            "bias", Tensor(np.zeros(num_interactions, dtype=dtype))
        )

    def one_hot(self, intentions: Union[int, Sequence[int], np.ndarray]) -> Tensor:
        index = np.atleast_1d(np.asarray(intentions, dtype=np.int64))
        if np.any(index < 0) or np.any(index >= self.num_interactions):
            raise ValidationException(f"Intention out of range: {index.tolist()}")
        return Tensor(np.eye(self.num_interactions, dtype=self.weight.dtype)[index])

    def __call__(self, intentions: Union[int, Sequence[int], np.ndarray]) -> Tensor:
        """Mask [B, K] for a batch of intentions, [K] for a single one."""
        mask = sigmoid(linear(self.one_hot(intentions), self.weight, self.bias))
        if np.ndim(intentions) == 0:
            return reshape(mask, (self.num_interactions,))
        return mask


def masked_features(features: Tensor, mask: Tensor) -> Tensor:
    """
    Scale row k of the feature map by mask[k] and flatten.

    Accepts F [K, M] with mask [K], or F [B, K, M] with mask [B, K].
    """
    if features.ndim == 2:
        k, m = features.shape
        if mask.shape != (k,):
            raise DimensionException(
                f"Mask shape {mask.shape} does not match feature rows {k}", axis="interactions"
            )
        gated = mul(features, reshape(mask, (k, 1)))
        return reshape(gated, (k * m,))
    b, k, m = features.shape
    if mask.shape != (b, k):
        raise DimensionException(
            f"Mask shape {mask.shape} does not match features {features.shape}",
            axis="interactions",
        )
    gated = mul(features, reshape(mask, (b, k, 1)))
    return reshape(gated, (b, k * m))


class Decoder(Module):
    """
    Mirror of the encoder: fc layers back to the last conv volume, then transposed
    convolutions undoing the conv stack in reverse, sigmoid output.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        resolution: int = 84,
        num_interactions: int = NUM_INTERACTIONS,
        feature_dim: int = 170,
        hidden_units: int = 512,
        stack: Sequence[ConvSpec] = DQN_STACK,
        dtype: type = DEFAULT_DTYPE,
    ) -> None:
        super().__init__()
        shapes = conv_shapes(resolution, stack)
        self.volume = shapes[-1]
        c, h, w = self.volume
        self.fc1 = LinearLayer(num_interactions * feature_dim, hidden_units, rng, dtype)
        self.fc2 = LinearLayer(hidden_units, c * h * w, rng, dtype)
        self.add_module("fc1", self.fc1)
        self.add_module("fc2", self.fc2)
        self.deconvs: List[ConvTransposeLayer] = []
        size = h
        for i in range(len(stack), 0, -1):
            spec = stack[i - 1]
            in_channels = shapes[i - 1][0]
            deconv = ConvTransposeLayer(
                spec.out_channels, in_channels, spec.kernel, spec.stride, rng, dtype
            )
            self.add_module(f"deconv{i}", deconv)
            self.deconvs.append(deconv)
            size = (size - 1) * spec.stride + spec.kernel
        if size != resolution:
            raise ValidationException(
                f"Convolution stack does not invert exactly at resolution {resolution}"
                f" (decoder produces {size})"
            )
        self.output_shape = shapes[0]

    @classmethod
    def from_config(
        cls, config: AgentConfig, rng: np.random.Generator, resolution: int
    ) -> "Decoder":
        return cls(
            rng,
            resolution=resolution,
            feature_dim=config.feature_dim,
            hidden_units=config.hidden_units,
            stack=conv_stack_from_config(config),
        )

    def __call__(self, features: Tensor) -> Tensor:
        single = features.ndim == 2
        batch = 1 if single else features.shape[0]
        x = reshape(features, (batch, features.size // batch))
        x = relu(self.fc1(x))
        x = relu(self.fc2(x))
        x = reshape(x, (batch,) + self.volume)
        last = len(self.deconvs) - 1
        for i, deconv in enumerate(self.deconvs):
            x = deconv(x)
            x = sigmoid(x) if i == last else relu(x)
        return reshape(x, self.output_shape) if single else x


@dataclass
class PolicyOutput:
    probs: Tensor
    log_probs: Tensor


class AgentNetwork(Module):
    """
    The full agent: ``enc`` → F; ``intent`` → mask; g = masked F; ``pi`` → action
    logits; ``q1``/``q2`` → action values; ``q1t``/``q2t`` target copies.
    ``dec`` is present only for the autoencoder baseline.
    """

    def __init__(
        self,
        encoder: Union[Encoder, MlpEncoder],
        rng: np.random.Generator,
        num_actions: int = NUM_ACTIONS,
        decoder: Optional[Decoder] = None,
        dtype: type = DEFAULT_DTYPE,
    ) -> None:
        super().__init__()
        self.num_actions = num_actions
        self.num_interactions = encoder.num_interactions
        self.feature_dim = encoder.feature_dim
        width = self.num_interactions * self.feature_dim
        self.enc = encoder
        self.intent = IntentionEmbedding(self.num_interactions, rng, dtype)
        self.pi = LinearLayer(width, num_actions, rng, dtype)
        self.q1 = LinearLayer(width, num_actions, rng, dtype)
        self.q2 = LinearLayer(width, num_actions, rng, dtype)
        self.q1t = LinearLayer(width, num_actions, rng, dtype)
        self.q2t = LinearLayer(width, num_actions, rng, dtype)
        self.q1t.copy_from(self.q1)
        self.q2t.copy_from(self.q2)
        self.q1t.freeze()
        self.q2t.freeze()
        self.dec = decoder
        for name, module in (
            ("enc", self.enc),
            ("intent", self.intent),
            ("pi", self.pi),
            ("q1", self.q1),
            ("q2", self.q2),
            ("q1t", self.q1t),
            ("q2t", self.q2t),
        ):
            self.add_module(name, module)
        if decoder is not None:
            self.add_module("dec", decoder)

    @classmethod
    def build(
        cls,
        config: AgentConfig,
        resolution: int,
        rng: np.random.Generator,
        with_decoder: bool = False,
    ) -> "AgentNetwork":
        encoder = Encoder.from_config(config, rng, resolution)
        decoder = Decoder.from_config(config, rng, resolution) if with_decoder else None
        return cls(encoder, rng, decoder=decoder)

    @property
    def observation_shape(self) -> Tuple[int, ...]:
        return self.enc.input_shape

    def encode(self, obs: Tensor) -> Tensor:
        return self.enc(obs)

    def embed_intention(self, intentions: Union[int, Sequence[int], np.ndarray]) -> Tensor:
        return self.intent(intentions)

    def masked(self, obs: Tensor, intentions: Union[int, Sequence[int], np.ndarray]) -> Tensor:
        return masked_features(self.encode(obs), self.embed_intention(intentions))

    def policy(self, g: Tensor) -> PolicyOutput:
        logits = self.pi(g)
        return PolicyOutput(probs=softmax(logits), log_probs=log_softmax(logits))

    def q_values(self, g: Tensor) -> Tuple[Tensor, Tensor]:
        return self.q1(g), self.q2(g)

    def target_q_values(self, g: Tensor) -> Tuple[Tensor, Tensor]:
        return self.q1t(g), self.q2t(g)

    def decode(self, features: Tensor) -> Tensor:
        if self.dec is None:
            raise ValidationException("This network has no decoder")
        return self.dec(features)

    def action_probabilities(self, observation: np.ndarray, intention: int) -> np.ndarray:
        """π(·|o, intention) as a plain array; records nothing."""
        with no_grad():
            g = self.masked(Tensor(observation.astype(self.pi.weight.dtype)), int(intention))
            logits = self.pi(g).data
        return softmax_array(logits.astype(np.float64))

    def act(
        self,
        observation: np.ndarray,
        intention: int,
        rng: Optional[np.random.Generator] = None,
        greedy: bool = False,
    ) -> int:
        probs = self.action_probabilities(observation, intention)
        if greedy or rng is None:
            return int(np.argmax(probs))
        return int(rng.choice(len(probs), p=probs / probs.sum()))

    def critic_modules(self) -> Dict[str, Module]:
        return {"enc": self.enc, "intent": self.intent, "q1": self.q1, "q2": self.q2}

    def actor_modules(self) -> Dict[str, Module]:
        return {"pi": self.pi, "intent": self.intent}

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.state_dict())

    def load(self, path: Union[str, Path]) -> "AgentNetwork":
        self.load_state_dict(load_checkpoint(path))
        return self


def require_prefix(state: Mapping[str, np.ndarray], prefix: str, purpose: str) -> None:
    """
    Raises:
        CheckpointException: If no parameter in ``state`` starts with ``prefix``.
    """
    if not any(name.startswith(prefix) for name in state):
        raise CheckpointException(
            f"Checkpoint has no '{prefix}*' parameters; it cannot be used for {purpose}"
        )
