"""
Discrete-action soft actor-critic.

Twin critics with target copies, an exact expectation over the discrete
actions for both the Bellman target and the policy objective, and a
log-parameterized temperature tuned towards a target entropy.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Deque, List, Optional, Tuple, Union

import numpy as np

from .autodiff import (
    Tape,
    Tensor,
    backward,
    mse,
    mul,
    no_grad,
    select_columns,
    sub,
    tensor_mean,
    tensor_sum,
)
from .agent import AgentNetwork, masked_features
from .checkpoint import atomic_write_bytes
from .config import SacConfig
from .environment import Environment
from .exceptions import DimensionException, NumericalException, ValidationException
from .nn import Module, named_parameters_of
from .optim import Adam, AdamState, adam_step

logger = logging.getLogger(__name__)

METRICS_HEADER = ("frame", "mean_return", "success_rate", "alpha")


@dataclass
class Transition:
    observation: np.ndarray
    intention: int
    action: int
    reward: float
    next_observation: np.ndarray
    done: bool

    def __post_init__(self) -> None:
        if not math.isfinite(self.reward):
            raise ValidationException(f"Transition reward must be finite, got {self.reward}")
        if self.action < 0:
            raise ValidationException(f"Action index must be >= 0, got {self.action}")


@dataclass
class Batch:
    observations: np.ndarray
    intentions: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return int(self.actions.shape[0])


def to_pixels(observation: np.ndarray) -> np.ndarray:
    """Observations live on the k/255 lattice, so uint8 storage is lossless."""
    return np.round(np.clip(observation, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_pixels(pixels: np.ndarray) -> np.ndarray:
    return (pixels.astype(np.float32) / np.float32(255.0)).astype(np.float32)


class ReplayBuffer:
    """
    Fixed-capacity FIFO ring of transitions with uniform sampling.

    Observations are stored as uint8.
    """

    def __init__(self, capacity: int, observation_shape: Tuple[int, ...], num_actions: int = 6):
        if capacity < 1:
            raise ValidationException(f"Replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.num_actions = num_actions
        self.observation_shape = tuple(observation_shape)
        self._obs = np.zeros((capacity,) + self.observation_shape, dtype=np.uint8)
        self._next_obs = np.zeros_like(self._obs)
        self._intentions = np.zeros(capacity, dtype=np.int64)
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity, dtype=np.float64)
        self._dones = np.zeros(capacity, dtype=np.float64)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, transition: Transition) -> None:
        if transition.action >= self.num_actions:
            raise ValidationException(
                f"Action index {transition.action} outside [0, {self.num_actions})"
            )
        if transition.observation.shape != self.observation_shape:
            raise DimensionException(
                f"Observation shape {transition.observation.shape} != {self.observation_shape}",
                axis="observation",
            )
        i = self.cursor
        self._obs[i] = to_pixels(transition.observation)
        self._next_obs[i] = to_pixels(transition.next_observation)
        self._intentions[i] = int(transition.intention)
        self._actions[i] = int(transition.action)
        self._rewards[i] = transition.reward
        self._dones[i] = float(transition.done)
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _ordered_indices(self) -> np.ndarray:
        start = self.cursor if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def _gather(self, index: np.ndarray) -> Batch:
        return Batch(
            observations=from_pixels(self._obs[index]),
            intentions=self._intentions[index].copy(),
            actions=self._actions[index].copy(),
            rewards=self._rewards[index].copy(),
            next_observations=from_pixels(self._next_obs[index]),
            dones=self._dones[index].copy(),
        )

    def contents(self) -> Batch:
        """Everything stored, oldest first."""
        return self._gather(self._ordered_indices())

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise ValidationException("Cannot sample from an empty replay buffer")
        return self._gather(rng.integers(0, self.size, size=batch_size))


# --------------------------------------------------------------
# Losses and updates
# --------------------------------------------------------------


def soft_value(
    probs: np.ndarray, log_probs: np.ndarray, q_min: np.ndarray, alpha: float
) -> np.ndarray:
    """V(s) = Σ_a π(a|s) · (Q(s, a) − α · ln π(a|s)), per batch row."""
    terms = probs * (q_min - alpha * log_probs)
    # 0 · ln 0 is taken as 0
    terms = np.where(probs > 0, terms, 0.0)
    return terms.sum(axis=-1)


def critic_target(
    batch: Batch, network: AgentNetwork, alpha: float, gamma: float, step: Optional[int] = None
) -> np.ndarray:
    """
    y = r + γ(1 − done) · V(s'), with V from the target critics and the current policy.

    Raises:
        NumericalException: If any target critic value is NaN or Inf.
    """
    with no_grad():
        g_next = network.masked(Tensor(batch.next_observations), batch.intentions)
        out = network.policy(g_next)
        q1, q2 = network.target_q_values(g_next)
    q_min = np.minimum(q1.data, q2.data).astype(np.float64)
    if not np.all(np.isfinite(q_min)):
        raise NumericalException("Non-finite target Q value", block="q1t/q2t", step=step)
    values = soft_value(
        out.probs.data.astype(np.float64), out.log_probs.data.astype(np.float64), q_min, alpha
    )
    return batch.rewards + gamma * (1.0 - batch.dones) * values


def critic_update(
    batch: Batch,
    network: AgentNetwork,
    optimizer: Adam,
    alpha: float,
    gamma: float,
    step: Optional[int] = None,
) -> float:
    """
    One Adam step on mse(Q1(s, a), y) + mse(Q2(s, a), y); y is a constant.
    Updates encoder, intention embedding and both critics.
    """
    targets = critic_target(batch, network, alpha, gamma, step)
    optimizer.zero_grad()
    with Tape() as tape:
        g = network.masked(Tensor(batch.observations), batch.intentions)
        q1, q2 = network.q_values(g)
        loss = mse(select_columns(q1, batch.actions), targets.astype(q1.dtype)) + mse(
            select_columns(q2, batch.actions), targets.astype(q2.dtype)
        )
    value = loss.item()
    if not math.isfinite(value):
        raise NumericalException("Non-finite critic loss", block="critic", step=step)
    backward(loss, tape, optimizer.params)
    optimizer.step()
    return value


@dataclass
class ActorStats:
    loss: float
    entropy: float


def actor_update(
    batch: Batch,
    network: AgentNetwork,
    optimizer: Adam,
    alpha: float,
    step: Optional[int] = None,
) -> ActorStats:
    """
    One Adam step on E[Σ_a π(a|s) · (α ln π(a|s) − min Q(s, a))].

    The feature map and the critics are constants here; gradients reach the
    policy head and the intention embedding.
    """
    with no_grad():
        features = network.encode(Tensor(batch.observations))
        q1, q2 = network.q_values(
            masked_features(features, network.embed_intention(batch.intentions))
        )
    q_min = np.minimum(q1.data, q2.data)
    optimizer.zero_grad()
    with Tape() as tape:
        g = masked_features(features, network.embed_intention(batch.intentions))
        out = network.policy(g)
        per_action = mul(out.probs, sub(mul(out.log_probs, alpha), q_min))
        loss = tensor_mean(tensor_sum(per_action, axis=1))
    value = loss.item()
    if not math.isfinite(value):
        raise NumericalException("Non-finite policy loss", block="pi", step=step)
    probs = out.probs.data.astype(np.float64)
    entropy = float(np.mean(-(probs * out.log_probs.data).sum(axis=-1)))
    backward(loss, tape, optimizer.params)
    optimizer.step()
    return ActorStats(loss=value, entropy=entropy)


class Temperature:
    """
    α = exp(log α), tuned by Adam on the objective log α · (H − H*).

    Entropy above the target lowers α, entropy below raises it.
    """

    def __init__(self, initial_alpha: float, target_entropy: float, lr: float) -> None:
        if initial_alpha <= 0:
            raise ValidationException(f"Initial temperature must be > 0, got {initial_alpha}")
        self.log_alpha = Tensor(np.array([math.log(initial_alpha)], dtype=np.float64))
        self.target_entropy = target_entropy
        self.state = AdamState.zeros_like(self.log_alpha, lr)

    @property
    def alpha(self) -> float:
        return float(math.exp(self.log_alpha.data[0]))

    def update(self, entropy: float) -> float:
        grad = np.array([entropy - self.target_entropy], dtype=np.float64)
        adam_step(self.log_alpha, grad, self.state, block="log_alpha")
        return self.alpha


def temperature_update(temperature: Temperature, entropy: float) -> float:
    return temperature.update(entropy)


def soft_update(online: Module, target: Module, tau: float) -> None:
    """θ̄ ← τ θ + (1 − τ) θ̄ for every parameter pair, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValidationException(f"tau must be in [0, 1], got {tau}")
    source = list(online.named_parameters())
    dest = list(target.named_parameters())
    if len(source) != len(dest):
        raise DimensionException("Online and target modules differ in structure", axis="parameters")
    for (name, p), (_, p_target) in zip(source, dest):
        if p.shape != p_target.shape:
            raise DimensionException(
                f"Parameter {name}: {p.shape} vs target {p_target.shape}", axis=name
            )
        if tau == 1.0:
            p_target.data[...] = p.data
        elif tau > 0.0:
            p_target.data[...] = tau * p.data + (1.0 - tau) * p_target.data


# --------------------------------------------------------------
# Training loop
# --------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRow:
    frame: int
    mean_return: float
    success_rate: float
    alpha: float


def metrics_csv(rows: List[MetricsRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in rows:
        writer.writerow(
            [row.frame, f"{row.mean_return:.6f}", f"{row.success_rate:.4f}", f"{row.alpha:.6f}"]
        )
    return buffer.getvalue()


@dataclass
class TrainingResult:
    network: AgentNetwork
    metrics: List[MetricsRow]
    frames: int
    episodes: int
    checkpoint: Optional[Path] = None
    metrics_path: Optional[Path] = None


@dataclass
class SacLearner:
    """Optimizers and temperature bound to one network."""

    network: AgentNetwork
    config: SacConfig
    critic_optimizer: Adam = field(init=False)
    actor_optimizer: Adam = field(init=False)
    temperature: Temperature = field(init=False)

    def __post_init__(self) -> None:
        cfg = self.config
        self.critic_optimizer = Adam(
            named_parameters_of(self.network.critic_modules()), lr=cfg.lr
        )
        self.actor_optimizer = Adam(named_parameters_of(self.network.actor_modules()), lr=cfg.lr)
        self.temperature = Temperature(
            cfg.initial_alpha, cfg.target_entropy(self.network.num_actions), cfg.lr
        )

    def update(self, batch: Batch, step: int) -> Tuple[float, ActorStats]:
        alpha = self.temperature.alpha
        critic_loss = critic_update(
            batch, self.network, self.critic_optimizer, alpha, self.config.gamma, step
        )
        stats = actor_update(batch, self.network, self.actor_optimizer, alpha, step)
        self.temperature.update(stats.entropy)
        soft_update(self.network.q1, self.network.q1t, self.config.tau)
        soft_update(self.network.q2, self.network.q2t, self.config.tau)
        return critic_loss, stats


ProgressCallback = Callable[[MetricsRow], None]


def _save(network: AgentNetwork, path: Optional[Path]) -> None:
    if path is not None:
        network.save(path)


def train(
    env: Environment,
    network: AgentNetwork,
    config: SacConfig,
    seed: int,
    checkpoint_path: Optional[Union[str, Path]] = None,
    metrics_path: Optional[Union[str, Path]] = None,
    progress: Optional[ProgressCallback] = None,
) -> TrainingResult:
    """
    Collect experience and update after warmup, one update per environment step.

    Every ``config.log_interval`` frames a metrics row is recorded, the metrics
    CSV is rewritten and the checkpoint is replaced atomically. If an update
    produces a NaN the run stops with NumericalException and the last
    periodic checkpoint stays in place.
    """
    ckpt = Path(checkpoint_path) if checkpoint_path is not None else None
    metrics_file = Path(metrics_path) if metrics_path is not None else None
    root = np.random.SeedSequence(seed)
    episode_seq, action_seq, replay_seq = root.spawn(3)
    episode_rng = np.random.default_rng(episode_seq)
    action_rng = np.random.default_rng(action_seq)
    replay_rng = np.random.default_rng(replay_seq)

    learner = SacLearner(network, config)
    buffer = ReplayBuffer(config.buffer_capacity, network.observation_shape, env.num_actions)
    returns: Deque[float] = deque(maxlen=config.metrics_window)
    outcomes: Deque[bool] = deque(maxlen=config.metrics_window)
    rows: List[MetricsRow] = []

    _save(network, ckpt)

    def _record(frame: int) -> None:
        row = MetricsRow(
            frame=frame,
            mean_return=float(np.mean(returns)) if returns else 0.0,
            success_rate=float(np.mean(outcomes)) if outcomes else 0.0,
            alpha=learner.temperature.alpha,
        )
        rows.append(row)
        logger.info(
            "frame %d: mean return %.3f, success rate %.2f, alpha %.4f",
            row.frame,
            row.mean_return,
            row.success_rate,
            row.alpha,
        )
        if metrics_file is not None:
            atomic_write_bytes(metrics_file, metrics_csv(rows).encode("utf-8"))
        _save(network, ckpt)
        if progress is not None:
            progress(row)

    episodes = 0
    episode_return = 0.0
    state, observation, intention = env.reset(int(episode_rng.integers(2**31 - 1)))
    for frame in range(1, config.total_frames + 1):
        if frame <= config.warmup:
            action = int(action_rng.integers(env.num_actions))
        else:
            assert observation is not None
            action = network.act(observation, int(intention), action_rng)
        result = env.step(state, action)
        assert observation is not None and result.observation is not None
        buffer.add(
            Transition(
                observation=observation,
                intention=int(intention),
                action=action,
                reward=result.reward,
                next_observation=result.observation,
                done=result.success,
            )
        )
        episode_return += result.reward
        observation = result.observation

        if result.done:
            episodes += 1
            returns.append(episode_return)
            outcomes.append(result.success)
            episode_return = 0.0
            state, observation, intention = env.reset(int(episode_rng.integers(2**31 - 1)))

        if frame > config.warmup and len(buffer) >= config.batch_size:
            batch = buffer.sample(config.batch_size, replay_rng)
            try:
                critic_loss, stats = learner.update(batch, frame)
            except NumericalException:
                logger.error("Numerical failure at frame %d; keeping last checkpoint", frame)
                raise
            logger.debug(
                "frame %d: critic %.5f actor %.5f entropy %.4f",
                frame,
                critic_loss,
                stats.loss,
                stats.entropy,
            )

        if frame % config.log_interval == 0:
            _record(frame)

    if config.total_frames % config.log_interval != 0:
        _record(config.total_frames)
    elif config.total_frames == 0 and metrics_file is not None:
        atomic_write_bytes(metrics_file, metrics_csv(rows).encode("utf-8"))
    return TrainingResult(
        network=network,
        metrics=rows,
        frames=config.total_frames,
        episodes=episodes,
        checkpoint=ckpt,
        metrics_path=metrics_file,
    )


def greedy_policy(network: AgentNetwork) -> Callable[[object, Optional[np.ndarray]], int]:
    """Adapter for evaluate_policy(): argmax action under the episode intention."""

    def _policy(state: object, observation: Optional[np.ndarray]) -> int:
        if observation is None:
            raise ValidationException("greedy_policy needs rendered observations")
        return network.act(observation, int(getattr(state, "intention")), greedy=True)

    return _policy
