"""
Deterministic chain MDP with an exact value-iteration solution.

States 0..n-1 in a row; action 1 moves right, action 0 moves left (state 0
stays put). Entering the last state pays +1 and ends the episode. Episodes
start uniformly in the non-terminal states. Used to check the soft
actor-critic against a known optimum with a small MLP encoder.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from .agent import AgentNetwork, MlpEncoder
from .environment import StepResult
from .exceptions import ProtocolException, ValidationException

logger = logging.getLogger(__name__)

LEFT = 0
RIGHT = 1


@dataclass
class ChainState:
    position: int
    t: int = 0
    done: bool = False
    intention: int = 0


class ChainEnv:
    num_actions = 2

    def __init__(self, num_states: int = 5, t_max: int = 50, goal_reward: float = 1.0) -> None:
        if num_states < 2:
            raise ValidationException(f"A chain needs at least 2 states, got {num_states}")
        self.num_states = num_states
        self.t_max = t_max
        self.goal_reward = goal_reward

    @property
    def goal(self) -> int:
        return self.num_states - 1

    @property
    def observation_shape(self) -> Tuple[int]:
        return (self.num_states,)

    def observe(self, position: int) -> np.ndarray:
        obs = np.zeros(self.num_states, dtype=np.float32)
        obs[position] = 1.0
        return obs

    def transition(self, position: int, action: int) -> Tuple[int, float, bool]:
        """(next position, reward, terminal) for one move from a non-terminal state."""
        if action not in (LEFT, RIGHT):
            raise ValidationException(f"Chain action must be 0 or 1, got {action}")
        nxt = position + 1 if action == RIGHT else max(position - 1, 0)
        if nxt == self.goal:
            return nxt, self.goal_reward, True
        return nxt, 0.0, False

    def reset(self, seed: int) -> Tuple[ChainState, np.ndarray, int]:
        rng = np.random.default_rng(seed)
        state = ChainState(position=int(rng.integers(self.goal)))
        return state, self.observe(state.position), 0

    def step(self, state: ChainState, action: int) -> StepResult:
        if state.done:
            raise ProtocolException("step() called after the episode finished; call reset()")
        state.position, reward, terminal = self.transition(state.position, int(action))
        state.t += 1
        truncated = not terminal and state.t >= self.t_max
        state.done = terminal or truncated
        info: Dict[str, Any] = {"success": terminal, "truncated": truncated, "t": state.t}
        return StepResult(self.observe(state.position), reward, state.done, info)


def value_iteration(
    env: ChainEnv, gamma: float, tolerance: float = 1e-12, max_iterations: int = 100_000
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Optimal state values and action values of the chain.

    Returns (V [n], Q [n, 2]); the terminal state has value 0.
    """
    n = env.num_states
    values = np.zeros(n, dtype=np.float64)
    q = np.zeros((n, env.num_actions), dtype=np.float64)
    for _ in range(max_iterations):
        for s in range(env.goal):
            for a in range(env.num_actions):
                nxt, reward, terminal = env.transition(s, a)
                q[s, a] = reward + (0.0 if terminal else gamma * values[nxt])
        updated = q.max(axis=1)
        updated[env.goal] = 0.0
        delta = float(np.max(np.abs(updated - values)))
        values = updated
        if delta < tolerance:
            break
    return values, q


def optimal_actions(env: ChainEnv, gamma: float) -> np.ndarray:
    _, q = value_iteration(env, gamma)
    return q[: env.goal].argmax(axis=1)


def chain_network(
    env: ChainEnv, rng: np.random.Generator, feature_dim: int = 16, hidden_units: int = 32
) -> AgentNetwork:
    """Agent network with a two-layer MLP encoder in place of the convolutions."""
    encoder = MlpEncoder(
        env.num_states, rng, num_interactions=1, feature_dim=feature_dim, hidden_units=hidden_units
    )
    return AgentNetwork(encoder, rng, num_actions=env.num_actions)
