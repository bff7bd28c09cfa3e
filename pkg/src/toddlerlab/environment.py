"""
The playpen: an agent walks a square arena with three props and interacts
with them under an episode intention.

The core is functional (``Playpen.reset`` / ``Playpen.step`` over an explicit
``EnvState``); ``PlaypenEnv`` adapts it to the gymnasium API.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Mapping,
    Optional,
    Protocol,
    Tuple,
    Union,
)

import gymnasium
import numpy as np
from gymnasium import spaces

from .config import EnvConfig, RenderConfig
from .exceptions import ProtocolException, ValidationException
from .models import (
    NUM_ACTIONS,
    Action,
    AgentPose,
    Interaction,
    ObjectClass,
    Observation,
    PropObject,
    RewardMode,
    Scene,
)
from .renderer import render

logger = logging.getLogger(__name__)

DEFAULT_TARGETS: Mapping[Interaction, ObjectClass] = MappingProxyType(
    {
        Interaction.HOLD: ObjectClass.PYRAMID,
        Interaction.KICK: ObjectClass.BALL,
        Interaction.PRESS: ObjectClass.DOLL,
    }
)

ORACLE_ALIGN_DEG = 7.5
_MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class RewardTable:
    """Reward values and the interaction range; ``target`` maps interactions to props."""

    target: Mapping[Interaction, ObjectClass] = DEFAULT_TARGETS
    r_success: float = 1.0
    r_wrong: float = -0.2
    r_step: float = -0.005
    interaction_range: float = 0.8
    interaction_half_angle_deg: float = 30.0

    def __post_init__(self) -> None:
        if set(self.target) != set(Interaction) or set(self.target.values()) != set(ObjectClass):
            raise ValidationException("Reward targets must be a bijection onto the object classes")
        if self.r_step >= 0:
            raise ValidationException(f"r_step must be negative, got {self.r_step}")

    @classmethod
    def from_config(cls, config: EnvConfig) -> "RewardTable":
        return cls(
            target=MappingProxyType(config.target_map()),
            r_success=config.r_success,
            r_wrong=config.r_wrong,
            r_step=config.r_step,
            interaction_range=config.interaction_range,
            interaction_half_angle_deg=config.interaction_half_angle_deg,
        )


@dataclass
class EnvState:
    pose: AgentPose
    scene: Scene
    intention: Interaction
    t: int = 0
    done: bool = False
    rng: np.random.Generator = field(
        default_factory=lambda: np.random.default_rng(0), compare=False, repr=False
    )


@dataclass
class StepResult:
    observation: Optional[Observation]
    reward: float
    done: bool
    info: Dict[str, Any] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return bool(self.info.get("success", False))

    @property
    def truncated(self) -> bool:
        return bool(self.info.get("truncated", False))


class Environment(Protocol):
    """What the trainer needs from an environment."""

    num_actions: int

    def reset(self, seed: int) -> Tuple[Any, Optional[np.ndarray], int]: ...

    def step(self, state: Any, action: int) -> StepResult: ...


def reward(
    object_class: Optional[ObjectClass],
    action: Interaction,
    intention: Interaction,
    table: RewardTable,
    mode: RewardMode = RewardMode.INTENTION,
) -> Tuple[float, bool]:
    """
    Reward of one interaction, step cost included, and whether it succeeded.

    Example:
    ```python
    reward(ObjectClass.DOLL, Interaction.PRESS, Interaction.PRESS, RewardTable())
    # (0.995, True)
    ```
    """
    if object_class is None:
        return table.r_step, False
    if mode is RewardMode.ANY_TOUCH:
        return table.r_success + table.r_step, True
    if action == intention and table.target[action] is object_class:
        return table.r_success + table.r_step, True
    return table.r_wrong + table.r_step, False


def in_range(pose: AgentPose, obj: PropObject, table: RewardTable) -> bool:
    """True if the prop is close enough and within the cone in front of the agent."""
    x, _, z = obj.position
    if pose.distance_to(x, z) > table.interaction_range:
        return False
    return abs(math.degrees(pose.bearing_to(x, z))) <= table.interaction_half_angle_deg


def nearest_in_range(
    pose: AgentPose, scene: Scene, table: RewardTable
) -> Optional[PropObject]:
    candidates = [obj for obj in scene.objects if in_range(pose, obj, table)]
    if not candidates:
        return None
    return min(
        candidates,
        key=lambda obj: (pose.distance_to(obj.position[0], obj.position[2]), obj.id),
    )


def random_action(rng: np.random.Generator) -> Action:
    return Action(int(rng.integers(NUM_ACTIONS)))


class Playpen:
    """
    Episode dynamics for the playpen.

    Parameters:
    - env_config: arena, quanta, reward table and episode length.
    - render_config: camera and scene appearance.
    - render: when False, reset() and step() return no observation; dynamics and
      rewards are unchanged. Used by policies that do not look at pixels.
    """

    num_actions = NUM_ACTIONS

    def __init__(
        self,
        env_config: Optional[EnvConfig] = None,
        render_config: Optional[RenderConfig] = None,
        render: bool = True,
    ) -> None:
        self.env_config = env_config or EnvConfig()
        self.render_config = render_config or RenderConfig()
        self.table = RewardTable.from_config(self.env_config)
        self.render_enabled = render

    @property
    def observation_shape(self) -> Tuple[int, int, int]:
        res = self.render_config.resolution
        return (6, res, res)

    def observe(self, state: EnvState) -> Observation:
        pose = state.pose
        camera = self.render_config.camera(pose.x, pose.z, pose.yaw)
        return render(state.scene, camera)

    def _maybe_observe(self, state: EnvState) -> Optional[Observation]:
        return self.observe(state) if self.render_enabled else None

    def _place_objects(self, rng: np.random.Generator) -> List[PropObject]:
        cfg = self.env_config
        for _ in range(_MAX_PLACEMENT_ATTEMPTS):
            radii = rng.uniform(cfg.spawn_min_radius, cfg.spawn_max_radius, size=len(ObjectClass))
            angles = rng.uniform(0.0, 2.0 * math.pi, size=len(ObjectClass))
            yaws = rng.uniform(0.0, 2.0 * math.pi, size=len(ObjectClass))
            xs, zs = radii * np.sin(angles), radii * np.cos(angles)
            points = np.stack([xs, zs], axis=1)
            gaps = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
            gaps[np.diag_indices(len(points))] = np.inf
            if gaps.min() >= cfg.min_separation:
                return [
                    PropObject(
                        id=int(cls),
                        object_class=cls,
                        position=(float(xs[i]), 0.0, float(zs[i])),
                        yaw=float(yaws[i]),
                        albedo=self.render_config.albedo(cls),
                    )
                    for i, cls in enumerate(ObjectClass)
                ]
        raise ValidationException(
            "Could not place the props with the configured separation; check env.min_separation"
        )

    def reset(self, seed: int) -> Tuple[EnvState, Optional[Observation], Interaction]:
        """
        Start an episode: agent at the centre with a random heading, props placed
        at random, intention drawn uniformly.
        """
        rng = np.random.default_rng(seed)
        base_yaw = float(rng.uniform(0.0, 2.0 * math.pi))
        objects = self._place_objects(rng)
        intention = Interaction(int(rng.integers(len(Interaction))))
        scene = replace(self.render_config.empty_scene(), objects=tuple(objects))
        pose = AgentPose(
            x=0.0, z=0.0, base_yaw=base_yaw, turn_step_deg=self.env_config.turn_step_deg
        )
        state = EnvState(pose=pose, scene=scene, intention=intention, rng=rng)
        logger.debug("reset seed=%d intention=%s", seed, intention.name)
        return state, self._maybe_observe(state), intention

    def step(self, state: EnvState, action: Union[Action, int]) -> StepResult:
        """
        Advance the episode by one action, mutating ``state``.

        Raises:
            ProtocolException: If the episode already finished.
        """
        if state.done:
            raise ProtocolException("step() called after the episode finished; call reset()")
        action = Action(int(action))
        cfg = self.env_config
        pose = state.pose
        hit: Optional[PropObject] = None
        success = False
        step_reward = self.table.r_step

        if action is Action.MOVE_FORWARD:
            limit = cfg.arena_half_size
            x = min(max(pose.x + cfg.move_step * math.sin(pose.yaw), -limit), limit)
            z = min(max(pose.z + cfg.move_step * math.cos(pose.yaw), -limit), limit)
            state.pose = AgentPose(x, z, pose.base_yaw, pose.turns, pose.turn_step_deg)
        elif action is Action.TURN_LEFT:
            state.pose = replace(pose, turns=pose.turns - 1)
        elif action is Action.TURN_RIGHT:
            state.pose = replace(pose, turns=pose.turns + 1)
        else:
            interaction = action.interaction
            assert interaction is not None
            hit = nearest_in_range(pose, state.scene, self.table)
            step_reward, success = reward(
                hit.object_class if hit else None,
                interaction,
                state.intention,
                self.table,
                cfg.reward_mode,
            )

        state.t += 1
        truncated = not success and state.t >= cfg.t_max
        state.done = success or truncated
        info: Dict[str, Any] = {
            "hit": hit.object_class if hit else None,
            "matched": success,
            "success": success,
            "truncated": truncated,
            "t": state.t,
        }
        return StepResult(self._maybe_observe(state), step_reward, state.done, info)

    def oracle_action(self, state: EnvState) -> Action:
        """
        Scripted policy: face the prop matching the intention, walk up to it and
        perform the intended interaction.
        """
        target = state.scene.object_of_class(self.table.target[state.intention])
        pose = state.pose
        if in_range(pose, target, self.table):
            return state.intention.action
        bearing = math.degrees(pose.bearing_to(target.position[0], target.position[2]))
        if bearing > ORACLE_ALIGN_DEG:
            return Action.TURN_RIGHT
        if bearing < -ORACLE_ALIGN_DEG:
            return Action.TURN_LEFT
        return Action.MOVE_FORWARD


Policy = Callable[[EnvState, Optional[Observation]], Union[Action, int]]


@dataclass(frozen=True)
class EvaluationResult:
    episodes: int
    successes: int
    mean_return: float
    returns: Tuple[float, ...]

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0


def run_episode(playpen: Playpen, policy: Policy, seed: int) -> Tuple[float, bool]:
    state, observation, _ = playpen.reset(seed)
    total = 0.0
    while True:
        result = playpen.step(state, policy(state, observation))
        total += result.reward
        observation = result.observation
        if result.done:
            return total, result.success


def evaluate_policy(playpen: Playpen, policy: Policy, episodes: int, seed: int) -> EvaluationResult:
    """
    Run ``episodes`` episodes with seeds ``seed, seed + 1, ...`` and collect the
    success rate and mean return, in seed order.
    """
    if episodes < 1:
        raise ValidationException("episodes must be >= 1")
    returns: List[float] = []
    successes = 0
    for offset in range(episodes):
        total, success = run_episode(playpen, policy, seed + offset)
        returns.append(total)
        successes += int(success)
    mean_return = float(np.mean(returns))
    logger.info(
        "Evaluated %d episodes: success rate %.2f, mean return %.3f",
        episodes,
        successes / episodes,
        mean_return,
    )
    return EvaluationResult(episodes, successes, mean_return, tuple(returns))


class PlaypenEnv(gymnasium.Env):  # type: ignore[misc]
    """
    Gymnasium view of the playpen.

    Observations are float32 [6, H, W]; the episode intention is reported in
    ``info["intention"]`` by reset() and step().
    """

    metadata = {"render_modes": ["rgb_array"]}

    def __init__(
        self,
        env_config: Optional[EnvConfig] = None,
        render_config: Optional[RenderConfig] = None,
    ) -> None:
        super().__init__()
        self.playpen = Playpen(env_config, render_config, render=True)
        self.action_space = spaces.Discrete(NUM_ACTIONS)
        self.observation_space = spaces.Box(
            low=0.0, high=1.0, shape=self.playpen.observation_shape, dtype=np.float32
        )
        self.state: Optional[EnvState] = None
        self._last_observation: Optional[Observation] = None

    def reset(
        self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None
    ) -> Tuple[Observation, Dict[str, Any]]:
        super().reset(seed=seed)
        episode_seed = seed if seed is not None else int(self.np_random.integers(2**31 - 1))
        self.state, observation, intention = self.playpen.reset(episode_seed)
        assert observation is not None
        self._last_observation = observation
        return observation, {"intention": intention}

    def step(self, action: int) -> Tuple[Observation, float, bool, bool, Dict[str, Any]]:
        if self.state is None:
            raise ProtocolException("step() called before reset()")
        result = self.playpen.step(self.state, action)
        assert result.observation is not None
        self._last_observation = result.observation
        info = dict(result.info, intention=self.state.intention)
        return result.observation, result.reward, result.success, result.truncated, info

    def render(self) -> Optional[np.ndarray]:
        if self._last_observation is None:
            return None
        left = self._last_observation[:3].transpose(1, 2, 0)
        return np.round(left * 255.0).astype(np.uint8)
