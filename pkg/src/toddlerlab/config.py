"""
Run configuration.

A run is described by one TOML file with the sections ``[env]``, ``[render]``,
``[agent]``, ``[sac]``, ``[transfer]`` and ``[report]`` plus a global ``seed``.
Every section rejects unknown keys. Missing keys take the desk-scale defaults.
"""

from __future__ import annotations

import logging
import math
import re
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import ConfigurationException
from .models import (
    DEFAULT_LIGHT,
    Color,
    Interaction,
    ObjectClass,
    ObjectGeometry,
    Regime,
    RewardMode,
    Scene,
    StereoCamera,
    Task,
    normalized,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger(__name__)

RGB = Tuple[float, float, float]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class EnvConfig(_Section):
    """Playpen dynamics and reward table."""

    arena_half_size: float = Field(4.0, gt=0)
    move_step: float = Field(0.1, gt=0)
    turn_step_deg: float = Field(15.0, gt=0, lt=180)
    t_max: int = Field(500, ge=1)
    spawn_min_radius: float = Field(1.5, ge=0)
    spawn_max_radius: float = Field(3.5, gt=0)
    min_separation: float = Field(1.2, ge=0)
    reward_mode: RewardMode = RewardMode.INTENTION
    r_success: float = Field(1.0, gt=0)
    r_wrong: float = Field(-0.2, le=0)
    r_step: float = Field(-0.005, lt=0)
    interaction_range: float = Field(0.8, gt=0)
    interaction_half_angle_deg: float = Field(30.0, gt=0, le=180)
    targets: Dict[str, str] = Field(
        default_factory=lambda: {"hold": "pyramid", "kick": "ball", "press": "doll"}
    )

    @model_validator(mode="after")
    def _check_layout(self) -> "EnvConfig":
        if self.spawn_min_radius > self.spawn_max_radius:
            raise ValueError("spawn_min_radius must not exceed spawn_max_radius")
        if self.spawn_max_radius > self.arena_half_size:
            raise ValueError("objects must spawn inside the arena")
        if abs(self.r_step) >= self.r_success:
            raise ValueError("|r_step| must be much smaller than r_success")
        self.target_map()
        return self

    def target_map(self) -> Dict[Interaction, ObjectClass]:
        try:
            mapping = {
                Interaction.coerce(k): ObjectClass.coerce(v) for k, v in self.targets.items()
            }
        except Exception as e:
            raise ValueError(f"targets: {e}") from e
        if set(mapping) != set(Interaction) or set(mapping.values()) != set(ObjectClass):
            raise ValueError("targets must map every interaction to a distinct object class")
        return mapping


class RenderConfig(_Section):
    """Camera intrinsics, colours and prop dimensions."""

    resolution: int = Field(84, ge=4)
    fov_deg: float = Field(90.0, gt=0, lt=180)
    eye_height: float = Field(0.45, gt=0)
    baseline: float = Field(0.06, ge=0)
    floor_color: RGB = (Color.FLOOR.r, Color.FLOOR.g, Color.FLOOR.b)
    sky_color: RGB = (Color.SKY.r, Color.SKY.g, Color.SKY.b)
    light: RGB = DEFAULT_LIGHT
    pyramid_color: RGB = (Color.RED.r, Color.RED.g, Color.RED.b)
    ball_color: RGB = (Color.BLUE.r, Color.BLUE.g, Color.BLUE.b)
    doll_color: RGB = (Color.YELLOW.r, Color.YELLOW.g, Color.YELLOW.b)
    pyramid_base: float = Field(0.5, gt=0)
    pyramid_height: float = Field(0.6, gt=0)
    ball_radius: float = Field(0.25, gt=0)
    doll_body_radius: float = Field(0.22, gt=0)
    doll_head_radius: float = Field(0.14, gt=0)

    @model_validator(mode="after")
    def _check_colors(self) -> "RenderConfig":
        for name in ("floor_color", "sky_color", "pyramid_color", "ball_color", "doll_color"):
            if not all(0.0 <= c <= 1.0 for c in getattr(self, name)):
                raise ValueError(f"{name} components must be in [0, 1]")
        if all(c == 0 for c in self.light):
            raise ValueError("light must be a non-zero vector")
        return self

    def geometry(self) -> ObjectGeometry:
        return ObjectGeometry(
            pyramid_base=self.pyramid_base,
            pyramid_height=self.pyramid_height,
            ball_radius=self.ball_radius,
            doll_body_radius=self.doll_body_radius,
            doll_head_radius=self.doll_head_radius,
        )

    def albedo(self, object_class: ObjectClass) -> Color:
        return Color.coerce(getattr(self, f"{object_class.name.lower()}_color"))

    def camera(self, x: float = 0.0, z: float = 0.0, yaw: float = 0.0) -> StereoCamera:
        return StereoCamera.at(
            x,
            z,
            yaw,
            eye_height=self.eye_height,
            baseline=self.baseline,
            fov_deg=self.fov_deg,
            resolution=self.resolution,
        )

    def empty_scene(self) -> Scene:
        return Scene(
            floor_color=Color.coerce(self.floor_color),
            sky_color=Color.coerce(self.sky_color),
            light=normalized(self.light),
            geometry=self.geometry(),
        )


class AgentConfig(_Section):
    """Encoder stack and feature map size."""

    feature_dim: int = Field(170, ge=1, description="M, features per interaction row")
    hidden_units: int = Field(512, ge=1)
    conv_channels: List[int] = Field(default_factory=lambda: [32, 64, 64])
    conv_kernels: List[int] = Field(default_factory=lambda: [8, 4, 3])
    conv_strides: List[int] = Field(default_factory=lambda: [4, 2, 1])

    @model_validator(mode="after")
    def _check_stack(self) -> "AgentConfig":
        if not (len(self.conv_channels) == len(self.conv_kernels) == len(self.conv_strides)):
            raise ValueError("conv_channels, conv_kernels and conv_strides must have equal length")
        if not self.conv_channels:
            raise ValueError("at least one convolution layer is required")
        if min(self.conv_channels + self.conv_kernels + self.conv_strides) < 1:
            raise ValueError("convolution sizes must be positive")
        return self


class SacConfig(_Section):
    """Soft actor-critic hyperparameters."""

    gamma: float = Field(0.99, gt=0, lt=1)
    tau: float = Field(0.005, gt=0, le=1)
    batch_size: int = Field(64, ge=1)
    lr: float = Field(0.00025, gt=0)
    warmup: int = Field(1000, ge=0)
    total_frames: int = Field(200_000, ge=0)
    target_entropy_ratio: float = Field(0.6, gt=0, le=1)
    initial_alpha: float = Field(1.0, gt=0)
    buffer_capacity: int = Field(100_000, ge=1)
    log_interval: int = Field(5000, ge=1)
    metrics_window: int = Field(20, ge=1)
    eval_episodes: int = Field(100, ge=1)

    def target_entropy(self, num_actions: int) -> float:
        return self.target_entropy_ratio * math.log(num_actions)


class TransferConfig(_Section):
    """Dataset generation, linear heads and the autoencoder baseline."""

    dataset_size: int = Field(2400, ge=2)
    min_distance: float = Field(1.0, gt=0)
    max_distance: float = Field(5.0, gt=0)
    max_bearing_deg: float = Field(30.0, ge=0, lt=90)
    max_rejections: int = Field(100, ge=1)
    lr: float = Field(0.001, gt=0)
    epochs: int = Field(50, ge=0)
    batch_size: int = Field(32, ge=1)
    distance_error_in_z: bool = False
    autoencoder_frames: int = Field(10_000, ge=1)
    autoencoder_holdout: int = Field(500, ge=1)
    autoencoder_epochs: int = Field(20, ge=0)
    autoencoder_lr: float = Field(0.00025, gt=0)
    autoencoder_batch_size: int = Field(32, ge=1)
    regimes: List[Regime] = Field(default_factory=lambda: list(Regime))
    tasks: List[Task] = Field(default_factory=lambda: list(Task))
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    train_on_demand: bool = False
    jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_ranges(self) -> "TransferConfig":
        if self.min_distance >= self.max_distance:
            raise ValueError("min_distance must be below max_distance")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        return self


class ReportConfig(_Section):
    decimals: int = Field(1, ge=0, le=6)
    relative_improvement: bool = True


class RunConfig(_Section):
    seed: int = 0
    env: EnvConfig = Field(default_factory=EnvConfig)
    render: RenderConfig = Field(default_factory=RenderConfig)
    agent: AgentConfig = Field(default_factory=AgentConfig)
    sac: SacConfig = Field(default_factory=SacConfig)
    transfer: TransferConfig = Field(default_factory=TransferConfig)
    report: ReportConfig = Field(default_factory=ReportConfig)


_LINE_PATTERN = re.compile(r"line (\d+)")
_TABLE_HEADER = re.compile(r"^\s*\[\s*([^\[\]]+?)\s*\]\s*(?:#.*)?$")
_KEY_ASSIGNMENT = re.compile(r"^\s*([A-Za-z0-9_.\-\"' ]+?)\s*=")


def _key_path(loc: Tuple[Union[int, str], ...]) -> str:
    return ".".join(str(part) for part in loc)


def _dotted(raw: str) -> str:
    return ".".join(part.strip().strip("\"'") for part in raw.split("."))


def _line_of(text: str, key_path: str) -> Optional[int]:
    """Line of the ``key =`` entry or ``[table]`` header that defines ``key_path``."""
    table = ""
    for number, raw in enumerate(text.splitlines(), start=1):
        header = _TABLE_HEADER.match(raw)
        if header:
            table = _dotted(header.group(1))
            if table == key_path:
                return number
            continue
        assignment = _KEY_ASSIGNMENT.match(raw)
        if assignment:
            key = _dotted(assignment.group(1))
            if (f"{table}.{key}" if table else key) == key_path:
                return number
    return None


def _locate(text: str, loc: Tuple[Union[int, str], ...]) -> Optional[int]:
    parts = [str(part) for part in loc if isinstance(part, str)]
    while parts:
        line = _line_of(text, ".".join(parts))
        if line is not None:
            return line
        parts.pop()
    return None


def parse_config(data: Mapping[str, Any], source: Optional[str] = None) -> RunConfig:
    """
    Validate a mapping into a RunConfig. With the TOML ``source`` text the
    error also carries the line of the offending entry.

    Raises:
        ConfigurationException: With the dotted key path of the first offending key.
    """
    try:
        return RunConfig.model_validate(dict(data))
    except ValidationError as e:
        first = e.errors()[0]
        key_path = _key_path(tuple(first["loc"])) or None
        message = first["msg"]
        if first["type"] == "extra_forbidden":
            message = "unknown key"
        line = _locate(source, tuple(first["loc"])) if source is not None else None
        raise ConfigurationException(message, key_path=key_path, line=line, cause=e) from e


def loads_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _LINE_PATTERN.search(str(e))
        line = getattr(e, "lineno", None) or (int(match.group(1)) if match else None)
        raise ConfigurationException(f"Invalid TOML: {e}", line=line, cause=e) from e
    return parse_config(data, source=text)


def load_config(path: Union[str, Path, None] = None) -> RunConfig:
    """Read a TOML run config; ``None`` yields the defaults."""
    if path is None:
        return RunConfig()
    source = Path(path)
    if not source.is_file():
        raise ConfigurationException(f"Config file not found: {source}")
    logger.debug("Loading config from %s", source)
    return loads_config(source.read_text(encoding="utf-8"))


def dump_config(config: RunConfig) -> str:
    return tomli_w.dumps(config.model_dump(mode="json"))


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """
    Return a copy of ``config`` with dotted keys replaced, e.g. ``{"sac.total_frames": 0}``.
    """
    data = config.model_dump(mode="json")
    for dotted, value in overrides.items():
        if value is None:
            continue
        target = data
        *parents, leaf = dotted.split(".")
        for part in parents:
            if part not in target or not isinstance(target[part], dict):
                raise ConfigurationException("unknown key", key_path=dotted)
            target = target[part]
        if leaf not in target:
            raise ConfigurationException("unknown key", key_path=dotted)
        target[leaf] = value
    return parse_config(data)
