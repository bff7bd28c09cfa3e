"""
Model classes for the toddlerlab playpen: object classes, interactions, actions,
scene description and camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Any, ClassVar, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ValidationException

Vec3 = Tuple[float, float, float]

# Binocular RGB image, float32 [6, H, W]: channels 0-2 left eye, 3-5 right eye.
Observation = np.ndarray


class ObjectClass(IntEnum):
    """The three prop objects. The integer value is the classification label."""

    PYRAMID = 0
    BALL = 1
    DOLL = 2

    @classmethod
    def coerce(cls, value: Union["ObjectClass", str, int]) -> "ObjectClass":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError as e:
                raise ValidationException(f"Unknown object class: {value!r}") from e
        return cls(int(value))


class Interaction(IntEnum):
    """The interactions an intention can name. The integer value is the row index K."""

    HOLD = 0
    KICK = 1
    PRESS = 2

    @property
    def action(self) -> "Action":
        return Action(Action.HOLD + int(self))

    @classmethod
    def coerce(cls, value: Union["Interaction", str, int]) -> "Interaction":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError as e:
                raise ValidationException(f"Unknown interaction: {value!r}") from e
        return cls(int(value))


class Action(IntEnum):
    """Discrete action set: three movements followed by three interactions."""

    MOVE_FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    HOLD = 3
    KICK = 4
    PRESS = 5

    @property
    def is_interaction(self) -> bool:
        return self >= Action.HOLD

    @property
    def interaction(self) -> Optional[Interaction]:
        if not self.is_interaction:
            return None
        return Interaction(self - Action.HOLD)


NUM_ACTIONS = len(Action)
NUM_INTERACTIONS = len(Interaction)


class Eye(Enum):
    LEFT = "L"
    RIGHT = "R"


class RewardMode(Enum):
    """How interactions are rewarded."""

    INTENTION = "intention"  # success needs action == intention and the matching prop
    ANY_TOUCH = "any_touch"  # any interaction with any prop in range succeeds


class Regime(Enum):
    """Where transfer encoder parameters come from and whether they train."""

    RANDOM = "random"
    AUTOENCODER = "autoencoder"
    PROPOSED = "proposed"
    SUPERVISED = "supervised"

    @property
    def frozen(self) -> bool:
        return self is not Regime.SUPERVISED

    @property
    def title(self) -> str:
        return self.name.capitalize()


class Task(Enum):
    CLASSIFICATION = "classification"
    DISTANCE = "distance"
    LOCALIZATION = "localization"

    @property
    def title(self) -> str:
        return _TASK_TITLES[self]

    @property
    def metric(self) -> str:
        return _TASK_METRICS[self]

    @property
    def output_size(self) -> int:
        return _TASK_OUTPUTS[self]


_TASK_TITLES: Dict[Task, str] = {
    Task.CLASSIFICATION: "Classification",
    Task.DISTANCE: "Distance estimation",
    Task.LOCALIZATION: "Recognition",
}
_TASK_METRICS: Dict[Task, str] = {
    Task.CLASSIFICATION: "accuracy",
    Task.DISTANCE: "relative_l1",
    Task.LOCALIZATION: "iou",
}
_TASK_OUTPUTS: Dict[Task, int] = {
    Task.CLASSIFICATION: len(ObjectClass),
    Task.DISTANCE: 1,
    Task.LOCALIZATION: 4,
}


@dataclass(frozen=True)
class Color:
    """Linear RGB colour with components in [0, 1].

    Example:
    ```python
    red = Color(0.85, 0.15, 0.1)
    ```
    """

    r: float
    g: float
    b: float

    SKY: ClassVar["Color"]
    FLOOR: ClassVar["Color"]
    RED: ClassVar["Color"]
    BLUE: ClassVar["Color"]
    YELLOW: ClassVar["Color"]

    def __post_init__(self) -> None:
        for component in (self.r, self.g, self.b):
            if not 0.0 <= float(component) <= 1.0:
                raise ValidationException(
                    f"Color component must be between 0 and 1, got {component}"
                )

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.float64)

    @classmethod
    def coerce(cls, value: Union["Color", Sequence[float]]) -> "Color":
        if isinstance(value, Color):
            return value
        r, g, b = (float(v) for v in value)
        return cls(r, g, b)


Color.SKY = Color(0.55, 0.75, 0.95)
Color.FLOOR = Color(0.45, 0.42, 0.38)
Color.RED = Color(0.85, 0.15, 0.1)
Color.BLUE = Color(0.1, 0.3, 0.9)
Color.YELLOW = Color(0.95, 0.85, 0.1)

DEFAULT_ALBEDO: Dict[ObjectClass, Color] = {
    ObjectClass.PYRAMID: Color.RED,
    ObjectClass.BALL: Color.BLUE,
    ObjectClass.DOLL: Color.YELLOW,
}


def normalized(vector: Iterable[float]) -> Vec3:
    arr = np.asarray(list(vector), dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if arr.shape != (3,) or norm == 0.0:
        raise ValidationException(f"Cannot normalize {arr.tolist()}")
    x, y, z = (arr / norm).tolist()
    return (x, y, z)


DEFAULT_LIGHT: Vec3 = normalized((0.35, 0.85, -0.4))


@dataclass(frozen=True)
class ObjectGeometry:
    """Prop dimensions in metres. All objects rest on the floor."""

    pyramid_base: float = 0.5
    pyramid_height: float = 0.6
    ball_radius: float = 0.25
    doll_body_radius: float = 0.22
    doll_head_radius: float = 0.14

    def __post_init__(self) -> None:
        for name in (
            "pyramid_base",
            "pyramid_height",
            "ball_radius",
            "doll_body_radius",
            "doll_head_radius",
        ):
            if getattr(self, name) <= 0:
                raise ValidationException(f"{name} must be positive")

    def height(self, object_class: ObjectClass) -> float:
        """Vertical extent of the object above the floor."""
        if object_class is ObjectClass.PYRAMID:
            return self.pyramid_height
        if object_class is ObjectClass.BALL:
            return 2.0 * self.ball_radius
        return 2.0 * self.doll_body_radius + 2.0 * self.doll_head_radius

    def center_height(self, object_class: ObjectClass) -> float:
        return 0.5 * self.height(object_class)

    def bounding_radius(self, object_class: ObjectClass) -> float:
        """Radius of a sphere around the object centre that contains the object."""
        half_height = self.center_height(object_class)
        if object_class is ObjectClass.PYRAMID:
            half_diag = self.pyramid_base / math.sqrt(2.0)
            return math.hypot(half_diag, half_height)
        if object_class is ObjectClass.BALL:
            return self.ball_radius
        return half_height


@dataclass(frozen=True)
class PropObject:
    """
    A prop resting on the floor.

    ``position`` is the point on the floor under the object's centre; the
    vertical centre is ``position[1] + geometry.center_height(object_class)``.
    """

    id: int
    object_class: ObjectClass
    position: Vec3
    yaw: float = 0.0
    albedo: Optional[Color] = None

    def __post_init__(self) -> None:
        position = tuple(float(v) for v in self.position)
        if len(position) != 3 or not all(math.isfinite(v) for v in position):
            raise ValidationException(f"Object position must be a finite 3-vector: {self.position}")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "object_class", ObjectClass.coerce(self.object_class))
        if self.albedo is None:
            object.__setattr__(self, "albedo", DEFAULT_ALBEDO[self.object_class])

    @property
    def color(self) -> Color:
        return self.albedo or DEFAULT_ALBEDO[self.object_class]

    def center(self, geometry: ObjectGeometry) -> np.ndarray:
        x, y, z = self.position
        return np.array([x, y + geometry.center_height(self.object_class), z])

    def translated(self, offset: Sequence[float]) -> "PropObject":
        x, y, z = self.position
        dx, dy, dz = offset
        return replace(self, position=(x + dx, y + dy, z + dz))


@dataclass(frozen=True)
class Scene:
    """Props plus the constant parts of the world: floor, sky and light."""

    objects: Tuple[PropObject, ...] = ()
    floor_color: Color = field(default_factory=lambda: Color.FLOOR)
    sky_color: Color = field(default_factory=lambda: Color.SKY)
    light: Vec3 = DEFAULT_LIGHT
    floor_height: float = 0.0
    geometry: ObjectGeometry = field(default_factory=ObjectGeometry)

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [obj.id for obj in self.objects]
        if len(ids) != len(set(ids)):
            raise ValidationException(f"Object ids must be unique, got {ids}")
        light = tuple(float(v) for v in self.light)
        if len(light) != 3 or abs(math.sqrt(sum(v * v for v in light)) - 1.0) > 1e-6:
            raise ValidationException(f"Light direction must be a unit 3-vector: {self.light}")
        object.__setattr__(self, "light", light)

    def object_by_id(self, object_id: int) -> PropObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise ValidationException(f"Unknown object id {object_id}")

    def object_of_class(self, object_class: ObjectClass) -> PropObject:
        for obj in self.objects:
            if obj.object_class is object_class:
                return obj
        raise ValidationException(f"No {object_class.name} in scene")

    def translated(self, offset: Sequence[float]) -> "Scene":
        return replace(
            self,
            objects=tuple(obj.translated(offset) for obj in self.objects),
            floor_height=self.floor_height + float(offset[1]),
        )


@dataclass(frozen=True)
class StereoCamera:
    """
    Two horizontally offset pinhole cameras looking along ``yaw``.

    ``position`` is the midpoint between the eyes (its y is the eye height).
    Yaw 0 looks along +z; increasing yaw turns right, towards +x.
    """

    position: Vec3 = (0.0, 0.45, 0.0)
    yaw: float = 0.0
    baseline: float = 0.06
    fov_deg: float = 90.0
    resolution: int = 84

    EYE_HEIGHT: ClassVar[float] = 0.45

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if self.resolution < 1:
            raise ValidationException(f"Resolution must be positive, got {self.resolution}")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValidationException(f"Field of view must be in (0, 180), got {self.fov_deg}")
        if self.baseline < 0:
            raise ValidationException("Baseline cannot be negative")

    @classmethod
    def at(
        cls,
        x: float,
        z: float,
        yaw: float,
        eye_height: float = EYE_HEIGHT,
        **kwargs: Any,
    ) -> "StereoCamera":
        return cls(position=(x, eye_height, z), yaw=yaw, **kwargs)

    @property
    def width(self) -> int:
        return self.resolution

    @property
    def height(self) -> int:
        return self.resolution

    @property
    def focal_length(self) -> float:
        """Focal length in pixels."""
        return (self.resolution / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)

    def forward(self) -> np.ndarray:
        return np.array([math.sin(self.yaw), 0.0, math.cos(self.yaw)])

    def right(self) -> np.ndarray:
        return np.array([math.cos(self.yaw), 0.0, -math.sin(self.yaw)])

    def eye_offset(self, eye: Eye) -> np.ndarray:
        sign = -1.0 if eye is Eye.LEFT else 1.0
        return sign * (self.baseline / 2.0) * self.right()

    def eye_position(self, eye: Eye) -> np.ndarray:
        return np.asarray(self.position) + self.eye_offset(eye)

    def translated(self, offset: Sequence[float]) -> "StereoCamera":
        x, y, z = self.position
        dx, dy, dz = offset
        return replace(self, position=(x + dx, y + dy, z + dz))


@dataclass(frozen=True)
class BoundingBox:
    """
    Axis-aligned box in normalized image coordinates (centre and size).

    All four values lie in [0, 1]; the box lies inside the unit square.
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "w", "h"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValidationException(f"Bounding box {name} must be in [0, 1], got {value}")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_pixels(self, width: int, height: int) -> Tuple[int, int, int, int]:
        """Inclusive pixel rectangle (col0, row0, col1, row1)."""
        col0 = round((self.cx - self.w / 2.0) * width)
        row0 = round((self.cy - self.h / 2.0) * height)
        col1 = round((self.cx + self.w / 2.0) * width) - 1
        row1 = round((self.cy + self.h / 2.0) * height) - 1
        return col0, row0, col1, row1


@dataclass(frozen=True)
class AgentPose:
    """
    Agent position on the floor plus heading.

    The heading is kept as a base angle and an integer count of turn quanta so
    that a left turn followed by a right turn restores it exactly.
    """

    x: float
    z: float
    base_yaw: float = 0.0
    turns: int = 0
    turn_step_deg: float = 15.0

    @property
    def yaw(self) -> float:
        return self.base_yaw + self.turns * math.radians(self.turn_step_deg)

    def bearing_to(self, x: float, z: float) -> float:
        """Signed angle from the heading to the point, positive to the right."""
        dx, dz = x - self.x, z - self.z
        yaw = self.yaw
        ahead = dx * math.sin(yaw) + dz * math.cos(yaw)
        lateral = dx * math.cos(yaw) - dz * math.sin(yaw)
        return math.atan2(lateral, ahead)

    def distance_to(self, x: float, z: float) -> float:
        return math.hypot(x - self.x, z - self.z)
