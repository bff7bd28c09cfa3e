from __future__ import annotations

from typing import List, Optional, Sequence, Union

from typing_extensions import Self

from .exceptions import ValidationException
from .models import (
    DEFAULT_LIGHT,
    Color,
    ObjectClass,
    ObjectGeometry,
    PropObject,
    Scene,
    Vec3,
    normalized,
)


class SceneBuilder:
    """
    Fluent builder for scenes.

    Usage:
        scene = SceneBuilder().ball(at=(0.0, 0.0, 2.0)).doll(at=(1.0, 0.0, 3.0)).build()
    """

    def __init__(self) -> None:
        self._objects: List[PropObject] = []
        self._floor_color: Color = Color.FLOOR
        self._sky_color: Color = Color.SKY
        self._light: Vec3 = DEFAULT_LIGHT
        self._geometry = ObjectGeometry()

    def add(
        self,
        object_class: Union[ObjectClass, str],
        at: Sequence[float],
        yaw: float = 0.0,
        albedo: Optional[Color] = None,
        object_id: Optional[int] = None,
    ) -> Self:
        """
        Adds a prop. Ids are assigned in insertion order unless given.

        Raises:
            ValidationException: If ``at`` is not a 3-vector.
        """
        if len(at) != 3:
            raise ValidationException(f"Position must have 3 components, got {len(at)}")
        next_id = object_id if object_id is not None else len(self._objects)
        x, y, z = (float(v) for v in at)
        self._objects.append(
            PropObject(
                id=next_id,
                object_class=ObjectClass.coerce(object_class),
                position=(x, y, z),
                yaw=yaw,
                albedo=albedo,
            )
        )
        return self

    def pyramid(self, at: Sequence[float], yaw: float = 0.0) -> Self:
        return self.add(ObjectClass.PYRAMID, at, yaw)

    def ball(self, at: Sequence[float], yaw: float = 0.0) -> Self:
        return self.add(ObjectClass.BALL, at, yaw)

    def doll(self, at: Sequence[float], yaw: float = 0.0) -> Self:
        return self.add(ObjectClass.DOLL, at, yaw)

    def floor(self, color: Union[Color, Sequence[float]]) -> Self:
        self._floor_color = Color.coerce(color)
        return self

    def sky(self, color: Union[Color, Sequence[float]]) -> Self:
        self._sky_color = Color.coerce(color)
        return self

    def light(self, direction: Sequence[float]) -> Self:
        self._light = normalized(direction)
        return self

    def geometry(self, geometry: ObjectGeometry) -> Self:
        self._geometry = geometry
        return self

    def from_scene(self, scene: Scene) -> Self:
        """Starts from the colours, light and geometry of an existing scene."""
        self._floor_color = scene.floor_color
        self._sky_color = scene.sky_color
        self._light = scene.light
        self._geometry = scene.geometry
        return self

    def build(self) -> Scene:
        return Scene(
            objects=tuple(self._objects),
            floor_color=self._floor_color,
            sky_color=self._sky_color,
            light=self._light,
            geometry=self._geometry,
        )
