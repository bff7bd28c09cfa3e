import pytest

from toddlerlab.exceptions import ValidationException
from toddlerlab.models import Color, ObjectClass
from toddlerlab.scene_builder import SceneBuilder


class TestSceneBuilder:
    """Fluent scene construction."""

    def test_ids_follow_insertion_order(self):
        builder = SceneBuilder().ball(at=(0, 0, 2)).doll(at=(1, 0, 3)).pyramid(at=(-1, 0, 3))
        scene = builder.build()
        assert [o.id for o in scene.objects] == [0, 1, 2]
        assert [o.object_class for o in scene.objects] == [
            ObjectClass.BALL,
            ObjectClass.DOLL,
            ObjectClass.PYRAMID,
        ]

    def test_explicit_id_and_colour(self):
        scene = SceneBuilder().add("doll", at=(0, 0, 1), object_id=7, albedo=Color.RED).build()
        assert scene.object_by_id(7).color == Color.RED

    def test_position_needs_three_components(self):
        with pytest.raises(ValidationException):
            SceneBuilder().ball(at=(0, 0))

    def test_world_settings(self):
        scene = SceneBuilder().floor((0.1, 0.1, 0.1)).sky((0.2, 0.2, 0.2)).light((0, 2, 0)).build()
        assert scene.floor_color == Color(0.1, 0.1, 0.1)
        assert scene.sky_color == Color(0.2, 0.2, 0.2)
        assert scene.light == (0.0, 1.0, 0.0)

    def test_from_scene_keeps_world_but_not_objects(self):
        base = SceneBuilder().sky((0.3, 0.3, 0.3)).ball(at=(0, 0, 2)).build()
        scene = SceneBuilder().from_scene(base).build()
        assert scene.sky_color == base.sky_color
        assert scene.objects == ()
