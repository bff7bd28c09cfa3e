"""
CPU raycaster for the binocular observation and ground-truth silhouettes.

Every pixel casts one primary ray per eye against analytic primitives: spheres
(ball, doll), a convex intersection of half-spaces (pyramid) and the floor plane.
The whole image is traced at once with numpy; there is no per-pixel loop.

Object positions are taken relative to the camera and snapped to a fixed
binary lattice before tracing, so moving scene and camera together leaves
the image unchanged bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw

from .exceptions import ValidationException
from .models import (
    BoundingBox,
    Eye,
    ObjectClass,
    Observation,
    PropObject,
    Scene,
    StereoCamera,
)

logger = logging.getLogger(__name__)

AMBIENT = 0.15
HIT_EPSILON = 1e-9
_LATTICE = float(2**30)

BACKGROUND = -1


@dataclass
class _Hits:
    """Nearest hit per pixel: distance, object id (BACKGROUND if none) and normal."""

    t: np.ndarray
    ids: np.ndarray
    normals: np.ndarray


def _snap(values: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(values, dtype=np.float64) * _LATTICE) / _LATTICE


@lru_cache(maxsize=16)
def _camera_rays(resolution: int, fov_deg: float) -> np.ndarray:
    """Unit ray directions in camera space (right, up, forward), shape [H, W, 3]."""
    focal = (resolution / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    centers = np.arange(resolution, dtype=np.float64) + 0.5
    u = (centers - resolution / 2.0) / focal
    v = (resolution / 2.0 - centers) / focal
    uu, vv = np.meshgrid(u, v)
    rays = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    rays.setflags(write=False)
    return rays


def ray_directions(camera: StereoCamera) -> np.ndarray:
    """World-space unit ray directions for every pixel, shape [H, W, 3]."""
    local = _camera_rays(camera.resolution, camera.fov_deg)
    basis = np.stack([camera.right(), np.array([0.0, 1.0, 0.0]), camera.forward()])
    return local @ basis


def _relative(camera: StereoCamera, eye: Eye, point: np.ndarray) -> np.ndarray:
    """Point relative to the given eye, on the snapping lattice."""
    mid = np.asarray(camera.position, dtype=np.float64)
    return _snap(point - mid) - camera.eye_offset(eye)


def _intersect_sphere(
    rays: np.ndarray, center: np.ndarray, radius: float
) -> Tuple[np.ndarray, np.ndarray]:
    b = rays @ center
    c = float(center @ center) - radius * radius
    disc = b * b - c
    hit = disc >= 0.0
    root = np.sqrt(np.where(hit, disc, 0.0))
    near = b - root
    far = b + root
    t = np.where(near > HIT_EPSILON, near, far)
    t = np.where(hit & (t > HIT_EPSILON), t, np.inf)
    points = rays * np.where(np.isfinite(t), t, 0.0)[..., None]
    normals = (points - center) / radius
    return t, normals


def _pyramid_planes(
    anchor: np.ndarray, yaw: float, base: float, height: float
) -> List[Tuple[np.ndarray, float]]:
    """
    Half-spaces n·p <= d whose intersection is the square pyramid.

    ``anchor`` is the centre of the base on the floor.
    """
    half = base / 2.0
    apex = anchor + np.array([0.0, height, 0.0])
    planes: List[Tuple[np.ndarray, float]] = [
        (np.array([0.0, -1.0, 0.0]), -float(anchor[1]))
    ]
    for k in range(4):
        angle = yaw + k * math.pi / 2.0
        ux, uz = math.sin(angle), math.cos(angle)
        normal = np.array([height * ux, half, height * uz])
        normal /= np.linalg.norm(normal)
        planes.append((normal, float(normal @ apex)))
    return planes


def _intersect_convex(
    rays: np.ndarray, planes: List[Tuple[np.ndarray, float]]
) -> Tuple[np.ndarray, np.ndarray]:
    shape = rays.shape[:-1]
    t_enter = np.full(shape, -np.inf)
    t_exit = np.full(shape, np.inf)
    enter_normal = np.zeros(rays.shape)
    missed = np.zeros(shape, dtype=bool)
    for normal, offset in planes:
        slope = rays @ normal
        # the eye is the origin: t * slope <= offset
        with np.errstate(divide="ignore", invalid="ignore"):
            t_plane = offset / slope
        entering = slope < 0.0
        exiting = slope > 0.0
        parallel = ~(entering | exiting)
        missed |= parallel & (offset < 0.0)
        better = entering & (t_plane > t_enter)
        t_enter = np.where(better, t_plane, t_enter)
        enter_normal[better] = normal
        t_exit = np.where(exiting, np.minimum(t_exit, t_plane), t_exit)
    hit = ~missed & (t_enter <= t_exit) & (t_exit > HIT_EPSILON)
    outside = t_enter > HIT_EPSILON
    t = np.where(hit, np.where(outside, t_enter, t_exit), np.inf)
    return t, enter_normal


def _intersect_object(
    rays: np.ndarray, scene: Scene, camera: StereoCamera, eye: Eye, obj: PropObject
) -> Tuple[np.ndarray, np.ndarray]:
    geometry = scene.geometry
    anchor = _relative(camera, eye, np.asarray(obj.position, dtype=np.float64))
    up = np.array([0.0, 1.0, 0.0])
    if obj.object_class is ObjectClass.BALL:
        return _intersect_sphere(rays, anchor + geometry.ball_radius * up, geometry.ball_radius)
    if obj.object_class is ObjectClass.PYRAMID:
        planes = _pyramid_planes(anchor, obj.yaw, geometry.pyramid_base, geometry.pyramid_height)
        return _intersect_convex(rays, planes)
    body_r, head_r = geometry.doll_body_radius, geometry.doll_head_radius
    t_body, n_body = _intersect_sphere(rays, anchor + body_r * up, body_r)
    t_head, n_head = _intersect_sphere(rays, anchor + (2.0 * body_r + head_r) * up, head_r)
    head_first = t_head < t_body
    return (
        np.where(head_first, t_head, t_body),
        np.where(head_first[..., None], n_head, n_body),
    )


def _culled(scene: Scene, camera: StereoCamera, eye: Eye, obj: PropObject) -> bool:
    """True if the object's bounding sphere lies entirely behind the eye."""
    center = _relative(camera, eye, obj.center(scene.geometry))
    radius = scene.geometry.bounding_radius(obj.object_class)
    return float(center @ camera.forward()) < -radius


def _trace(scene: Scene, camera: StereoCamera, eye: Eye) -> _Hits:
    rays = ray_directions(camera)
    shape = rays.shape[:-1]
    best_t = np.full(shape, np.inf)
    ids = np.full(shape, BACKGROUND, dtype=np.int64)
    normals = np.zeros(rays.shape)
    for obj in scene.objects:
        if _culled(scene, camera, eye, obj):
            continue
        t, n = _intersect_object(rays, scene, camera, eye, obj)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        ids = np.where(closer, obj.id, ids)
        normals[closer] = n[closer]

    floor_y = float(_snap(np.array(scene.floor_height - camera.position[1])))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = np.where(rays[..., 1] < 0.0, floor_y / rays[..., 1], np.inf)
    t_floor = np.where(t_floor > HIT_EPSILON, t_floor, np.inf)
    floor_first = t_floor < best_t
    ids = np.where(floor_first, BACKGROUND, ids)
    best_t = np.where(floor_first, t_floor, best_t)
    return _Hits(t=best_t, ids=ids, normals=normals)


def quantize(values: np.ndarray) -> np.ndarray:
    """Round to 8-bit colour depth (k / 255) and return float32."""
    levels = np.round(np.clip(values, 0.0, 1.0) * 255.0)
    return (levels / 255.0).astype(np.float32)


def _shade(scene: Scene, camera: StereoCamera, eye: Eye) -> np.ndarray:
    hits = _trace(scene, camera, eye)
    rays = ray_directions(camera)
    image = np.empty(rays.shape, dtype=np.float64)
    image[...] = scene.sky_color.as_array()
    image[np.isfinite(hits.t) & (hits.ids == BACKGROUND)] = scene.floor_color.as_array()

    light = np.asarray(scene.light, dtype=np.float64)
    intensity = np.maximum(AMBIENT, hits.normals @ light)
    for obj in scene.objects:
        mask = hits.ids == obj.id
        if mask.any():
            image[mask] = obj.color.as_array() * intensity[mask][:, None]
    return quantize(image).transpose(2, 0, 1)


def render(scene: Scene, camera: StereoCamera) -> Observation:
    """
    Render the binocular observation, float32 [6, H, W] in [0, 1].

    Channels 0-2 are the left eye, 3-5 the right eye.
    """
    left = _shade(scene, camera, Eye.LEFT)
    right = _shade(scene, camera, Eye.RIGHT)
    return np.concatenate([left, right], axis=0)


def object_id_map(scene: Scene, camera: StereoCamera, eye: Eye) -> np.ndarray:
    """Id of the nearest object per pixel, BACKGROUND for floor and sky."""
    return _trace(scene, camera, eye).ids


def silhouette_mask(
    scene: Scene, camera: StereoCamera, object_id: int, eye: Eye = Eye.LEFT
) -> np.ndarray:
    """
    Boolean [H, W] mask of the pixels whose nearest hit is ``object_id``.

    Raises:
        ValidationException: If the scene has no object with that id.
    """
    scene.object_by_id(object_id)
    return object_id_map(scene, camera, eye) == object_id


def mask_to_bbox(mask: np.ndarray) -> Optional[BoundingBox]:
    """Tight normalized box over the true pixels, None for an empty mask."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValidationException(f"Mask must be 2-D, got shape {mask.shape}")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    height, width = mask.shape
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    return BoundingBox(
        cx=(c0 + c1 + 1) / 2.0 / width,
        cy=(r0 + r1 + 1) / 2.0 / height,
        w=(c1 - c0 + 1) / width,
        h=(r1 - r0 + 1) / height,
    )


# --------------------------------------------------------------
# Image output
# --------------------------------------------------------------

OVERLAY_COLOR = (0, 255, 0)


def to_image(observation: Observation, eye: Eye) -> Image.Image:
    channels = observation[:3] if eye is Eye.LEFT else observation[3:6]
    pixels = np.round(np.clip(channels, 0.0, 1.0) * 255.0).astype(np.uint8)
    return Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)))


def draw_bbox(image: Image.Image, bbox: BoundingBox) -> Image.Image:
    """Outline ``bbox`` on a copy of ``image``; the outline covers the box's edge pixels."""
    out = image.copy()
    col0, row0, col1, row1 = bbox.to_pixels(*image.size)
    ImageDraw.Draw(out).rectangle((col0, row0, col1, row1), outline=OVERLAY_COLOR)
    return out


def save_png(image: Image.Image, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    image.save(target, format="PNG")
    return target
