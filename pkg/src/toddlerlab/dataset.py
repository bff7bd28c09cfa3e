"""
Labeled single-object dataset for the transfer tasks.

Each sample is one prop in front of a fixed stereo camera, labeled with its
class, the camera-to-centre distance and the left-eye bounding box.

File layout (little-endian):
    b"TDSV1"                magic
    u32                     sample count n
    n times:
        f32 * 6*H*W         observation
        u8                  class
        f64                 distance
        f64 * 4             box (cx, cy, w, h)

Train samples come first, then test samples; the split point is
``floor(7 n / 8)``. H = W is recovered from the file size.
"""

from __future__ import annotations

import logging
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .checkpoint import atomic_writer
from .config import RenderConfig, TransferConfig
from .exceptions import DatasetException, ValidationException
from .models import BoundingBox, ObjectClass, Observation, Scene, StereoCamera
from .renderer import mask_to_bbox, render, silhouette_mask
from .scene_builder import SceneBuilder

logger = logging.getLogger(__name__)

MAGIC = b"TDSV1"
TRAIN_FRACTION = (7, 8)
OBSERVATION_CHANNELS = 6

_COUNT = struct.Struct("<I")
_LABELS = struct.Struct("<Bd4d")


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """One labeled observation; pixels are stored as uint8 levels."""

    pixels: np.ndarray
    object_class: ObjectClass
    distance: float
    bbox: BoundingBox

    def __post_init__(self) -> None:
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3:
            raise ValidationException("Sample pixels must be a uint8 [6, H, W] array")
        if self.distance <= 0:
            raise ValidationException(f"Sample distance must be > 0, got {self.distance}")

    @classmethod
    def from_observation(
        cls, observation: Observation, object_class: ObjectClass, distance: float, bbox: BoundingBox
    ) -> "LabeledSample":
        pixels = np.round(np.clip(observation, 0.0, 1.0) * 255.0).astype(np.uint8)
        return cls(pixels, ObjectClass(object_class), float(distance), bbox)

    @property
    def observation(self) -> Observation:
        return self.pixels.astype(np.float32) / np.float32(255.0)

    @property
    def resolution(self) -> int:
        return int(self.pixels.shape[-1])


@dataclass(frozen=True)
class Dataset:
    train: Tuple[LabeledSample, ...]
    test: Tuple[LabeledSample, ...]
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.train) + len(self.test)

    @property
    def resolution(self) -> int:
        return (self.train or self.test)[0].resolution


def split_point(n: int) -> int:
    num, den = TRAIN_FRACTION
    return (n * num) // den


def class_counts(samples: Sequence[LabeledSample]) -> Dict[ObjectClass, int]:
    counts = Counter(sample.object_class for sample in samples)
    return {cls: counts.get(cls, 0) for cls in ObjectClass}


# --------------------------------------------------------------
# Generation
# --------------------------------------------------------------


def placement(
    object_class: ObjectClass,
    distance: float,
    bearing: float,
    render_config: RenderConfig,
) -> Tuple[float, float]:
    """
    Floor (x, z) of an object whose centre lies ``distance`` metres from the
    camera midpoint at ``bearing`` radians right of straight ahead.
    """
    dy = render_config.geometry().center_height(object_class) - render_config.eye_height
    if distance <= abs(dy):
        raise ValidationException(
            f"Distance {distance} is shorter than the vertical camera offset {abs(dy):.3f}"
        )
    ground = math.sqrt(distance * distance - dy * dy)
    return ground * math.sin(bearing), ground * math.cos(bearing)


def single_object_scene(
    object_class: ObjectClass,
    distance: float,
    bearing: float,
    yaw: float,
    render_config: RenderConfig,
) -> Scene:
    x, z = placement(object_class, distance, bearing, render_config)
    builder = SceneBuilder().from_scene(render_config.empty_scene())
    builder.add(object_class, at=(x, 0.0, z), yaw=yaw, albedo=render_config.albedo(object_class))
    return builder.build()


def label_scene(
    scene: Scene, camera: StereoCamera, distance: float
) -> Optional[LabeledSample]:
    """Render a single-object scene; None if the object is not visible to the left eye."""
    obj = scene.objects[0]
    bbox = mask_to_bbox(silhouette_mask(scene, camera, obj.id))
    if bbox is None:
        return None
    return LabeledSample.from_observation(render(scene, camera), obj.object_class, distance, bbox)


def draw_scene(
    object_class: ObjectClass,
    rng: np.random.Generator,
    render_config: RenderConfig,
    transfer_config: TransferConfig,
) -> Tuple[Scene, LabeledSample]:
    """
    Sample distance, bearing and yaw until the object is visible.

    Raises:
        DatasetException: After ``max_rejections`` consecutive invisible draws.
    """
    camera = render_config.camera()
    max_bearing = math.radians(transfer_config.max_bearing_deg)
    for _ in range(transfer_config.max_rejections):
        distance = float(rng.uniform(transfer_config.min_distance, transfer_config.max_distance))
        bearing = float(rng.uniform(-max_bearing, max_bearing))
        yaw = float(rng.uniform(0.0, 2.0 * math.pi))
        scene = single_object_scene(object_class, distance, bearing, yaw, render_config)
        sample = label_scene(scene, camera, distance)
        if sample is not None:
            return scene, sample
    raise DatasetException(
        f"{object_class.name.lower()} was not visible in {transfer_config.max_rejections}"
        " consecutive draws; check the camera and distance range"
    )


def draw_sample(
    object_class: ObjectClass,
    rng: np.random.Generator,
    render_config: RenderConfig,
    transfer_config: TransferConfig,
) -> LabeledSample:
    return draw_scene(object_class, rng, render_config, transfer_config)[1]


def stratified_split(
    samples: Sequence[LabeledSample], rng: np.random.Generator
) -> Tuple[Tuple[LabeledSample, ...], Tuple[LabeledSample, ...]]:
    """
    Shuffle each class, interleave the classes and cut at floor(7n/8), so
    both splits stay balanced.
    """
    by_class: List[List[LabeledSample]] = []
    for cls in ObjectClass:
        members = [s for s in samples if s.object_class is cls]
        order = rng.permutation(len(members))
        by_class.append([members[i] for i in order])
    interleaved: List[LabeledSample] = []
    longest = max((len(group) for group in by_class), default=0)
    for i in range(longest):
        interleaved.extend(group[i] for group in by_class if i < len(group))
    cut = split_point(len(interleaved))
    return tuple(interleaved[:cut]), tuple(interleaved[cut:])


def generate_dataset(
    seed: int,
    n: Optional[int] = None,
    render_config: Optional[RenderConfig] = None,
    transfer_config: Optional[TransferConfig] = None,
) -> Dataset:
    """Generate ``n`` samples (default ``transfer.dataset_size``) with classes round-robin."""
    render_config = render_config or RenderConfig()
    transfer_config = transfer_config or TransferConfig()
    total = transfer_config.dataset_size if n is None else n
    if total < 1:
        raise ValidationException(f"Dataset size must be >= 1, got {total}")
    rng = np.random.default_rng(seed)
    classes = list(ObjectClass)
    samples = []
    for i in range(total):
        samples.append(draw_sample(classes[i % len(classes)], rng, render_config, transfer_config))
        if (i + 1) % 500 == 0:
            logger.debug("Generated %d/%d samples", i + 1, total)
    train, test = stratified_split(samples, rng)
    logger.info("Generated dataset: %d train, %d test (seed %d)", len(train), len(test), seed)
    return Dataset(train=train, test=test, seed=seed)


# --------------------------------------------------------------
# File format
# --------------------------------------------------------------


def write_dataset(path: Union[str, Path], dataset: Dataset) -> Path:
    samples = dataset.train + dataset.test
    if split_point(len(samples)) != len(dataset.train):
        raise DatasetException(
            f"Split {len(dataset.train)}/{len(dataset.test)} does not follow the 7/8 rule"
        )
    with atomic_writer(path) as handle:
        handle.write(MAGIC)
        handle.write(_COUNT.pack(len(samples)))
        for sample in samples:
            handle.write(sample.observation.astype("<f4").tobytes(order="C"))
            handle.write(
                _LABELS.pack(int(sample.object_class), sample.distance, *sample.bbox.as_tuple())
            )
    logger.info("Wrote %d samples to %s", len(samples), path)
    return Path(path)


def _resolution_from_size(payload_size: int, count: int) -> int:
    if count == 0:
        raise DatasetException("Dataset file holds no samples")
    per_sample, remainder = divmod(payload_size, count)
    pixels = per_sample - _LABELS.size
    side = math.isqrt(max(pixels // (4 * OBSERVATION_CHANNELS), 0))
    if remainder or side < 1 or 4 * OBSERVATION_CHANNELS * side * side != pixels:
        raise DatasetException("Dataset file size does not match its sample count")
    return side


def read_dataset(path: Union[str, Path]) -> Dataset:
    """
    Raises:
        DatasetException: If the file is missing, has the wrong magic or is truncated.
    """
    source = Path(path)
    if not source.is_file():
        raise DatasetException(f"Dataset file not found: {source}")
    payload = source.read_bytes()
    header = len(MAGIC) + _COUNT.size
    if len(payload) < header or payload[: len(MAGIC)] != MAGIC:
        raise DatasetException(f"Not a dataset file: {source}")
    (count,) = _COUNT.unpack_from(payload, len(MAGIC))
    side = _resolution_from_size(len(payload) - header, count)
    pixel_count = OBSERVATION_CHANNELS * side * side
    samples: List[LabeledSample] = []
    offset = header
    for _ in range(count):
        observation = np.frombuffer(payload, dtype="<f4", count=pixel_count, offset=offset)
        offset += 4 * pixel_count
        cls, distance, cx, cy, w, h = _LABELS.unpack_from(payload, offset)
        offset += _LABELS.size
        try:
            samples.append(
                LabeledSample.from_observation(
                    observation.reshape(OBSERVATION_CHANNELS, side, side),
                    ObjectClass(cls),
                    distance,
                    BoundingBox(cx, cy, w, h),
                )
            )
        except (ValueError, ValidationException) as e:
            raise DatasetException(f"Corrupt sample at byte {offset}", cause=e) from e
    cut = split_point(count)
    return Dataset(train=tuple(samples[:cut]), test=tuple(samples[cut:]))


# --------------------------------------------------------------
# Distance normalisation
# --------------------------------------------------------------


@dataclass(frozen=True)
class DistanceNormalizer:
    """z = (ln d − mu) / sigma, fitted on the train split."""

    mu: float
    sigma: float

    def normalize(self, distance: Union[float, np.ndarray]) -> np.ndarray:
        return (np.log(np.asarray(distance, dtype=np.float64)) - self.mu) / self.sigma

    def denormalize(self, z: Union[float, np.ndarray]) -> np.ndarray:
        return np.exp(np.asarray(z, dtype=np.float64) * self.sigma + self.mu)


def fit_normalizer(train: Sequence[LabeledSample]) -> DistanceNormalizer:
    """
    Raises:
        DatasetException: If the split is empty or its log-distances have no spread.
    """
    if len(train) == 0:
        raise DatasetException("Cannot fit a distance normalizer on an empty split")
    logs = np.log(np.array([s.distance for s in train], dtype=np.float64))
    sigma = float(np.std(logs))
    if not math.isfinite(sigma) or sigma < 1e-12:
        raise DatasetException("Distances have zero variance; the dataset is degenerate")
    return DistanceNormalizer(mu=float(np.mean(logs)), sigma=sigma)
