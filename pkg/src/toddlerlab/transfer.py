"""
Transfer evaluation: linear heads on the encoder's feature map for three
downstream tasks, under four encoder regimes.

Heads read the unmasked feature map F, flattened. For every regime except
``supervised`` the encoder is frozen and its features are computed once.
"""

from __future__ import annotations

import logging
import multiprocessing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .agent import AgentNetwork, Encoder, require_prefix
from .autodiff import (
    Tape,
    Tensor,
    backward,
    mse,
    no_grad,
    reshape,
    sigmoid,
    softmax_cross_entropy,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import AgentConfig, RunConfig, TransferConfig
from .dataset import Dataset, DistanceNormalizer, LabeledSample, fit_normalizer
from .environment import Playpen, random_action
from .exceptions import CheckpointException, ValidationException
from .models import BoundingBox, Regime, Task
from .nn import LinearLayer, Module, named_parameters_of, trainable
from .optim import Adam

logger = logging.getLogger(__name__)

FEATURE_BATCH = 64
MIN_BOX_SIZE = 1e-6

BoxLike = Union[BoundingBox, Sequence[float]]

_REQUIRED_PREFIX: Dict[Regime, str] = {
    Regime.AUTOENCODER: "dec.",
    Regime.PROPOSED: "pi.",
}


# --------------------------------------------------------------
# Metrics
# --------------------------------------------------------------


def _corners(box: BoxLike) -> Tuple[float, float, float, float]:
    cx, cy, w, h = box.as_tuple() if isinstance(box, BoundingBox) else tuple(box)
    if w <= 0 or h <= 0:
        raise ValidationException(f"Box width and height must be > 0, got w={w}, h={h}")
    return cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0


def iou(box_a: BoxLike, box_b: BoxLike) -> float:
    """Intersection over union of two (cx, cy, w, h) boxes."""
    ax0, ay0, ax1, ay1 = _corners(box_a)
    bx0, by0, bx1, by1 = _corners(box_b)
    inter_w = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    inter_h = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = inter_w * inter_h
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return float(min(max(inter / union, 0.0), 1.0))


def score(
    task: Task,
    predictions: np.ndarray,
    samples: Sequence[LabeledSample],
    normalizer: Optional[DistanceNormalizer] = None,
    error_in_z: bool = False,
) -> float:
    """
    Metric in percent for raw head outputs.

    - classification: logits [N, 3] → top-1 accuracy
    - distance: z [N] or [N, 1] → 100 · mean(|d̂ − d| / d) with d̂ = exp(z σ + μ)
    - localization: boxes [N, 4] → 100 · mean IoU
    """
    if len(samples) == 0:
        raise ValidationException("Cannot score an empty split")
    if task is Task.CLASSIFICATION:
        labels = np.array([int(s.object_class) for s in samples])
        return 100.0 * float(np.mean(np.argmax(predictions, axis=-1) == labels))
    if task is Task.DISTANCE:
        if normalizer is None:
            raise ValidationException("Distance scoring needs the train-split normalizer")
        z_hat = np.asarray(predictions, dtype=np.float64).reshape(-1)
        distances = np.array([s.distance for s in samples], dtype=np.float64)
        if error_in_z:
            return 100.0 * float(np.mean(np.abs(z_hat - normalizer.normalize(distances))))
        d_hat = normalizer.denormalize(z_hat)
        return 100.0 * float(np.mean(np.abs(d_hat - distances) / distances))
    boxes = np.clip(np.asarray(predictions, dtype=np.float64), MIN_BOX_SIZE, 1.0)
    return 100.0 * float(np.mean([iou(tuple(b), s.bbox) for b, s in zip(boxes, samples)]))


# --------------------------------------------------------------
# Heads
# --------------------------------------------------------------


class TransferHead(Module):
    """One linear layer; localization outputs go through a sigmoid."""

    def __init__(self, task: Task, in_features: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.task = task
        self.fc = LinearLayer(in_features, task.output_size, rng)
        self.add_module("fc", self.fc)

    def __call__(self, features: Tensor) -> Tensor:
        out = self.fc(features)
        return sigmoid(out) if self.task is Task.LOCALIZATION else out


def flat_features(encoder: Encoder, observations: np.ndarray) -> Tensor:
    """Unmasked feature map for a batch, flattened to [B, K·M]."""
    features = encoder(Tensor(observations))
    return reshape(features, (features.shape[0], features.size // features.shape[0]))


def extract_features(encoder: Encoder, samples: Sequence[LabeledSample]) -> np.ndarray:
    chunks = []
    with no_grad():
        for start in range(0, len(samples), FEATURE_BATCH):
            batch = np.stack([s.observation for s in samples[start : start + FEATURE_BATCH]])
            chunks.append(flat_features(encoder, batch).data)
    return np.concatenate(chunks, axis=0)


def _targets(
    task: Task, samples: Sequence[LabeledSample], normalizer: Optional[DistanceNormalizer]
) -> np.ndarray:
    if task is Task.CLASSIFICATION:
        return np.array([int(s.object_class) for s in samples], dtype=np.int64)
    if task is Task.DISTANCE:
        assert normalizer is not None
        z = normalizer.normalize([s.distance for s in samples])
        return z.astype(np.float32).reshape(-1, 1)
    return np.array([s.bbox.as_tuple() for s in samples], dtype=np.float32)


def _loss(task: Task, outputs: Tensor, targets: np.ndarray) -> Tensor:
    if task is Task.CLASSIFICATION:
        return softmax_cross_entropy(outputs, targets)
    return mse(outputs, targets)


@dataclass
class HeadResult:
    head: TransferHead
    encoder: Encoder
    losses: List[float] = field(default_factory=list)


def train_head(
    task: Task,
    regime: Regime,
    train: Sequence[LabeledSample],
    encoder: Encoder,
    config: TransferConfig,
    seed: int,
    normalizer: Optional[DistanceNormalizer] = None,
) -> HeadResult:
    """
    Fit a linear head on the train split; ``losses`` holds the mean training
    loss of every epoch.

    Frozen regimes never modify the encoder. ``supervised`` trains encoder and
    head together.
    """
    if len(train) == 0:
        raise ValidationException("Cannot train a head on an empty split")
    if task is Task.DISTANCE and normalizer is None:
        normalizer = fit_normalizer(train)
    rng = np.random.default_rng(seed)
    head = TransferHead(task, encoder.num_interactions * encoder.feature_dim, rng)
    targets = _targets(task, train, normalizer)

    if regime.frozen:
        encoder.freeze()
        cached = extract_features(encoder, train)
    else:
        encoder.unfreeze()
    blocks = named_parameters_of({"enc": encoder, "head": head})
    optimizer = Adam(trainable(blocks), lr=config.lr)

    losses: List[float] = []
    n = len(train)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            index = order[start : start + config.batch_size]
            optimizer.zero_grad()
            with Tape() as tape:
                if regime.frozen:
                    features = Tensor(cached[index])
                else:
                    batch = np.stack([train[int(i)].observation for i in index])
                    features = flat_features(encoder, batch)
                loss = _loss(task, head(features), targets[index])
            backward(loss, tape, optimizer.params)
            optimizer.step()
            total += loss.item() * len(index)
        losses.append(total / n)
        logger.debug(
            "%s/%s epoch %d: loss %.5f", regime.value, task.value, epoch + 1, losses[-1]
        )
    return HeadResult(head=head, encoder=encoder, losses=losses)


def predict(head: TransferHead, encoder: Encoder, samples: Sequence[LabeledSample]) -> np.ndarray:
    features = extract_features(encoder, samples)
    with no_grad():
        return head(Tensor(features)).data


def evaluate(
    task: Task,
    head: TransferHead,
    encoder: Encoder,
    test: Sequence[LabeledSample],
    normalizer: Optional[DistanceNormalizer] = None,
    error_in_z: bool = False,
) -> float:
    return score(task, predict(head, encoder, test), test, normalizer, error_in_z)


# --------------------------------------------------------------
# Encoder provenance
# --------------------------------------------------------------


def encoder_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, 0])


def cell_seed(seed: int, regime: Regime, task: Task) -> int:
    regimes, tasks = list(Regime), list(Task)
    sequence = np.random.SeedSequence([seed, 1, regimes.index(regime), tasks.index(task)])
    return int(sequence.generate_state(1)[0])


def checkpoint_encoder_state(
    regime: Regime, path: Union[str, Path, None]
) -> Optional[Dict[str, np.ndarray]]:
    """
    Load and check the checkpoint a regime starts from; None for regimes that
    start from a random initialization.

    Raises:
        CheckpointException: If the checkpoint is missing or from the wrong kind of training.
    """
    prefix = _REQUIRED_PREFIX.get(regime)
    if prefix is None:
        return None
    if path is None:
        raise CheckpointException(
            f"The {regime.value} regime needs a checkpoint; train one or enable train_on_demand"
        )
    state = load_checkpoint(path)
    require_prefix(state, prefix, f"the {regime.value} regime")
    require_prefix(state, "enc.", f"the {regime.value} regime")
    return state


def build_encoder(
    regime: Regime,
    agent_config: AgentConfig,
    resolution: int,
    seed: int,
    state: Optional[Mapping[str, np.ndarray]] = None,
) -> Encoder:
    encoder = Encoder.from_config(
        agent_config, np.random.default_rng(encoder_seed(seed)), resolution
    )
    if regime in _REQUIRED_PREFIX:
        if state is None:
            raise CheckpointException(f"The {regime.value} regime needs checkpoint parameters")
        encoder.load_state_dict(state, prefix="enc.")
    return encoder


# --------------------------------------------------------------
# Autoencoder baseline
# --------------------------------------------------------------


def collect_frames(playpen: Playpen, count: int, rng: np.random.Generator) -> np.ndarray:
    """Frames from a uniform-random policy, as uint8 [count, 6, H, W]."""
    frames = np.zeros((count,) + playpen.observation_shape, dtype=np.uint8)
    state, observation, _ = playpen.reset(int(rng.integers(2**31 - 1)))
    for i in range(count):
        assert observation is not None
        frames[i] = np.round(observation * 255.0).astype(np.uint8)
        result = playpen.step(state, random_action(rng))
        observation = result.observation
        if result.done:
            state, observation, _ = playpen.reset(int(rng.integers(2**31 - 1)))
    return frames


def _as_float(frames: np.ndarray) -> np.ndarray:
    return frames.astype(np.float32) / np.float32(255.0)


def reconstruction_mse(network: AgentNetwork, frames: np.ndarray, batch_size: int = 32) -> float:
    total = 0.0
    with no_grad():
        for start in range(0, len(frames), batch_size):
            batch = _as_float(frames[start : start + batch_size])
            recon = network.decode(network.encode(Tensor(batch)))
            total += mse(recon, batch).item() * len(batch)
    return total / len(frames)


@dataclass
class AutoencoderResult:
    network: AgentNetwork
    initial_mse: float
    final_mse: float
    losses: List[float]
    checkpoint: Optional[Path] = None


def autoencoder_state(network: AgentNetwork) -> Dict[str, np.ndarray]:
    """Only the encoder and decoder go into an autoencoder checkpoint."""
    return {
        name: array
        for name, array in network.state_dict().items()
        if name.startswith(("enc.", "dec."))
    }


def train_autoencoder(
    config: RunConfig, seed: int, path: Union[str, Path, None] = None
) -> AutoencoderResult:
    """
    Train encoder and decoder on random-policy frames with a reconstruction
    loss; the held-out frames measure reconstruction error before and after.
    """
    cfg = config.transfer
    init_seq, frame_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(3)
    network = AgentNetwork.build(
        config.agent,
        config.render.resolution,
        np.random.default_rng(init_seq),
        with_decoder=True,
    )
    playpen = Playpen(config.env, config.render)
    frames = collect_frames(
        playpen, cfg.autoencoder_frames + cfg.autoencoder_holdout, np.random.default_rng(frame_seq)
    )
    train_frames, holdout = frames[: cfg.autoencoder_frames], frames[cfg.autoencoder_frames :]
    initial = reconstruction_mse(network, holdout, cfg.autoencoder_batch_size)
    logger.info("Autoencoder: %d frames, held-out mse %.5f", len(train_frames), initial)

    assert network.dec is not None
    optimizer = Adam(
        named_parameters_of({"enc": network.enc, "dec": network.dec}), lr=cfg.autoencoder_lr
    )
    rng = np.random.default_rng(shuffle_seq)
    losses: List[float] = []
    for epoch in range(cfg.autoencoder_epochs):
        order = rng.permutation(len(train_frames))
        total = 0.0
        for start in range(0, len(order), cfg.autoencoder_batch_size):
            batch = _as_float(train_frames[order[start : start + cfg.autoencoder_batch_size]])
            optimizer.zero_grad()
            with Tape() as tape:
                loss = mse(network.decode(network.encode(Tensor(batch))), batch)
            backward(loss, tape, optimizer.params)
            optimizer.step()
            total += loss.item() * len(batch)
        losses.append(total / len(train_frames))
        logger.info("Autoencoder epoch %d: mse %.5f", epoch + 1, losses[-1])

    final = reconstruction_mse(network, holdout, cfg.autoencoder_batch_size)
    logger.info("Autoencoder held-out mse %.5f -> %.5f", initial, final)
    target = save_checkpoint(path, autoencoder_state(network)) if path is not None else None
    return AutoencoderResult(network, initial, final, losses, target)


# --------------------------------------------------------------
# Run matrix
# --------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    regime: Regime
    task: Task
    seed: int


@dataclass(frozen=True)
class CellResult:
    regime: Regime
    task: Task
    seed: int
    metric: float
    losses: Tuple[float, ...]


def run_cell(
    cell: Cell,
    dataset: Dataset,
    config: RunConfig,
    states: Mapping[Regime, Optional[Dict[str, np.ndarray]]],
) -> CellResult:
    """Train one head and score it on the test split."""
    normalizer = fit_normalizer(dataset.train) if cell.task is Task.DISTANCE else None
    encoder = build_encoder(
        cell.regime, config.agent, dataset.resolution, cell.seed, states.get(cell.regime)
    )
    result = train_head(
        cell.task,
        cell.regime,
        dataset.train,
        encoder,
        config.transfer,
        cell_seed(cell.seed, cell.regime, cell.task),
        normalizer,
    )
    metric = evaluate(
        cell.task,
        result.head,
        result.encoder,
        dataset.test,
        normalizer,
        config.transfer.distance_error_in_z,
    )
    logger.info(
        "%s / %s / seed %d: %s %.2f",
        cell.regime.value,
        cell.task.value,
        cell.seed,
        cell.task.metric,
        metric,
    )
    return CellResult(cell.regime, cell.task, cell.seed, metric, tuple(result.losses))


_WORKER: Dict[str, object] = {}


def _init_worker(
    dataset: Dataset,
    config: RunConfig,
    states: Mapping[Regime, Optional[Dict[str, np.ndarray]]],
) -> None:
    _WORKER.update(dataset=dataset, config=config, states=states)


def _run_in_worker(cell: Cell) -> CellResult:
    return run_cell(
        cell,
        _WORKER["dataset"],  # type: ignore[arg-type]
        _WORKER["config"],  # type: ignore[arg-type]
        _WORKER["states"],  # type: ignore[arg-type]
    )


def _order_key(result: CellResult) -> Tuple[int, int, int]:
    return (list(Task).index(result.task), list(Regime).index(result.regime), result.seed)


def run_matrix(
    config: RunConfig,
    dataset: Dataset,
    checkpoints: Mapping[Regime, Union[str, Path]],
    regimes: Optional[Sequence[Regime]] = None,
    tasks: Optional[Sequence[Task]] = None,
    seeds: Optional[Sequence[int]] = None,
    jobs: Optional[int] = None,
) -> List[CellResult]:
    """
    Every (regime, task, seed) cell, ordered by task, regime and seed whatever
    the completion order. ``jobs > 1`` runs cells in worker processes.
    """
    cfg = config.transfer
    regimes = list(regimes if regimes is not None else cfg.regimes)
    tasks = list(tasks if tasks is not None else cfg.tasks)
    seeds = list(seeds if seeds is not None else cfg.seeds)
    jobs = jobs if jobs is not None else cfg.jobs
    if not regimes or not tasks or not seeds:
        raise ValidationException("The run matrix needs at least one regime, task and seed")

    states = {r: checkpoint_encoder_state(r, checkpoints.get(r)) for r in regimes}
    cells = [Cell(r, t, s) for t in tasks for r in regimes for s in seeds]
    logger.info(
        "Running %d transfer cells (%d regimes x %d tasks x %d seeds, %d jobs)",
        len(cells),
        len(regimes),
        len(tasks),
        len(seeds),
        jobs,
    )
    if jobs > 1:
        with multiprocessing.Pool(
            processes=jobs, initializer=_init_worker, initargs=(dataset, config, states)
        ) as pool:
            results = pool.map(_run_in_worker, cells, chunksize=1)
    else:
        results = [run_cell(cell, dataset, config, states) for cell in cells]
    return sorted(results, key=_order_key)
