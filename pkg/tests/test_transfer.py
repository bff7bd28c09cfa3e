"""
Tests for the linear transfer heads, encoder regimes and the run matrix.
"""

import numpy as np
import pytest

from toddlerlab import transfer
from toddlerlab.agent import AgentNetwork
from toddlerlab.checkpoint import load_checkpoint, save_checkpoint
from toddlerlab.config import AgentConfig, RenderConfig, RunConfig, TransferConfig
from toddlerlab.dataset import DistanceNormalizer, fit_normalizer, generate_dataset
from toddlerlab.environment import Playpen
from toddlerlab.exceptions import CheckpointException, ValidationException
from toddlerlab.models import BoundingBox, Regime, Task
from toddlerlab.transfer import (
    build_encoder,
    cell_seed,
    checkpoint_encoder_state,
    collect_frames,
    evaluate,
    iou,
    run_matrix,
    score,
    train_autoencoder,
    train_head,
)

AGENT = AgentConfig(
    feature_dim=6, hidden_units=16, conv_channels=[4, 8], conv_kernels=[4, 3], conv_strides=[2, 1]
)


@pytest.fixture(scope="module")
def run_config():
    return RunConfig(
        seed=2,
        agent=AGENT,
        render=RenderConfig(resolution=16),
        transfer=TransferConfig(
            dataset_size=16,
            epochs=2,
            batch_size=8,
            seeds=[0, 1],
            autoencoder_frames=12,
            autoencoder_holdout=4,
            autoencoder_epochs=1,
            autoencoder_batch_size=4,
        ),
    )


@pytest.fixture(scope="module")
def dataset(run_config):
    return generate_dataset(5, render_config=run_config.render, transfer_config=run_config.transfer)


@pytest.fixture
def rl_checkpoint(tmp_path):
    network = AgentNetwork.build(AGENT, 16, np.random.default_rng(3))
    return network.save(tmp_path / "agent.ckpt")


@pytest.fixture
def ae_checkpoint(tmp_path):
    network = AgentNetwork.build(AGENT, 16, np.random.default_rng(4), with_decoder=True)
    state = {k: v for k, v in network.state_dict().items() if k.startswith(("enc.", "dec."))}
    return save_checkpoint(tmp_path / "autoencoder.ckpt", state)


class TestMetrics:
    """IoU and per-task scores."""

    def test_iou(self):
        box = (0.5, 0.5, 0.2, 0.2)
        assert iou(box, box) == pytest.approx(1.0)
        assert iou(box, (0.6, 0.5, 0.2, 0.2)) == pytest.approx(1.0 / 3.0)
        assert iou(box, (0.1, 0.1, 0.1, 0.1)) == 0.0
        assert iou(BoundingBox(*box), box) == pytest.approx(1.0)

    def test_iou_rejects_empty_box(self):
        with pytest.raises(ValidationException):
            iou((0.5, 0.5, 0.0, 0.2), (0.5, 0.5, 0.2, 0.2))

    def test_classification_accuracy(self, dataset):
        samples = dataset.test
        logits = np.zeros((len(samples), 3))
        for i, sample in enumerate(samples):
            logits[i, int(sample.object_class)] = 1.0
        logits[0] = np.roll(logits[0], 1)
        expected = 100.0 * (len(samples) - 1) / len(samples)
        assert score(Task.CLASSIFICATION, logits, samples) == pytest.approx(expected)

    def test_exact_distance_has_zero_error(self, dataset):
        normalizer = fit_normalizer(dataset.train)
        z = normalizer.normalize([s.distance for s in dataset.test])
        assert score(Task.DISTANCE, z, dataset.test, normalizer) == pytest.approx(0.0, abs=1e-9)
        assert score(Task.DISTANCE, z, dataset.test, normalizer, error_in_z=True) == pytest.approx(
            0.0, abs=1e-9
        )

    def test_relative_distance_error(self, dataset):
        normalizer = DistanceNormalizer(mu=0.0, sigma=1.0)
        z = np.log([1.1 * s.distance for s in dataset.test])
        assert score(Task.DISTANCE, z, dataset.test, normalizer) == pytest.approx(10.0)

    def test_distance_needs_normalizer(self, dataset):
        with pytest.raises(ValidationException):
            score(Task.DISTANCE, np.zeros(len(dataset.test)), dataset.test)

    def test_perfect_boxes(self, dataset):
        boxes = np.array([s.bbox.as_tuple() for s in dataset.test])
        assert score(Task.LOCALIZATION, boxes, dataset.test) == pytest.approx(100.0)

    def test_empty_split(self):
        with pytest.raises(ValidationException):
            score(Task.CLASSIFICATION, np.zeros((0, 3)), [])


class TestHeads:
    """Frozen and fine-tuned encoders."""

    def test_frozen_regime_never_changes_the_encoder(self, dataset, run_config):
        encoder = build_encoder(Regime.RANDOM, AGENT, 16, seed=0)
        before = encoder.state_dict()
        result = train_head(
            Task.LOCALIZATION, Regime.RANDOM, dataset.train, encoder, run_config.transfer, 1
        )
        assert len(result.losses) == run_config.transfer.epochs
        assert encoder.frozen
        for name, array in encoder.state_dict().items():
            np.testing.assert_array_equal(array, before[name], err_msg=name)

    def test_supervised_regime_trains_the_encoder(self, dataset, run_config):
        encoder = build_encoder(Regime.SUPERVISED, AGENT, 16, seed=0)
        before = encoder.state_dict()
        train_head(
            Task.CLASSIFICATION, Regime.SUPERVISED, dataset.train, encoder, run_config.transfer, 1
        )
        after = encoder.state_dict()
        assert any(not np.array_equal(after[name], before[name]) for name in before)

    def test_head_training_reduces_loss(self, dataset, run_config):
        config = run_config.transfer.model_copy(update={"epochs": 30, "lr": 0.01})
        encoder = build_encoder(Regime.RANDOM, AGENT, 16, seed=0)
        result = train_head(Task.DISTANCE, Regime.RANDOM, dataset.train, encoder, config, 3)
        assert result.losses[-1] < result.losses[0]

    def test_localization_outputs_are_in_the_unit_square(self, dataset, run_config):
        encoder = build_encoder(Regime.RANDOM, AGENT, 16, seed=0)
        result = train_head(
            Task.LOCALIZATION, Regime.RANDOM, dataset.train, encoder, run_config.transfer, 1
        )
        metric = evaluate(Task.LOCALIZATION, result.head, result.encoder, dataset.test)
        assert 0.0 <= metric <= 100.0

    def test_empty_train_split(self, run_config):
        encoder = build_encoder(Regime.RANDOM, AGENT, 16, seed=0)
        with pytest.raises(ValidationException):
            train_head(Task.DISTANCE, Regime.RANDOM, [], encoder, run_config.transfer, 1)

    @pytest.mark.parametrize(
        "regime, prefixes",
        [(Regime.RANDOM, {"head"}), (Regime.SUPERVISED, {"enc", "head"})],
    )
    def test_optimizer_receives_only_trainable_blocks(
        self, dataset, run_config, monkeypatch, regime, prefixes
    ):
        seen = []

        class RecordingAdam(transfer.Adam):
            def __init__(self, named_params, lr):
                seen.extend(name for name, _ in named_params)
                super().__init__(named_params, lr)

        monkeypatch.setattr(transfer, "Adam", RecordingAdam)
        encoder = build_encoder(regime, AGENT, 16, seed=0)
        train_head(Task.DISTANCE, regime, dataset.train, encoder, run_config.transfer, 1)
        assert {name.split(".")[0] for name in seen} == prefixes


class TestRegimes:
    """Where encoder parameters come from."""

    def test_random_and_supervised_share_an_initialization(self):
        a = build_encoder(Regime.RANDOM, AGENT, 16, seed=3).state_dict()
        b = build_encoder(Regime.SUPERVISED, AGENT, 16, seed=3).state_dict()
        c = build_encoder(Regime.RANDOM, AGENT, 16, seed=4).state_dict()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])
        assert not np.array_equal(a["conv1.weight"], c["conv1.weight"])

    def test_proposed_loads_the_rl_encoder(self, rl_checkpoint):
        state = checkpoint_encoder_state(Regime.PROPOSED, rl_checkpoint)
        encoder = build_encoder(Regime.PROPOSED, AGENT, 16, seed=0, state=state)
        np.testing.assert_array_equal(
            encoder.convs[0].weight.data, load_checkpoint(rl_checkpoint)["enc.conv1.weight"]
        )

    def test_autoencoder_checkpoint_is_not_an_rl_checkpoint(self, ae_checkpoint):
        with pytest.raises(CheckpointException):
            checkpoint_encoder_state(Regime.PROPOSED, ae_checkpoint)

    def test_rl_checkpoint_is_not_an_autoencoder_checkpoint(self, rl_checkpoint):
        with pytest.raises(CheckpointException):
            checkpoint_encoder_state(Regime.AUTOENCODER, rl_checkpoint)

    def test_missing_checkpoint(self):
        with pytest.raises(CheckpointException):
            checkpoint_encoder_state(Regime.AUTOENCODER, None)
        assert checkpoint_encoder_state(Regime.RANDOM, None) is None

    def test_cell_seeds_differ(self):
        seeds = {cell_seed(0, r, t) for r in Regime for t in Task}
        assert len(seeds) == len(Regime) * len(Task)
        assert cell_seed(1, Regime.RANDOM, Task.DISTANCE) == cell_seed(
            1, Regime.RANDOM, Task.DISTANCE
        )


class TestAutoencoder:
    """The reconstruction baseline."""

    def test_collect_frames(self, run_config):
        playpen = Playpen(run_config.env, run_config.render)
        frames = collect_frames(playpen, 5, np.random.default_rng(0))
        assert frames.shape == (5, 6, 16, 16)
        assert frames.dtype == np.uint8

    def test_checkpoint_holds_only_encoder_and_decoder(self, run_config, tmp_path):
        result = train_autoencoder(run_config, seed=0, path=tmp_path / "ae.ckpt")
        state = load_checkpoint(result.checkpoint)
        assert {name.split(".")[0] for name in state} == {"enc", "dec"}
        assert len(result.losses) == 1
        assert np.isfinite(result.initial_mse) and np.isfinite(result.final_mse)
        checkpoint_encoder_state(Regime.AUTOENCODER, result.checkpoint)


class TestRunMatrix:
    """Cell ordering, determinism and parallel execution."""

    def test_results_are_ordered_by_task_regime_and_seed(self, dataset, run_config, rl_checkpoint):
        results = run_matrix(
            run_config,
            dataset,
            {Regime.PROPOSED: rl_checkpoint},
            regimes=[Regime.PROPOSED, Regime.RANDOM],
            seeds=[1, 0],
        )
        keys = [(r.task, r.regime, r.seed) for r in results]
        assert keys == [
            (task, regime, seed)
            for task in Task
            for regime in (Regime.RANDOM, Regime.PROPOSED)
            for seed in (0, 1)
        ]
        assert all(len(r.losses) == run_config.transfer.epochs for r in results)

    def test_rerun_is_identical(self, dataset, run_config):
        first = run_matrix(run_config, dataset, {}, regimes=[Regime.RANDOM], tasks=[Task.DISTANCE])
        second = run_matrix(run_config, dataset, {}, regimes=[Regime.RANDOM], tasks=[Task.DISTANCE])
        assert first == second

    def test_parallel_matches_serial(self, dataset, run_config):
        kwargs = dict(regimes=[Regime.RANDOM, Regime.SUPERVISED], tasks=[Task.CLASSIFICATION])
        serial = run_matrix(run_config, dataset, {}, jobs=1, **kwargs)
        parallel = run_matrix(run_config, dataset, {}, jobs=2, **kwargs)
        assert serial == parallel

    def test_missing_checkpoint_fails_before_training(self, dataset, run_config):
        with pytest.raises(CheckpointException):
            run_matrix(run_config, dataset, {}, regimes=[Regime.RANDOM, Regime.AUTOENCODER])

    def test_empty_matrix(self, dataset, run_config):
        with pytest.raises(ValidationException):
            run_matrix(run_config, dataset, {}, seeds=[])
