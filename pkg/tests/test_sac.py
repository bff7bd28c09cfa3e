"""
Tests for the discrete soft actor-critic.
"""

import math

import numpy as np
import pytest

from toddlerlab.autodiff import Tensor, no_grad
from toddlerlab.config import SacConfig
from toddlerlab.environment import evaluate_policy
from toddlerlab.exceptions import DimensionException, NumericalException, ValidationException
from toddlerlab.nn import LinearLayer, named_parameters_of
from toddlerlab.optim import Adam
from toddlerlab.sac import (
    METRICS_HEADER,
    ReplayBuffer,
    SacLearner,
    Temperature,
    Transition,
    actor_update,
    critic_target,
    critic_update,
    greedy_policy,
    soft_update,
    soft_value,
    train,
)
from toddlerlab.sanity import ChainEnv, chain_network


@pytest.fixture
def chain():
    return ChainEnv(num_states=5, t_max=20)


@pytest.fixture
def network(chain):
    return chain_network(chain, np.random.default_rng(5), feature_dim=8, hidden_units=16)


def _transition(chain, position, action, reward=0.0, done=False, intention=0):
    nxt, _, _ = chain.transition(position, action)
    return Transition(
        observation=chain.observe(position),
        intention=intention,
        action=action,
        reward=reward,
        next_observation=chain.observe(nxt),
        done=done,
    )


def _filled_buffer(chain, count=16):
    buffer = ReplayBuffer(64, chain.observation_shape, chain.num_actions)
    buffer.add(_transition(chain, chain.goal - 1, 1, 1.0, True))
    rng = np.random.default_rng(0)
    for _ in range(count - 1):
        position = int(rng.integers(chain.goal))
        action = int(rng.integers(2))
        _, value, terminal = chain.transition(position, action)
        buffer.add(_transition(chain, position, action, value, terminal))
    return buffer


def _sac_config(**overrides):
    values = dict(
        batch_size=4,
        warmup=8,
        total_frames=30,
        buffer_capacity=100,
        log_interval=10,
        lr=0.001,
        metrics_window=5,
    )
    values.update(overrides)
    return SacConfig(**values)


class TestReplayBuffer:
    """FIFO ring with uint8 observations."""

    def test_overwrites_oldest(self, chain):
        buffer = ReplayBuffer(3, chain.observation_shape, 2)
        for i in range(5):
            buffer.add(_transition(chain, 0, 1, reward=float(i)))
        assert len(buffer) == 3
        assert buffer.cursor == 2
        assert buffer.contents().rewards.tolist() == [2.0, 3.0, 4.0]

    def test_observations_are_stored_losslessly(self):
        buffer = ReplayBuffer(2, (6, 4, 4))
        obs = np.random.default_rng(1).integers(0, 256, size=(6, 4, 4)).astype(np.float32) / 255
        buffer.add(Transition(obs, 1, 3, 0.5, obs, False))
        stored = buffer.contents()
        np.testing.assert_array_equal(stored.observations[0], obs)
        assert stored.observations.dtype == np.float32

    def test_sample_shapes(self, chain):
        batch = _filled_buffer(chain).sample(7, np.random.default_rng(2))
        assert len(batch) == 7
        assert batch.observations.shape == (7, 5)
        assert batch.dones.shape == (7,)

    def test_empty_buffer_cannot_be_sampled(self, chain):
        with pytest.raises(ValidationException):
            ReplayBuffer(4, chain.observation_shape, 2).sample(1, np.random.default_rng(0))

    def test_rejects_bad_transitions(self, chain):
        buffer = ReplayBuffer(4, chain.observation_shape, 2)
        with pytest.raises(ValidationException):
            buffer.add(Transition(chain.observe(0), 0, 2, 0.0, chain.observe(0), False))
        with pytest.raises(DimensionException):
            buffer.add(Transition(np.zeros(3), 0, 0, 0.0, np.zeros(3), False))
        with pytest.raises(ValidationException):
            Transition(chain.observe(0), 0, 0, math.nan, chain.observe(0), False)


class TestTargets:
    """Soft value and Bellman target."""

    def test_soft_value_uniform_policy(self):
        probs = np.array([[0.5, 0.5]])
        value = soft_value(probs, np.log(probs), np.array([[1.0, 3.0]]), 1.0)
        assert value[0] == pytest.approx(2.0 + math.log(2.0))

    def test_zero_probability_contributes_nothing(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            value = soft_value(
                np.array([[1.0, 0.0]]), np.array([[0.0, -np.inf]]), np.array([[2.0, 5.0]]), 0.5
            )
        assert value[0] == pytest.approx(2.0)

    def test_terminal_rows_take_the_reward(self, chain, network):
        batch = _filled_buffer(chain).contents()
        targets = critic_target(batch, network, alpha=0.2, gamma=0.9)
        terminal = batch.dones == 1.0
        assert terminal.any()
        np.testing.assert_allclose(targets[terminal], batch.rewards[terminal])
        assert np.all(np.isfinite(targets))

    def test_non_finite_target_critic(self, chain, network):
        network.q1t.weight.data[...] = np.nan
        with pytest.raises(NumericalException) as exc_info:
            critic_target(_filled_buffer(chain).contents(), network, 0.2, 0.9, step=7)
        assert exc_info.value.block == "q1t/q2t"
        assert exc_info.value.step == 7

    def test_no_discount_target_is_the_reward(self, chain, network):
        batch = _filled_buffer(chain).contents()
        targets = critic_target(batch, network, alpha=0.5, gamma=0.0)
        np.testing.assert_array_equal(targets, batch.rewards)

    def test_zero_temperature_target_by_hand(self, chain, network):
        batch = _filled_buffer(chain).contents()
        gamma = 0.9
        targets = critic_target(batch, network, alpha=0.0, gamma=gamma)
        with no_grad():
            g_next = network.masked(Tensor(batch.next_observations), batch.intentions)
            probs = network.policy(g_next).probs.data.astype(np.float64)
            q1, q2 = network.target_q_values(g_next)
        for row in range(len(batch)):
            value = sum(
                probs[row, a] * min(float(q1.data[row, a]), float(q2.data[row, a]))
                for a in range(chain.num_actions)
            )
            expected = batch.rewards[row] + gamma * (1.0 - batch.dones[row]) * value
            assert targets[row] == pytest.approx(expected, rel=1e-5, abs=1e-6)


class TestUpdates:
    """Which blocks each update touches."""

    def test_critic_update_reduces_loss_on_a_fixed_batch(self, chain, network):
        batch = _filled_buffer(chain).contents()
        optimizer = Adam(named_parameters_of(network.critic_modules()), lr=0.003)
        losses = [critic_update(batch, network, optimizer, 0.1, 0.9) for _ in range(60)]
        assert losses[-1] < losses[0]

    def test_critic_update_leaves_policy_and_targets(self, chain, network):
        pi_before = network.pi.weight.data.copy()
        q1t_before = network.q1t.weight.data.copy()
        enc_before = network.enc.fc1.weight.data.copy()
        optimizer = Adam(named_parameters_of(network.critic_modules()), lr=0.01)
        critic_update(_filled_buffer(chain).contents(), network, optimizer, 0.1, 0.9)
        np.testing.assert_array_equal(network.pi.weight.data, pi_before)
        np.testing.assert_array_equal(network.q1t.weight.data, q1t_before)
        assert not np.array_equal(network.enc.fc1.weight.data, enc_before)

    def test_actor_update_leaves_encoder_and_critics(self, chain, network):
        enc_before = network.enc.fc1.weight.data.copy()
        q1_before = network.q1.weight.data.copy()
        pi_before = network.pi.weight.data.copy()
        optimizer = Adam(named_parameters_of(network.actor_modules()), lr=0.01)
        stats = actor_update(_filled_buffer(chain).contents(), network, optimizer, 0.1)
        np.testing.assert_array_equal(network.enc.fc1.weight.data, enc_before)
        np.testing.assert_array_equal(network.q1.weight.data, q1_before)
        assert not np.array_equal(network.pi.weight.data, pi_before)
        assert 0.0 <= stats.entropy <= math.log(2.0) + 1e-6
        assert math.isfinite(stats.loss)

    def test_large_temperature_flattens_the_policy(self, chain, network):
        network.pi.bias.data[...] = np.array([6.0, -6.0], dtype=network.pi.bias.dtype)
        batch = _filled_buffer(chain).contents()
        optimizer = Adam(named_parameters_of(network.actor_modules()), lr=0.05)
        first = actor_update(batch, network, optimizer, alpha=1000.0)
        for _ in range(400):
            last = actor_update(batch, network, optimizer, alpha=1000.0)
        assert first.entropy < 0.1
        assert last.entropy == pytest.approx(math.log(2.0), abs=0.02)


class TestTemperature:
    """α moves against the entropy error."""

    def test_entropy_above_target_lowers_alpha(self):
        temperature = Temperature(1.0, target_entropy=0.3, lr=0.01)
        assert temperature.update(0.6) < 1.0

    def test_entropy_below_target_raises_alpha(self):
        temperature = Temperature(1.0, target_entropy=0.3, lr=0.01)
        assert temperature.update(0.1) > 1.0

    def test_first_step_is_one_learning_rate_in_log_space(self):
        temperature = Temperature(2.0, target_entropy=0.3, lr=0.01)
        temperature.update(0.9)
        assert math.log(temperature.alpha) == pytest.approx(math.log(2.0) - 0.01, abs=1e-6)

    def test_initial_alpha_must_be_positive(self):
        with pytest.raises(ValidationException):
            Temperature(0.0, 0.3, 0.01)

    def test_alpha_stays_positive(self):
        temperature = Temperature(1.0, target_entropy=0.2, lr=0.01)
        for _ in range(5000):
            alpha = temperature.update(1.5)
        assert 0.0 < alpha < 1e-10
        assert math.isfinite(math.log(alpha))


class TestSoftUpdate:
    """Polyak averaging of target parameters."""

    def test_tau_extremes_and_midpoint(self, rng):
        online, target = LinearLayer(3, 2, rng), LinearLayer(3, 2, rng)
        original = target.weight.data.copy()
        soft_update(online, target, 0.0)
        np.testing.assert_array_equal(target.weight.data, original)
        soft_update(online, target, 0.5)
        np.testing.assert_allclose(target.weight.data, 0.5 * (online.weight.data + original))
        soft_update(online, target, 1.0)
        np.testing.assert_array_equal(target.weight.data, online.weight.data)

    def test_invalid_tau(self, rng):
        with pytest.raises(ValidationException):
            soft_update(LinearLayer(2, 2, rng), LinearLayer(2, 2, rng), 1.5)

    def test_structure_mismatch(self, rng):
        with pytest.raises(DimensionException):
            soft_update(LinearLayer(2, 2, rng), LinearLayer(3, 2, rng), 0.5)

    def test_two_steps_match_closed_form(self, rng):
        online, target = LinearLayer(3, 2, rng), LinearLayer(3, 2, rng)
        original = target.weight.data.astype(np.float64)
        tau = 0.3
        soft_update(online, target, tau)
        soft_update(online, target, tau)
        blend = 1.0 - (1.0 - tau) ** 2
        expected = blend * online.weight.data + (1.0 - blend) * original
        np.testing.assert_allclose(target.weight.data, expected, rtol=1e-5, atol=1e-6)


class TestTrain:
    """The training loop on the chain."""

    def test_metrics_and_checkpoint(self, chain, network, tmp_path):
        seen = []
        result = train(
            chain,
            network,
            _sac_config(),
            seed=0,
            checkpoint_path=tmp_path / "agent.ckpt",
            metrics_path=tmp_path / "metrics.csv",
            progress=seen.append,
        )
        assert [row.frame for row in result.metrics] == [10, 20, 30]
        assert seen == result.metrics
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0] == ",".join(METRICS_HEADER)
        assert len(lines) == 4
        assert (tmp_path / "agent.ckpt").is_file()
        assert result.episodes > 0

    def test_partial_interval_is_recorded(self, chain, network):
        result = train(chain, network, _sac_config(total_frames=25), seed=0)
        assert [row.frame for row in result.metrics] == [10, 20, 25]

    def test_zero_frames_writes_header_only(self, chain, network, tmp_path):
        result = train(
            chain,
            network,
            _sac_config(total_frames=0),
            seed=0,
            checkpoint_path=tmp_path / "agent.ckpt",
            metrics_path=tmp_path / "metrics.csv",
        )
        assert result.metrics == []
        assert (tmp_path / "metrics.csv").read_text() == ",".join(METRICS_HEADER) + "\n"
        assert (tmp_path / "agent.ckpt").is_file()

    def test_same_seed_same_parameters(self, chain):
        states = []
        for _ in range(2):
            net = chain_network(chain, np.random.default_rng(5), feature_dim=8, hidden_units=16)
            train(chain, net, _sac_config(), seed=4)
            states.append(net.state_dict())
        for name in states[0]:
            np.testing.assert_array_equal(states[0][name], states[1][name], err_msg=name)

    def test_numerical_failure_stops_training(self, chain, network):
        network.q2t.bias.data[...] = np.nan
        with pytest.raises(NumericalException):
            train(chain, network, _sac_config(), seed=0)

    def test_learner_updates_targets_slowly(self, chain, network):
        learner = SacLearner(network, _sac_config(tau=0.5))
        before = network.q1t.weight.data.copy()
        learner.update(_filled_buffer(chain).contents(), step=1)
        expected = 0.5 * (network.q1.weight.data + before)
        np.testing.assert_allclose(network.q1t.weight.data, expected, rtol=1e-6)

    def test_greedy_policy_with_evaluate_policy(self, chain, network):
        result = evaluate_policy(chain, greedy_policy(network), 3, 100)
        assert result.episodes == 3
        assert len(result.returns) == 3
