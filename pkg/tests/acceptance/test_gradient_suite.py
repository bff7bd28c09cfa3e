"""
Central-difference gradient checks over many seeds: every differentiable
operation on its own, then the shrunken agent end to end.
"""

import numpy as np
import pytest

from tests.acceptance import _require_acceptance
from tests.gradients import numeric_gradient, relative_error
from toddlerlab.agent import AgentNetwork, Encoder
from toddlerlab.autodiff import (
    Tape,
    Tensor,
    backward,
    conv2d,
    conv_transpose2d,
    linear,
    log_softmax,
    mse,
    mul,
    select_columns,
    softmax,
    tanh,
    tensor_mean,
    tensor_sum,
)
from toddlerlab.config import AgentConfig

OP_TOLERANCE = 1e-4
END_TO_END_TOLERANCE = 1e-3
SEEDS = range(20)

SMALL = AgentConfig(
    feature_dim=4, hidden_units=8, conv_channels=[4, 8], conv_kernels=[4, 3], conv_strides=[2, 1]
)


def _f64(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)


def _max_error(build, tensors):
    with Tape() as tape:
        loss = build()
    backward(loss, tape)
    errors = []
    for tensor in tensors:
        numeric = numeric_gradient(lambda: float(build().data), tensor.data)
        errors.append(relative_error(tensor.grad, numeric))
    return max(errors)


@pytest.mark.parametrize("seed", SEEDS)
def test_linear(seed):
    _require_acceptance()
    rng = np.random.default_rng(seed)
    x, w, b = _f64(rng, 3, 5), _f64(rng, 4, 5), _f64(rng, 4)
    assert _max_error(lambda: tensor_sum(tanh(linear(x, w, b))), (x, w, b)) < OP_TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_conv2d(seed):
    _require_acceptance()
    rng = np.random.default_rng(seed)
    x, w, b = _f64(rng, 2, 2, 7, 7), _f64(rng, 3, 2, 3, 3), _f64(rng, 3)
    error = _max_error(lambda: tensor_sum(tanh(conv2d(x, w, b, stride=2))), (x, w, b))
    assert error < OP_TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_conv_transpose2d(seed):
    _require_acceptance()
    rng = np.random.default_rng(seed)
    x, w, b = _f64(rng, 1, 3, 3, 3), _f64(rng, 3, 2, 4, 4), _f64(rng, 2)
    error = _max_error(lambda: tensor_sum(tanh(conv_transpose2d(x, w, b, stride=2))), (x, w, b))
    assert error < OP_TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_softmax_and_log_softmax(seed):
    _require_acceptance()
    rng = np.random.default_rng(seed)
    x = _f64(rng, 4, 6)
    weights = rng.standard_normal((4, 6))
    assert _max_error(lambda: tensor_sum(mul(softmax(x), weights)), (x,)) < OP_TOLERANCE
    assert _max_error(lambda: tensor_sum(mul(log_softmax(x), weights)), (x,)) < OP_TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_mse(seed):
    _require_acceptance()
    rng = np.random.default_rng(seed)
    pred = _f64(rng, 3, 4)
    target = rng.standard_normal((3, 4))
    assert _max_error(lambda: mse(tanh(pred), target), (pred,)) < OP_TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_feature_sum_gradient_wrt_first_conv(seed):
    _require_acceptance()
    rng = np.random.default_rng(seed)
    encoder = Encoder.from_config(SMALL, rng, 12)
    encoder.astype(np.float64)
    obs = Tensor(rng.random((1, 6, 12, 12)))
    weight = encoder.convs[0].weight
    error = _max_error(lambda: tensor_sum(encoder(obs)), (weight,))
    assert error < END_TO_END_TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_policy_chain(seed):
    _require_acceptance()
    rng = np.random.default_rng(seed)
    network = AgentNetwork.build(SMALL, 12, rng)
    network.astype(np.float64)
    obs = Tensor(rng.random((2, 6, 12, 12)))
    intentions = np.array([0, 2])
    actions = np.array([1, 4])

    def loss_fn():
        out = network.policy(network.masked(obs, intentions))
        return tensor_mean(select_columns(out.log_probs, actions))

    tensors = (network.enc.convs[0].weight, network.enc.fc2.weight, network.pi.weight)
    assert _max_error(loss_fn, tensors) < END_TO_END_TOLERANCE


@pytest.mark.parametrize("seed", SEEDS)
def test_autoencoder_chain(seed):
    _require_acceptance()
    rng = np.random.default_rng(seed)
    network = AgentNetwork.build(SMALL, 12, rng, with_decoder=True)
    network.astype(np.float64)
    obs = Tensor(rng.random((1, 6, 12, 12)))

    def loss_fn():
        return mse(network.decode(network.encode(obs)), obs.data)

    tensors = (network.enc.convs[0].weight, network.dec.deconvs[-1].weight)
    assert _max_error(loss_fn, tensors) < END_TO_END_TOLERANCE
