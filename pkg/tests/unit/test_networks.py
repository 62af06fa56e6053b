"""
Tests for the encoders, producer, length predictors and back-translator network
"""

import numpy as np
import pytest

from src.autograd.layers import key_padding_mask
from src.autograd.tensor import Tensor
from src.exceptions import CheckpointError, ContractError, GenerationError
from src.networks.backtranslator import BackTranslator
from src.networks.encoders import SequenceEncoder, StepEncoder, positional_encoding
from src.networks.model import PredictorModel
from src.services.diffusion_service import length_from_log, predict_length


@pytest.fixture
def model(config):
    """Double-precision predictor"""
    return PredictorModel(config)


def small_encoder(rng, **kwargs):
    return SequenceEncoder(4, 4, 2, 8, 1, rng, dtype=np.float64, **kwargs)


def test_positional_encoding_first_row():
    """Test position zero alternates sin(0) and cos(0)"""
    table = positional_encoding(3, 6)
    np.testing.assert_allclose(table[0], [0, 1, 0, 1, 0, 1])
    assert table[2, 0] == pytest.approx(np.sin(2.0))


def test_positional_encoding_rejects_odd_width():
    with pytest.raises(ContractError):
        positional_encoding(3, 5)


def test_key_padding_mask_shape():
    valid = np.array([[True, False]])
    mask = key_padding_mask(valid)
    assert mask.shape == (1, 1, 2, 2)
    assert mask[0, 0, 1].tolist() == [True, False]


def test_sign_encoder_gradient_matches_finite_differences(rng):
    """Test d||E_s(s)||²/ds against central differences"""
    encoder = small_encoder(rng)
    frames = rng.normal(size=(1, 3, 4))

    def energy(x):
        out = encoder(x)
        return (out * out).sum()

    x = Tensor(frames.copy(), requires_grad=True)
    energy(x).backward()

    h = 1e-5
    numeric = np.zeros_like(frames)
    for pos in np.ndindex(frames.shape):
        plus, minus = frames.copy(), frames.copy()
        plus[pos] += h
        minus[pos] -= h
        numeric[pos] = (energy(Tensor(plus)).item() - energy(Tensor(minus)).item()) / (2 * h)
    np.testing.assert_allclose(x.grad, numeric, rtol=1e-4, atol=1e-7)


def test_padding_does_not_change_embedding(rng):
    """Test masked positions are invisible to attention and pooling"""
    encoder = small_encoder(rng)
    frames = rng.normal(size=(1, 3, 4))
    padded = np.concatenate([frames, rng.normal(size=(1, 2, 4)) * 50], axis=1)
    valid = np.array([[True, True, True, False, False]])
    plain = encoder(Tensor(frames)).data
    masked = encoder(Tensor(padded), valid).data
    np.testing.assert_allclose(masked, plain, atol=1e-12)


def test_encoder_rejects_wrong_width(rng):
    encoder = small_encoder(rng)
    with pytest.raises(ContractError):
        encoder(Tensor(np.zeros((1, 3, 5))))


def test_step_encoder_range(rng):
    encoder = StepEncoder(3, 4, 2, 8, 1, rng, dtype=np.float64)
    assert encoder(np.array([0, 3])).shape == (2, 4)
    with pytest.raises(ContractError):
        encoder(np.array([4]))


def test_encoders_own_separate_parameters(model):
    """Test the five encoders share no parameter objects"""
    params = model.encoders.parameters()
    prefixes = {name.split(".")[0] for name in params}
    assert prefixes == {"text", "audio", "sign", "step", "noise"}
    assert len({id(p) for p in params.values()}) == len(params)


def test_producer_is_causal(config, rng):
    """Test perturbing frame j of a 6-block producer leaves outputs before j unchanged"""
    deep = config.with_overrides(producer_blocks=6)
    model = PredictorModel(deep, np.random.default_rng(0))
    d, width, length = deep.d_model, deep.frame_width, 12
    embeddings = [Tensor(rng.normal(size=(1, d))) for _ in range(3)]
    frames = rng.normal(size=(1, length, width))
    base = model.producer(*embeddings, Tensor(frames)).data
    for j in range(length):
        perturbed = frames.copy()
        perturbed[0, j] += rng.normal(size=width)
        out = model.producer(*embeddings, Tensor(perturbed)).data
        if j:
            assert np.max(np.abs(out[0, :j] - base[0, :j])) < 1e-12
        assert not np.allclose(out[0, j:], base[0, j:])


def test_producer_sees_condition(model, config, rng):
    d, width = config.d_model, config.frame_width
    step, noise = Tensor(rng.normal(size=(1, d))), Tensor(rng.normal(size=(1, d)))
    frames = Tensor(rng.normal(size=(1, 4, width)))
    a = model.producer(Tensor(rng.normal(size=(1, d))), step, noise, frames).data
    b = model.producer(Tensor(rng.normal(size=(1, d))), step, noise, frames).data
    assert not np.allclose(a[0, 0], b[0, 0])


def test_producer_rejects_bad_embedding(model, config, rng):
    frames = Tensor(rng.normal(size=(1, 2, config.frame_width)))
    good = Tensor(rng.normal(size=(1, config.d_model)))
    with pytest.raises(ContractError, match="step"):
        model.producer(good, Tensor(np.zeros((1, config.d_model + 1))), good, frames)


def test_frozen_blocks_gradients(model, config, rng):
    """Test a frozen sub-module gets no gradient and is restored afterwards"""
    sign = model.encoders.sign
    text = model.encoders.text
    x = Tensor(rng.normal(size=(2, 3, config.frame_width)))
    t = Tensor(rng.normal(size=(2, 3, config.d_text_feature)))
    model.zero_grad()
    with sign.frozen():
        loss = ((sign(x) - text(t)) ** 2).sum()
    loss.backward()
    assert all(p.grad is None for p in sign.parameters().values())
    assert all(p.grad is not None for p in text.parameters().values())
    assert all(p.requires_grad for p in sign.parameters().values())


def test_load_state_dict_checks_names_and_shapes(model):
    state = model.state_dict()
    name = next(iter(state))
    broken = dict(state)
    broken[name] = np.zeros(tuple(s + 1 for s in state[name].shape))
    with pytest.raises(CheckpointError, match=name):
        model.load_state_dict(broken)
    del broken[name]
    with pytest.raises(CheckpointError, match="missing"):
        model.load_state_dict(broken)


class TestLengthPrediction:
    def test_clamping(self):
        assert length_from_log(np.log(0.2), 10) == 1
        assert length_from_log(np.log(7.4), 10) == 7
        assert length_from_log(50.0, 10) == 10
        assert length_from_log(1e6, 10) == 10

    def test_nan_rejected(self):
        with pytest.raises(GenerationError):
            length_from_log(float("nan"), 10)

    def test_predict_length_in_range(self, model, config, rng):
        length = predict_length(rng.normal(size=config.d_model), model.text_length, config.max_len)
        assert 1 <= length <= config.max_len


class TestBackTranslatorNetwork:
    def test_logit_shape(self, config, rng):
        translator = BackTranslator(config)
        frames = Tensor(rng.normal(size=(2, 5, config.frame_width)))
        valid = np.ones((2, 5), dtype=bool)
        inputs = np.full((2, 3), translator.bos)
        logits = translator(frames, valid, inputs)
        assert logits.shape == (2, 3, config.vocab_size + 1)

    def test_greedy_decode_bounds(self, config, rng):
        """Test outputs are non-empty, in vocabulary and within the length limit"""
        translator = BackTranslator(config)
        frames = rng.normal(size=(3, 6, config.frame_width))
        valid = np.ones((3, 6), dtype=bool)
        valid[1, 4:] = False
        outputs = translator.greedy_decode(frames, valid)
        assert len(outputs) == 3
        for tokens in outputs:
            assert 1 <= len(tokens) <= config.bt_max_len
            assert all(0 <= t < config.vocab_size for t in tokens)
        assert translator.greedy_decode(frames, valid) == outputs
