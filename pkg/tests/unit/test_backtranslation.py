"""
Tests for the back-translator service
"""

import numpy as np
import pytest

from src.exceptions import ContractError
from src.models.sequence import TextTokens
from src.services.backtranslation_service import back_translate, teacher_forcing
from src.services.training_service import prepare_samples


@pytest.fixture
def samples(pipeline, corpus):
    return prepare_samples(corpus, corpus.split.train, pipeline.features)


def test_teacher_forcing_layout():
    inputs, targets, mask = teacher_forcing([[3, 1], [2]], bos=7, eos=6)
    assert inputs.tolist() == [[7, 3, 1], [7, 2, 6]]
    assert targets.tolist() == [[3, 1, 6], [2, 6, 6]]
    assert mask.tolist() == [[True, True, True], [True, True, False]]


class TestDecoding:
    def test_outputs_are_bounded(self, pipeline, samples, config):
        outputs = pipeline.backtranslation.translate([s.sign for s in samples[:5]])
        assert len(outputs) == 5
        for tokens in outputs:
            assert 1 <= len(tokens) <= config.bt_max_len
            assert all(0 <= t < config.vocab_size for t in tokens)

    def test_decoding_is_deterministic(self, pipeline, samples):
        frames = [s.sign for s in samples[:3]]
        assert pipeline.backtranslation.translate(frames) == pipeline.backtranslation.translate(frames)

    def test_single_sequence_matches_batch(self, pipeline, samples):
        tokens = back_translate(samples[0].sign, pipeline.backtranslation.translator)
        assert isinstance(tokens, TextTokens)
        assert list(tokens.ids) == pipeline.backtranslation.translate([samples[0].sign])[0]


class TestTraining:
    def test_history_per_epoch(self, pipeline, samples):
        service = pipeline.backtranslation
        assert not service.trained
        history = service.train(samples, epochs=2)
        assert len(history) == 2
        assert all(np.isfinite(history))
        assert service.trained
        assert service.epoch == 2

    def test_loss_is_positive_scalar(self, pipeline, samples):
        assert pipeline.backtranslation.loss(samples[:3]).item() > 0

    def test_accuracy_range(self, pipeline, samples):
        accuracy = pipeline.backtranslation.accuracy(samples[:4])
        assert 0.0 <= accuracy <= 1.0
        assert pipeline.backtranslation.accuracy([]) == 0.0

    def test_empty_training_set(self, pipeline):
        with pytest.raises(ContractError):
            pipeline.backtranslation.train([], epochs=1)
