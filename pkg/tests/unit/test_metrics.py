"""
Tests for keypoint and token metrics
"""

import math

import numpy as np
import pytest

from src.exceptions import ContractError
from src.models.sequence import SignSequence, TextTokens
from src.services.metrics_service import (
    bleu_n,
    dtw_distance,
    keypoint_mse,
    lcs_length,
    resample,
    rouge_l_f1,
    sentence_scores,
)

# (hypothesis, reference, n, expected)
BLEU_CASES = [
    ("a b", "a c", 1, 0.5),
    ("a", "a b", 1, math.exp(-1.0)),
    ("a b c d", "a b c d", 4, 1.0),
    ("the the the the", "the cat", 1, 0.25),
    ("a b c", "a b d", 2, math.sqrt(2 / 3 * 1 / 2)),
    ("a b", "a b c d", 2, math.exp(1 - 4 / 2)),
    ("x y", "a b", 1, 0.0),
    ("a b c", "a b c", 4, 1.0),
    ("a b c a", "a b c", 2, math.sqrt(3 / 4 * 2 / 3)),
]

# (hypothesis, reference, expected)
ROUGE_CASES = [
    ("a b c", "a b c", 1.0),
    ("a b c", "a c", 0.8),
    ("x y", "a b", 0.0),
    ("a b", "a b c d", 2 * (1.0 * 0.5) / 1.5),
    ("c b a", "a b c", 1 / 3),
    ("a x b y", "a b", 2 * (0.5 * 1.0) / 1.5),
]


class TestBleu:
    @pytest.mark.parametrize("hypothesis,reference,n,expected", BLEU_CASES)
    def test_hand_computed(self, hypothesis, reference, n, expected):
        assert bleu_n(hypothesis, reference, n) == pytest.approx(expected, abs=1e-12)

    def test_identity_for_every_order(self):
        for n in range(1, 5):
            assert bleu_n([3, 1, 4, 1, 5], [3, 1, 4, 1, 5], n) == pytest.approx(1.0)

    def test_empty_hypothesis_scores_zero(self):
        assert bleu_n([], [1, 2], 2) == 0.0

    def test_order_must_be_positive(self):
        with pytest.raises(ContractError):
            bleu_n("a", "a", 0)

    def test_text_tokens_accepted(self):
        tokens = TextTokens(ids=(1, 2), vocab_size=5)
        assert bleu_n(tokens, [1, 2], 2) == pytest.approx(1.0)


class TestRouge:
    @pytest.mark.parametrize("hypothesis,reference,expected", ROUGE_CASES)
    def test_hand_computed(self, hypothesis, reference, expected):
        assert rouge_l_f1(hypothesis, reference) == pytest.approx(expected, abs=1e-12)

    def test_lcs_length(self):
        assert lcs_length(list("abcbdab"), list("bdcaba")) == 4

    def test_empty_reference_rejected(self):
        with pytest.raises(ContractError):
            rouge_l_f1("a", "")

    def test_empty_hypothesis_scores_zero(self):
        assert rouge_l_f1([], [1]) == 0.0

    def test_sentence_scores_keys(self):
        scores = sentence_scores([1, 2, 3], [1, 2, 3])
        assert set(scores) == {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l_f1"}
        assert all(value == pytest.approx(1.0) for value in scores.values())


class TestKeypointMse:
    def test_identical(self, rng):
        frames = rng.normal(size=(4, 3, 2))
        assert keypoint_mse(frames, frames) == 0.0

    def test_constant_offset(self, rng):
        frames = rng.normal(size=(4, 3, 2))
        assert keypoint_mse(frames + 0.3, frames) == pytest.approx(0.09)

    def test_duplicated_frames_resample_to_reference(self, rng):
        gt = rng.normal(size=(5, 3, 2))
        pred = rng.normal(size=(5, 3, 2))
        doubled = np.repeat(pred, 2, axis=0)
        assert keypoint_mse(doubled, gt) == pytest.approx(keypoint_mse(pred, gt), abs=1e-12)

    def test_resample_picks_centres(self):
        frames = np.arange(4.0).reshape(4, 1, 1)
        assert resample(frames, 2)[:, 0, 0].tolist() == [1.0, 3.0]
        assert resample(frames, 8)[:, 0, 0].tolist() == [0, 0, 1, 1, 2, 2, 3, 3]

    def test_layout_mismatch(self, rng):
        with pytest.raises(ContractError):
            keypoint_mse(rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 3, 2)))

    def test_accepts_sign_sequences(self, rng):
        frames = rng.normal(size=(3, 2, 2))
        assert keypoint_mse(SignSequence(frames=frames), SignSequence(frames=frames)) == 0.0


class TestDtw:
    def test_identical(self, rng):
        frames = rng.normal(size=(6, 2, 2))
        assert dtw_distance(frames, frames) == 0.0

    def test_duplicated_frame_is_free(self, rng):
        frames = rng.normal(size=(5, 2, 2))
        stretched = np.concatenate([frames[:3], frames[2:3], frames[3:]])
        assert dtw_distance(stretched, frames) == pytest.approx(0.0, abs=1e-12)

    def test_single_frames_give_euclidean_distance(self):
        a = np.zeros((1, 1, 2))
        b = np.array([[[3.0, 4.0]]])
        assert dtw_distance(a, b) == pytest.approx(5.0)

    def test_symmetric(self, rng):
        a, b = rng.normal(size=(4, 3, 2)), rng.normal(size=(7, 3, 2))
        assert dtw_distance(a, b) == pytest.approx(dtw_distance(b, a), rel=1e-12)

    def test_normalized_by_path_length(self):
        a = np.zeros((2, 1, 1))
        b = np.ones((2, 1, 1))
        # Diagonal path: two steps of cost 1
        assert dtw_distance(a, b) == pytest.approx(1.0)

    def test_errors(self, rng):
        with pytest.raises(ContractError):
            dtw_distance(np.zeros((0, 2, 2)), rng.normal(size=(2, 2, 2)))
        with pytest.raises(ContractError):
            dtw_distance(rng.normal(size=(2, 2, 2)), rng.normal(size=(2, 3, 2)))
