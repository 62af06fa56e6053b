"""
Tests for the refinement schedule, diffusion loss and samplers
"""

import math

import numpy as np
import pytest

from src.autograd.tensor import Tensor
from src.exceptions import ContractError
from src.models.sequence import Embedding
from src.models.settings import GenerationConfig
from src.networks.model import PredictorModel
from src.services.diffusion_service import (
    DiffusionService,
    averaged_seeds,
    build_schedule,
    contraction,
    inject_noise,
    refine_step,
    strided_schedule,
    training_target,
)


@pytest.fixture
def diffusion(config):
    return DiffusionService(PredictorModel(config), config)


class TestSchedule:
    def test_matches_closed_form(self):
        schedule = build_schedule(10)
        expected = [min(1.0, 1.0 / math.log(h + 1)) for h in range(1, 12)]
        np.testing.assert_allclose(schedule.delta, expected, atol=1e-9)
        assert schedule.delta[0] == 1.0

    def test_weights_non_negative_and_telescoping(self):
        schedule = build_schedule(10)
        assert np.all(schedule.alpha >= 0)
        assert schedule.alpha.sum() == pytest.approx(schedule.delta[0] - schedule.delta[-1], abs=1e-12)

    def test_lengths(self):
        schedule = build_schedule(4)
        assert schedule.delta.shape == (5,)
        assert schedule.alpha.shape == (4,)

    def test_rejects_zero_steps(self):
        with pytest.raises(ContractError):
            build_schedule(0)

    def test_strided_schedule_keeps_total_contraction(self):
        schedule = build_schedule(10)
        picked, alphas = strided_schedule(schedule, 3)
        assert picked[-1] == 10
        assert np.prod(1 - alphas) == pytest.approx(contraction(schedule)[-1], rel=1e-12)

    def test_strided_schedule_full_length_is_identity(self):
        schedule = build_schedule(4)
        picked, alphas = strided_schedule(schedule, 4)
        np.testing.assert_array_equal(picked, [1, 2, 3, 4])
        np.testing.assert_allclose(alphas, schedule.alpha)


class TestRefinement:
    def test_refine_step_endpoints(self, rng):
        p, prev = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        np.testing.assert_allclose(refine_step(p, prev, 1.0), p)
        np.testing.assert_allclose(refine_step(p, prev, 0.0), prev)
        np.testing.assert_allclose(refine_step(p, prev, 0.25), 0.25 * p + 0.75 * prev)

    def test_refine_step_errors(self, rng):
        with pytest.raises(ContractError):
            refine_step(np.zeros((2, 2)), np.zeros((3, 2)), 0.5)
        with pytest.raises(ContractError):
            refine_step(np.zeros(2), np.zeros(2), 1.5)

    def test_refine_step_on_tensors_keeps_graph(self, rng):
        p = Tensor(rng.normal(size=3), requires_grad=True)
        out = refine_step(p, np.zeros(3), 0.4)
        out.sum().backward()
        np.testing.assert_allclose(p.grad, [0.4, 0.4, 0.4])

    def test_training_target(self, rng):
        s0, nxt = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        np.testing.assert_allclose(training_target(s0, nxt, 1.0), s0)
        np.testing.assert_allclose(training_target(s0, nxt, 0.5), (s0 + nxt) / 2)

    def test_inject_noise(self, rng):
        s = rng.normal(size=(4, 2))
        np.testing.assert_array_equal(inject_noise(s, 0.0, 1), s)
        np.testing.assert_array_equal(inject_noise(s, 0.3, 7), inject_noise(s, 0.3, 7))
        assert not np.array_equal(inject_noise(s, 0.3, 7), s)
        with pytest.raises(ContractError):
            inject_noise(s, -0.1, 0)

    def test_injected_noise_has_configured_std(self):
        noisy = inject_noise(np.zeros(100_000), 0.1, 11)
        assert noisy.std() == pytest.approx(0.1, abs=0.003)
        assert abs(noisy.mean()) < 0.003

    def test_averaged_seeds(self):
        seeds = averaged_seeds(5, 3)
        assert seeds[0] == 5
        assert len(set(seeds)) == 3
        assert averaged_seeds(5, 1) == [5]


class TestDiffusionService:
    def test_initial_noise_tiles_first_pose(self, config, rng):
        pose = rng.normal(size=(config.num_joints, config.num_coords))
        service = DiffusionService(PredictorModel(config), config, pose)
        z = service.initial_noise(5, rng, std=0.0)
        assert z.shape == (5, config.frame_width)
        np.testing.assert_allclose(z, np.tile(pose.reshape(1, -1), (5, 1)))

    def test_diffusion_loss_is_finite_and_differentiable(self, diffusion, config, rng):
        condition = Tensor(rng.normal(size=(2, config.d_model)), requires_grad=True)
        s0 = rng.normal(size=(2, 5, config.frame_width))
        valid = np.array([[True] * 5, [True, True, True, False, False]])
        loss = diffusion.diffusion_loss(condition, s0, valid, np.random.default_rng(1))
        assert np.isfinite(loss.item())
        loss.backward()
        assert condition.grad is not None
        assert diffusion.model.producer.head.fc2.weight.grad is not None

    def test_direct_regression_without_steps(self, config, rng):
        """Test H=0 regresses the sequence in one producer pass"""
        direct = config.with_overrides(diffusion_steps=0)
        service = DiffusionService(PredictorModel(direct), direct)
        assert service.schedule is None
        condition = Tensor(rng.normal(size=(2, direct.d_model)))
        loss = service.diffusion_loss(condition, rng.normal(size=(2, 4, direct.frame_width)), np.ones((2, 4), bool), rng)
        assert np.isfinite(loss.item())
        frames = service.sample_batch(rng.normal(size=(1, direct.d_model)), 4, [3])
        assert frames.shape == (1, 4, direct.frame_width)

    def test_zero_weights_keep_initial_sequence(self, diffusion, config, rng):
        conditions = rng.normal(size=(2, config.d_model))
        frames = diffusion.sample_batch(
            conditions, 5, [3, 4], inference_noise=False, alpha_override=np.zeros(config.diffusion_steps)
        )
        for row, seed in enumerate([3, 4]):
            expected = diffusion.initial_noise(5, np.random.default_rng(seed))
            np.testing.assert_array_equal(frames[row], expected)

    def test_sampling_is_deterministic(self, diffusion, config, rng):
        conditions = rng.normal(size=(2, config.d_model))
        first = diffusion.sample_batch(conditions, 6, [1, 2])
        second = diffusion.sample_batch(conditions, 6, [1, 2])
        np.testing.assert_array_equal(first, second)
        other = diffusion.sample_batch(conditions, 6, [9, 2])
        assert not np.array_equal(first[0], other[0])
        np.testing.assert_allclose(first[1], other[1], atol=1e-12)

    def test_sampling_rejects_bad_length(self, diffusion, config, rng):
        conditions = rng.normal(size=(1, config.d_model))
        with pytest.raises(ContractError):
            diffusion.sample_batch(conditions, config.max_len + 1, [0])
        with pytest.raises(ContractError):
            diffusion.sample_batch(conditions, 0, [0])
        with pytest.raises(ContractError):
            diffusion.sample_batch(conditions, 3, [0, 1])

    def test_sample_sequence_shape(self, diffusion, config, rng):
        condition = Embedding(values=rng.normal(size=config.d_model))
        sequence = diffusion.sample_sequence(condition, GenerationConfig.from_config(config), len_override=7)
        assert sequence.frames.shape == (7, config.num_joints, config.num_coords)
        assert sequence.frame_rate == config.frame_rate

    def test_single_sample_average_equals_sample(self, diffusion, config, rng):
        condition = Embedding(values=rng.normal(size=config.d_model))
        gen = GenerationConfig.from_config(config, num_averaged=1, seed=11)
        averaged = diffusion.generate_averaged(condition, gen, len_override=5)
        single = diffusion.sample_sequence(condition, gen, len_override=5)
        np.testing.assert_array_equal(averaged.frames, single.frames)

    def test_predicted_length_used_without_override(self, diffusion, config, rng):
        condition = Embedding(values=rng.normal(size=config.d_model))
        sequence = diffusion.generate_averaged(condition, GenerationConfig.from_config(config))
        assert 1 <= sequence.num_frames <= config.max_len

    def test_predict_p_checks_widths(self, diffusion, config, rng):
        good = Embedding(values=rng.normal(size=config.d_model))
        bad = Embedding(values=rng.normal(size=config.d_model + 2))
        noisy = rng.normal(size=(3, config.num_joints, config.num_coords))
        assert diffusion.predict_p(good, good, good, noisy).num_frames == 3
        with pytest.raises(ContractError):
            diffusion.predict_p(good, bad, good, noisy)

    def test_differentiable_sampler_reaches_condition(self, diffusion, config, rng):
        condition = Tensor(rng.normal(size=(2, config.d_model)), requires_grad=True)
        frames = diffusion.sample_differentiable(condition, 4, seed=3, num_steps=2)
        assert frames.shape == (2, 4, config.frame_width)
        frames.sum().backward()
        assert np.any(condition.grad != 0)
