"""
Tests for embedding-consistency losses and the total objective
"""

import math

import numpy as np
import pytest

from src.autograd.tensor import Tensor
from src.exceptions import ContractError, TrainingError
from src.models.settings import EclConfig
from src.networks.model import PredictorModel
from src.networks.producer import IdentityMapping
from src.services.diffusion_service import DiffusionService
from src.services.ecl_service import EclService, embedding_error, total_loss


@pytest.fixture
def model(config):
    return PredictorModel(config)


def make_service(model, config, **overrides):
    cfg = EclConfig.from_config(config).model_copy(update=overrides)
    return EclService(model, DiffusionService(model, config), cfg)


def test_embedding_error():
    assert embedding_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert embedding_error(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(math.sqrt(2))
    with pytest.raises(ContractError):
        embedding_error(np.zeros(2), np.zeros(3))


class TestTotalLoss:
    def test_unit_weights(self):
        report = total_loss(0.5, 0.2, 0.3, EclConfig())
        assert report.total == pytest.approx(1.0)
        assert report.consistent_with(1.0, 1.0, 1.0)

    def test_weighted(self):
        cfg = EclConfig(lambda_diffusion=2.0, lambda_ecl=0.0, lambda_nce=0.5)
        assert total_loss(1.0, 9.0, 4.0, cfg).total == pytest.approx(4.0)

    def test_length_and_mapping_terms(self):
        cfg = EclConfig(lambda_diffusion=2.0, mapping_aux_weight=0.5)
        report = total_loss(1.0, 0.0, 0.0, cfg, l_len=0.25, l_map=2.0)
        assert report.total == pytest.approx(3.5)
        assert report.consistent_with(2.0, 1.0, 1.0, 0.5)

    def test_gated_consistency_term_left_out(self):
        report = total_loss(0.5, 3.0, 0.3, EclConfig(), ecl_active=False)
        assert report.total == pytest.approx(0.8)
        assert report.l_ecl == 3.0
        assert report.consistent_with(1.0, 1.0, 1.0)

    def test_non_finite_mapping_term_named(self):
        with pytest.raises(TrainingError) as exc_info:
            total_loss(0.5, 0.1, 0.3, EclConfig(), l_map=float("inf"))
        assert exc_info.value.component == "l_map"

    def test_non_finite_component_named(self):
        with pytest.raises(TrainingError) as exc_info:
            total_loss(0.5, float("nan"), 0.3, EclConfig())
        assert exc_info.value.component == "l_ecl"


class TestConsistencyLosses:
    def test_identical_streams_give_zero(self, model, config, rng):
        service = make_service(model, config)
        e = Tensor(rng.normal(size=(2, config.d_model)))
        assert service.triplet_loss(e, e, length=4, seed=5).item() == 0.0

    def test_identity_mapping_gives_zero(self, model, config, rng):
        service = make_service(model, config)
        e = Tensor(rng.normal(size=(2, config.d_model)))
        assert service.unpaired_loss(e, length=3, seed=1, mapping=IdentityMapping()).item() == 0.0

    def test_fidelity_order_with_identity_mapping(self, model, config, rng):
        service = make_service(model, config, fidelity_order=True)
        e = Tensor(rng.normal(size=(2, config.d_model)))
        assert service.unpaired_loss(e, length=3, seed=1, mapping=IdentityMapping()).item() == 0.0

    def test_distinct_streams_give_positive_loss(self, model, config, rng):
        service = make_service(model, config)
        e_t = Tensor(rng.normal(size=(2, config.d_model)))
        e_a = Tensor(rng.normal(size=(2, config.d_model)))
        assert service.triplet_loss(e_t, e_a, length=3, seed=2).item() > 0

    def test_shape_mismatch(self, model, config, rng):
        service = make_service(model, config)
        with pytest.raises(ContractError):
            service.triplet_loss(
                Tensor(rng.normal(size=(2, config.d_model))), Tensor(rng.normal(size=(3, config.d_model))), 3, 0
            )

    def test_triplet_gradient_matches_finite_differences(self, model, config, rng):
        """Test d L/d e_t on a one-step, two-frame toy"""
        service = make_service(model, config, sampler_steps=1)
        e_t = rng.normal(size=(1, config.d_model))
        e_a = Tensor(rng.normal(size=(1, config.d_model)))

        def loss(values):
            return service.triplet_loss(values, e_a, length=2, seed=4)

        x = Tensor(e_t.copy(), requires_grad=True)
        loss(x).backward()

        h = 1e-5
        numeric = np.zeros_like(e_t)
        for pos in np.ndindex(e_t.shape):
            plus, minus = e_t.copy(), e_t.copy()
            plus[pos] += h
            minus[pos] -= h
            numeric[pos] = (loss(Tensor(plus)).item() - loss(Tensor(minus)).item()) / (2 * h)
        np.testing.assert_allclose(x.grad, numeric, rtol=1e-4, atol=1e-7)

    def test_frozen_sign_encoder_gets_no_gradient(self, model, config, rng):
        service = make_service(model, config, freeze_sign_encoder=True)
        e_t = Tensor(rng.normal(size=(2, config.d_model)), requires_grad=True)
        e_a = Tensor(rng.normal(size=(2, config.d_model)))
        model.zero_grad()
        service.triplet_loss(e_t, e_a, length=3, seed=0).backward()
        assert all(p.grad is None for p in model.encoders.sign.parameters().values())
        assert e_t.grad is not None

    def test_mapping_loss_only_trains_mapping(self, model, config, rng):
        service = make_service(model, config)
        e_t = Tensor(rng.normal(size=(2, config.d_model)), requires_grad=True)
        e_a = Tensor(rng.normal(size=(2, config.d_model)), requires_grad=True)
        model.zero_grad()
        service.mapping_loss(e_t, e_a).backward()
        assert e_t.grad is None and e_a.grad is None
        assert model.mapping.mlp.fc1.weight.grad is not None


class TestGating:
    def test_zero_before_warmup(self, model, config, rng):
        service = make_service(model, config, warmup_epochs=500)
        e_t = Tensor(rng.normal(size=(3, config.d_model)))
        valid = np.ones((3, 4), dtype=bool)
        out = service.ecl_total(0, e_t, None, np.array([], dtype=np.int64), 4, valid, seed=0)
        assert out.item() == 0.0
        assert service.active(499) is False
        assert service.active(500) is True

    def test_all_audio_equals_triplet_term(self, model, config, rng):
        service = make_service(model, config, warmup_epochs=0)
        e_t = Tensor(rng.normal(size=(2, config.d_model)))
        e_a = Tensor(rng.normal(size=(2, config.d_model)))
        valid = np.ones((2, 3), dtype=bool)
        combined = service.ecl_total(0, e_t, e_a, np.array([0, 1]), 3, valid, seed=7).item()
        alone = service.triplet_loss(e_t, e_a, 3, seed=7, valid=valid).item()
        assert combined == pytest.approx(alone, rel=1e-12)

    def test_mixed_batch_sums_terms(self, model, config, rng):
        service = make_service(model, config, warmup_epochs=0)
        e_t = Tensor(rng.normal(size=(3, config.d_model)))
        e_a = Tensor(rng.normal(size=(1, config.d_model)))
        valid = np.ones((3, 3), dtype=bool)
        combined = service.ecl_total(0, e_t, e_a, np.array([1]), 3, valid, seed=2).item()
        triplet = service.triplet_loss(e_t[np.array([1])], e_a, 3, seed=2, valid=valid[[1]]).item()
        unpaired = service.unpaired_loss(e_t[np.array([0, 2])], 3, seed=2, valid=valid[[0, 2]]).item()
        assert combined == pytest.approx(triplet + unpaired, rel=1e-12)
