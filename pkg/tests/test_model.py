"""Network stages: shapes, determinism, sensitivity probes, gradient reach."""

import numpy as np
import pytest
import torch

from gridcast.config import RunConfig
from gridcast.dataset import collate, sample_set_for, scene_seeds
from gridcast.losses import kl_loss
from gridcast.model import BackboneConfig, GridcastModel
from gridcast.training import compute_losses

SMALL = BackboneConfig(encoder_channels=(8, 16), hidden_channels=16,
                       recurrent_depth=1, gru_depth=1, grid_size=16)


@pytest.fixture(scope="module")
def small_model():
    torch.manual_seed(0)
    return GridcastModel(SMALL)


def random_batch(cfg: BackboneConfig, batch=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    s = cfg.grid_size
    return {
        "history": torch.rand((batch, cfg.num_history + 1, 6, s, s), generator=g),
        "det_veh": (torch.rand((batch, s, s), generator=g) > 0.8).float(),
        "det_dyn": (torch.rand((batch, s, s), generator=g) > 0.8).float(),
        "future_veh": (torch.rand((batch, cfg.num_future, s, s), generator=g) > 0.8).float(),
        "future_flow": torch.randn((batch, cfg.num_future, 2, s, s), generator=g),
        "future_ogm": torch.rand((batch, cfg.num_future, 3, s, s), generator=g) / 3,
    }


class TestEncodeHistory:
    def test_deterministic(self, small_model):
        batch = random_batch(SMALL)
        a, _ = small_model.encode_history(batch["history"])
        b, _ = small_model.encode_history(batch["history"])
        assert torch.equal(a.feature, b.feature)
        assert torch.equal(a.memory, b.memory)

    def test_output_shapes(self, small_model):
        batch = random_batch(SMALL)
        state, (full, half) = small_model.encode_history(batch["history"])
        s = SMALL.grid_size
        assert state.feature.shape == (2, SMALL.hidden_channels, s // 4, s // 4)
        assert full.shape == (2, SMALL.encoder_channels[0], s, s)
        assert half.shape == (2, SMALL.encoder_channels[1], s // 2, s // 2)

    def test_temporal_order_sensitivity(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"])
        flipped, _ = small_model.encode_history(batch["history"].flip(1))
        assert (state.feature - flipped.feature).abs().max() > 0

    def test_wrong_length_rejected(self, small_model):
        with pytest.raises(ValueError):
            small_model.encode_history(torch.rand(2, 5, 6, 16, 16))


class TestLatentDistributions:
    def test_logvar_clamped(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"] * 1e6)
        present, _ = small_model.latent_distributions(state)
        assert present.log_variance.min() >= -10.0
        assert present.log_variance.max() <= 10.0

    def test_future_conditioning_matters(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"])
        _, fut_a = small_model.latent_distributions(state, batch["future_veh"],
                                                    batch["future_flow"])
        _, fut_b = small_model.latent_distributions(state, 1.0 - batch["future_veh"],
                                                    batch["future_flow"] + 1.0)
        assert (fut_a.mean - fut_b.mean).abs().max() > 0

    def test_missing_future_grids_rejected(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"])
        with pytest.raises(ValueError):
            small_model.latent_distributions(state, batch["future_veh"], None)

    def test_kl_nonnegative_finite(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"])
        present, future = small_model.latent_distributions(
            state, batch["future_veh"], batch["future_flow"])
        value = kl_loss(future.mean, future.log_variance,
                        present.mean, present.log_variance)
        assert torch.isfinite(value) and value.item() >= 0.0


class TestRollout:
    def test_step_counts_and_shapes(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"])
        z = torch.zeros(2, SMALL.latent_dim)
        assert len(small_model.rollout_future(state, z, 1)) == 1
        states = small_model.rollout_future(state, z, 5)
        assert len(states) == 5
        for h in states:
            assert h.shape == state.feature.shape

    def test_distinct_latents_distinct_rollouts(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"])
        a = small_model.rollout_future(state, torch.zeros(2, SMALL.latent_dim), 3)
        b = small_model.rollout_future(state, torch.ones(2, SMALL.latent_dim), 3)
        assert (a[-1] - b[-1]).abs().max() > 0

    def test_deterministic(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"])
        z = torch.randn(2, SMALL.latent_dim)
        a = small_model.rollout_future(state, z, 3)
        b = small_model.rollout_future(state, z, 3)
        assert torch.equal(a[-1], b[-1])

    def test_zero_steps_rejected(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"])
        with pytest.raises(ValueError):
            small_model.rollout_future(state, torch.zeros(2, SMALL.latent_dim), 0)


class TestDecodeBundle:
    def test_output_shapes_and_ranges(self, small_model):
        batch = random_batch(SMALL)
        state, skips = small_model.encode_history(batch["history"])
        hidden = small_model.rollout_future(state, torch.zeros(2, SMALL.latent_dim), 5)
        bundle = small_model.decode_bundle(hidden, skips)
        s = SMALL.grid_size
        assert bundle.det.shape == (2, 2, s, s)
        assert bundle.pred.shape == (2, 5, 3, s, s)
        assert bundle.ogm.shape == (2, 5, 3, s, s)
        for probs in (bundle.det, bundle.veh, bundle.ogm):
            assert probs.min() >= 0.0 and probs.max() <= 1.0

    def test_missing_skips_rejected(self, small_model):
        batch = random_batch(SMALL)
        state, _ = small_model.encode_history(batch["history"])
        hidden = small_model.rollout_future(state, torch.zeros(2, SMALL.latent_dim), 2)
        with pytest.raises(ValueError):
            small_model.decode_bundle(hidden, None)

    def test_gradient_reaches_encoder_through_skips(self):
        torch.manual_seed(1)
        model = GridcastModel(SMALL)
        batch = random_batch(SMALL)
        result = model(batch, mode="train")
        loss = result.bundle.ogm_unk[:, -1].sum()
        loss.backward()
        stem_grad = model.encoder.stem[0].weight.grad
        assert stem_grad is not None and stem_grad.abs().sum() > 0


class TestForward:
    def test_train_smoke_all_terms_finite(self):
        torch.manual_seed(2)
        cfg = RunConfig()
        train_seeds, _ = scene_seeds(cfg)
        samples = sample_set_for(cfg, train_seeds[:1]).materialize()[:2]
        batch = collate(samples)
        model = GridcastModel(cfg.backbone)
        result = model(batch, mode="train")
        report = compute_losses(result, batch, cfg)
        report.total.backward()
        for name, value in report.scalars().items():
            assert np.isfinite(value), name
        grads = [p.grad for p in model.parameters() if p.grad is not None]
        assert grads and all(torch.isfinite(g).all() for g in grads)

    def test_infer_mode_deterministic(self, small_model):
        batch = random_batch(SMALL)
        with torch.no_grad():
            a = small_model({"history": batch["history"]}, mode="infer")
            b = small_model({"history": batch["history"]}, mode="infer")
        assert torch.equal(a.bundle.pred, b.bundle.pred)
        assert torch.equal(a.warped_veh, b.warped_veh)

    def test_train_mode_requires_future(self, small_model):
        batch = random_batch(SMALL)
        with pytest.raises(ValueError):
            small_model({"history": batch["history"]}, mode="train")

    def test_bad_mode_rejected(self, small_model):
        with pytest.raises(ValueError):
            small_model(random_batch(SMALL), mode="test")

    def test_warped_sequences_shape(self, small_model):
        batch = random_batch(SMALL)
        with torch.no_grad():
            result = small_model({"history": batch["history"]}, mode="infer")
        s = SMALL.grid_size
        assert result.warped_veh.shape == (2, SMALL.num_future, s, s)
        assert result.warped_dyn.shape == (2, SMALL.num_future, s, s)

    def test_paper_scale_parameter_count(self):
        model = GridcastModel(BackboneConfig.paper_scale())
        count = model.parameter_count()
        assert 9.4e6 * 0.8 <= count <= 9.4e6 * 1.2, count


class TestBackboneConfig:
    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            BackboneConfig(hidden_channels=0)
        with pytest.raises(ValueError):
            BackboneConfig(grid_size=30)
