import warnings

import pytest
import torch

from diffwa.attack import (AttackConfig, Estimator, EstimatorNet, EstimatorTrainConfig,
                           attack, attack_with_estimator, combinatorial_attack,
                           train_estimator)
from diffwa.codec import bit_accuracy
from diffwa.diffusion import Denoiser, DenoiserConfig, make_schedule
from diffwa.errors import ConfigurationError, ValidationError
from diffwa.guidance import GuidanceConfig, SaturationWarning


@pytest.fixture(scope="module")
def tiny():
    """Untrained 10-step stack: tiny nets, 8x8 images."""
    torch.manual_seed(0)
    schedule = make_schedule(10)
    cond = Denoiser(DenoiserConfig(conditional=True, base_channels=8, channel_mults=(1,)),
                    schedule)
    uncond = Denoiser(DenoiserConfig(conditional=False, base_channels=8, channel_mults=(1,)),
                      schedule)
    x_en = torch.rand(2, 3, 8, 8)
    return schedule, cond, uncond, x_en


def test_zero_loops_is_identity(tiny):
    _, cond, _, x_en = tiny
    cfg = AttackConfig(loops=0, partial_depth=5, seed=1)
    out = attack(x_en, cond, cfg)
    assert torch.equal(out, x_en)
    assert out is not x_en


def test_bitwise_reproducible_given_seed(tiny):
    _, cond, _, x_en = tiny
    cfg = AttackConfig(loops=2, partial_depth=5, seed=123)
    assert torch.equal(attack(x_en, cond, cfg), attack(x_en, cond, cfg))
    other = AttackConfig(loops=2, partial_depth=5, seed=124)
    assert not torch.equal(attack(x_en, cond, cfg), attack(x_en, cond, other))


@pytest.mark.parametrize("sampler", ["ddpm", "ddim"])
def test_eta_zero_bit_identical_to_unguided(tiny, sampler):
    _, cond, _, x_en = tiny
    base = AttackConfig(sampler=sampler, loops=2, partial_depth=6, seed=7)
    zero_eta = AttackConfig(sampler=sampler, loops=2, partial_depth=6, seed=7,
                            guidance=GuidanceConfig(metric="mse", eta=0.0))
    none_metric = AttackConfig(sampler=sampler, loops=2, partial_depth=6, seed=7,
                               guidance=GuidanceConfig(metric="none", eta=3.0))
    ref = attack(x_en, cond, base)
    assert torch.equal(ref, attack(x_en, cond, zero_eta))
    assert torch.equal(ref, attack(x_en, cond, none_metric))


def test_guidance_changes_trajectory_but_not_sampler_stream(tiny):
    _, cond, _, x_en = tiny
    base = AttackConfig(sampler="ddpm", loops=1, partial_depth=6, seed=7)
    guided = AttackConfig(sampler="ddpm", loops=1, partial_depth=6, seed=7,
                          guidance=GuidanceConfig(metric="mse", eta=1e6))
    assert not torch.equal(attack(x_en, cond, base), attack(x_en, cond, guided))


def test_depth_beyond_schedule_rejected(tiny):
    _, cond, _, x_en = tiny
    with pytest.raises(ConfigurationError):
        attack(x_en, cond, AttackConfig(loops=1, partial_depth=11))


def test_conditional_flag_mismatch_rejected(tiny):
    _, cond, uncond, x_en = tiny
    with pytest.raises(ConfigurationError):
        attack(x_en, uncond, AttackConfig(conditional=True, loops=1, partial_depth=5))
    with pytest.raises(ConfigurationError):
        attack(x_en, cond, AttackConfig(conditional=False, loops=1, partial_depth=5))


def test_invalid_sampler_and_loops():
    with pytest.raises(ConfigurationError):
        AttackConfig(sampler="euler")
    with pytest.raises(ConfigurationError):
        AttackConfig(loops=-1)


def test_collect_loops_snapshots(tiny):
    _, cond, _, x_en = tiny
    snaps = []
    cfg = AttackConfig(loops=3, partial_depth=4, seed=5)
    out = attack(x_en, cond, cfg, collect_loops=snaps)
    assert len(snaps) == 3
    assert torch.equal(snaps[-1], out)


def test_saturation_warning_propagates(tiny):
    _, cond, _, x_en = tiny
    far = x_en + 400.0
    cfg = AttackConfig(sampler="ddim", loops=1, partial_depth=3, seed=5,
                       guidance=GuidanceConfig(metric="mse", eta=1.0, reference=far))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        attack(x_en, cond, cfg)
    assert any(issubclass(w.category, SaturationWarning) for w in caught)


class TestEstimator:
    def test_untrained_depth_zero_is_identity(self, tiny):
        schedule, cond, _, x_en = tiny
        net = EstimatorNet(channels=8, blocks=1, anchor=1.0)
        est = Estimator(net, 0, schedule.config())
        cfg = AttackConfig(loops=1, partial_depth=5, estimator_depth=0, seed=3)
        out = attack_with_estimator(x_en, est, cond, cfg)
        assert torch.equal(out, x_en)  # zero-init head, no denoising steps

    def test_depth_mismatch_rejected(self, tiny):
        schedule, cond, _, x_en = tiny
        est = Estimator(EstimatorNet(channels=8, blocks=1), 4, schedule.config())
        cfg = AttackConfig(loops=1, partial_depth=5, estimator_depth=5, seed=3)
        with pytest.raises(ConfigurationError):
            attack_with_estimator(x_en, est, cond, cfg)

    def test_schedule_mismatch_rejected(self, tiny):
        _, cond, _, x_en = tiny
        est = Estimator(EstimatorNet(channels=8, blocks=1), 4, make_schedule(99).config())
        cfg = AttackConfig(loops=1, partial_depth=5, estimator_depth=4, seed=3)
        with pytest.raises(ConfigurationError):
            attack_with_estimator(x_en, est, cond, cfg)

    def test_training_depth_zero_targets_clean_images(self):
        images = torch.rand(12, 3, 8, 8)
        schedule = make_schedule(10)
        est = train_estimator(images, images, 0, schedule,
                              EstimatorTrainConfig(epochs=2, batch_size=6, channels=8, blocks=1))
        assert est.depth == 0
        assert est.net.anchor == 1.0

    def test_training_rejects_bad_depth(self):
        images = torch.rand(4, 3, 8, 8)
        schedule = make_schedule(10)
        with pytest.raises(ValidationError):
            train_estimator(images, images, 11, schedule, EstimatorTrainConfig(epochs=1))


def test_combinatorial_identity_stage_reduces_to_plain_attack(tiny):
    _, cond, _, x_en = tiny
    cfg = AttackConfig(loops=2, partial_depth=5, seed=21)
    plain = attack(x_en, cond, cfg)
    combo = combinatorial_attack(x_en, lambda x: x, cond, cfg)
    assert torch.equal(plain, combo)


def test_combinatorial_chains_stages(tiny):
    _, cond, _, x_en = tiny
    cfg = AttackConfig(loops=1, partial_depth=4, seed=21)
    stage1 = lambda x: attack(x, cond, cfg)
    combo = combinatorial_attack(x_en, stage1, cond, cfg)
    manual = attack(stage1(x_en), cond, cfg)
    assert torch.equal(combo, manual)


class TestDeskAttackProperties:
    """Trained-stack invariants (shared desk fixture)."""

    def test_monotone_loop_effect(self, desk):
        snaps = []
        cfg = AttackConfig(sampler="ddpm", conditional=True, loops=2, partial_depth=40, seed=77)
        attack(desk.eval_encoded, desk.conditional, cfg, collect_loops=snaps)
        accs = [bit_accuracy(desk.codec.extract(s).bits, desk.eval_bits) for s in snaps]
        for earlier, later in zip(accs, accs[1:]):
            assert later <= earlier + 0.05

    def test_attack_is_reproducible_on_trained_stack(self, desk):
        cfg = AttackConfig(sampler="ddpm", conditional=True, loops=1, partial_depth=10, seed=9)
        a = attack(desk.eval_encoded[:16], desk.conditional, cfg)
        b = attack(desk.eval_encoded[:16], desk.conditional, cfg)
        assert torch.equal(a, b)
