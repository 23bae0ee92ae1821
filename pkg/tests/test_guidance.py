import warnings

import pytest
import torch

from diffwa.diffusion import make_schedule
from diffwa.errors import NumericError, ValidationError
from diffwa.guidance import (GuidanceConfig, SaturationWarning, gradient_scale,
                             guided_ddpm_mean, guided_epsilon, log_closeness, mse_distance,
                             noised_reference, score_from_eps, ssim_distance)


def central_diff(fn, x, index, h=1e-6):
    xp, xm = x.clone(), x.clone()
    xp[index] += h
    xm[index] -= h
    return (fn(xp) - fn(xm)) / (2 * h)


class TestMseDistance:
    def test_identical_inputs(self):
        x = torch.rand(2, 3, 8, 8)
        d = mse_distance(x, x)
        assert torch.equal(d.value, torch.zeros(2))
        assert torch.equal(d.gradient, torch.zeros_like(x))

    def test_one_pixel_arithmetic(self):
        x = torch.ones(1, 1, 1, 1)
        y = torch.zeros(1, 1, 1, 1)
        d = mse_distance(x, y)
        assert float(d.value) == pytest.approx(1.0)
        assert float(d.gradient) == pytest.approx(2.0)

    def test_gradient_matches_finite_differences(self):
        gen = torch.Generator()
        gen.manual_seed(0)
        for _ in range(10):
            x = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
            y = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
            g = mse_distance(x, y).gradient
            for _ in range(4):
                idx = (0, int(torch.randint(3, (1,), generator=gen)),
                       int(torch.randint(8, (1,), generator=gen)),
                       int(torch.randint(8, (1,), generator=gen)))
                fd = central_diff(lambda z: float(mse_distance(z, y).value), x, idx)
                assert abs(fd - float(g[idx])) <= 1e-5 * max(abs(fd), 1e-8)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            mse_distance(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 4, 4))


class TestSsimDistance:
    def test_identical_gives_minus_one(self):
        x = torch.rand(2, 3, 16, 16)
        d = ssim_distance(x, x)
        assert torch.allclose(d.value, torch.full((2,), -1.0), atol=1e-6)

    def test_symmetry(self):
        gen = torch.Generator()
        gen.manual_seed(1)
        x = torch.rand(1, 3, 16, 16, generator=gen)
        y = torch.rand(1, 3, 16, 16, generator=gen)
        assert torch.allclose(ssim_distance(x, y).value, ssim_distance(y, x).value, atol=1e-6)

    def test_value_range_on_unit_inputs(self):
        gen = torch.Generator()
        gen.manual_seed(2)
        for _ in range(20):
            x = torch.rand(1, 3, 12, 12, generator=gen)
            y = torch.rand(1, 3, 12, 12, generator=gen)
            v = float(ssim_distance(x, y).value)
            assert -1.0 <= v <= 1.0

    def test_window_must_fit(self):
        with pytest.raises(ValidationError):
            ssim_distance(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8))  # default 11x11

    def test_gradient_matches_finite_differences(self):
        gen = torch.Generator()
        gen.manual_seed(3)
        x = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        y = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        g = ssim_distance(x, y, window_size=7).gradient
        for _ in range(6):
            idx = (0, int(torch.randint(3, (1,), generator=gen)),
                   int(torch.randint(8, (1,), generator=gen)),
                   int(torch.randint(8, (1,), generator=gen)))
            fd = central_diff(lambda z: float(ssim_distance(z, y, window_size=7).value), x, idx,
                              h=1e-5)
            assert abs(fd - float(g[idx])) <= 1e-3 * max(abs(fd), 1e-6)


class TestGradientScale:
    def test_zero_eta(self):
        s = make_schedule(100)
        assert gradient_scale(50, 0.0, s) == 0.0

    def test_alpha_bar_one_limit(self):
        s = make_schedule(10)
        s.alpha_bar[1] = 1.0
        assert gradient_scale(1, 0.7, s) == 0.0

    def test_spot_value(self):
        s = make_schedule(10)
        s.alpha_bar[5] = 0.5
        assert gradient_scale(5, 0.05, s) == pytest.approx(0.15)

    def test_grows_with_time(self):
        s = make_schedule(100)
        assert gradient_scale(90, 1.0, s) > gradient_scale(10, 1.0, s)


class TestNoisedReference:
    def test_alpha_bar_one_returns_reference(self):
        s = make_schedule(10)
        s.alpha_bar[1] = 1.0
        x = torch.rand(1, 3, 4, 4)
        assert torch.equal(noised_reference(x, 1, s, 7), x)

    def test_seeded_determinism_and_freshness(self):
        s = make_schedule(10)
        x = torch.rand(1, 3, 4, 4)
        a = noised_reference(x, 5, s, 7)
        b = noised_reference(x, 5, s, 7)
        assert torch.equal(a, b)
        gen = torch.Generator()
        gen.manual_seed(7)
        c = noised_reference(x, 5, s, gen)
        d = noised_reference(x, 5, s, gen)  # same generator advances: fresh draw
        assert not torch.equal(c, d)

    def test_moments(self):
        s = make_schedule(10)
        x = torch.full((1, 1, 1, 1), 0.25, dtype=torch.float64)
        gen = torch.Generator()
        gen.manual_seed(0)
        n = 10000
        draws = torch.stack([noised_reference(x, 6, s, gen) for _ in range(n)]).squeeze()
        abar = float(s.alpha_bar[6])
        mean_target = abar ** 0.5 * 0.25
        var_target = 1 - abar
        assert abs(float(draws.mean()) - mean_target) < 3 * (var_target / n) ** 0.5
        assert abs(float(draws.var()) - var_target) < 3 * var_target * (2 / (n - 1)) ** 0.5


class TestGuidedDdpmMean:
    def test_zero_scale_identity(self):
        mu = torch.rand(1, 3, 8, 8)
        x = torch.rand_like(mu)
        ref = torch.rand_like(mu)
        assert guided_ddpm_mean(mu, 0.01, x, ref, 0.0, "mse") is mu

    def test_zero_gradient_at_reference(self):
        mu = torch.rand(1, 3, 8, 8)
        x = torch.rand_like(mu)
        out = guided_ddpm_mean(mu, 0.01, x, x, 1.0, "mse")
        assert torch.equal(out, mu)

    def test_one_pixel_arithmetic(self):
        mu = torch.full((1, 1, 1, 1), 0.5)
        x = torch.full((1, 1, 1, 1), 0.8)
        ref = torch.full((1, 1, 1, 1), 0.6)
        out = guided_ddpm_mean(mu, 0.1, x, ref, 1.0, "mse")
        assert float(out) == pytest.approx(0.46)

    def test_shift_linear_in_scale(self):
        mu = torch.rand(1, 3, 8, 8, dtype=torch.float64)
        x = torch.rand_like(mu)
        ref = torch.rand_like(mu)
        shift1 = guided_ddpm_mean(mu, 0.2, x, ref, 1.0, "mse") - mu
        shift2 = guided_ddpm_mean(mu, 0.2, x, ref, 2.0, "mse") - mu
        assert torch.allclose(shift2, 2 * shift1)


class TestGuidedEpsilon:
    def test_zero_scale_identity(self):
        eps = torch.rand(1, 3, 8, 8)
        x = torch.rand_like(eps)
        ref = torch.rand_like(eps)
        assert guided_epsilon(eps, x, ref, 0.0, 0.5, "mse") is eps

    def test_reference_point_no_shift(self):
        eps = torch.rand(1, 3, 8, 8)
        x = torch.rand_like(eps)
        out = guided_epsilon(eps, x, x, 1.0, 0.5, "mse")
        assert torch.equal(out, eps)

    def test_log_closeness_gradient_matches_finite_differences(self):
        gen = torch.Generator()
        gen.manual_seed(4)
        x = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        y = torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64)
        g = log_closeness(x, y, "mse").gradient
        for _ in range(6):
            idx = (0, int(torch.randint(3, (1,), generator=gen)),
                   int(torch.randint(8, (1,), generator=gen)),
                   int(torch.randint(8, (1,), generator=gen)))
            fd = central_diff(lambda z: float(log_closeness(z, y, "mse").value), x, idx)
            assert abs(fd - float(g[idx])) <= 1e-3 * max(abs(fd), 1e-8)

    def test_saturation_guard_warns_and_stays_finite(self):
        x = torch.full((1, 3, 8, 8), 500.0, dtype=torch.float64)
        y = torch.zeros_like(x)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = log_closeness(x, y, "mse")
        assert any(issubclass(w.category, SaturationWarning) for w in caught)
        assert bool(torch.isfinite(res.value).all())
        assert bool(torch.isfinite(res.gradient).all())


class TestScore:
    def test_zero_eps(self):
        eps = torch.zeros(1, 3, 4, 4)
        assert torch.equal(score_from_eps(eps, 0.5), eps)

    def test_linear(self):
        eps = torch.rand(1, 3, 4, 4)
        assert torch.allclose(score_from_eps(2 * eps, 0.5), 2 * score_from_eps(eps, 0.5))

    def test_spot_value(self):
        eps = torch.full((1, 1, 1, 1), 0.5)
        assert float(score_from_eps(eps, 0.75)) == pytest.approx(-1.0)

    def test_alpha_bar_one_guarded(self):
        with pytest.raises(NumericError):
            score_from_eps(torch.zeros(1, 3, 4, 4), 1.0)


def test_guidance_config_validation():
    with pytest.raises(ValidationError):
        GuidanceConfig(metric="l1")
    assert not GuidanceConfig(metric="none", eta=5.0).enabled
    assert not GuidanceConfig(metric="mse", eta=0.0).enabled
    assert GuidanceConfig(metric="mse", eta=1.0).enabled
