import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from diffwa.diffusion import forward_diffuse, make_schedule
from diffwa.errors import ValidationError


def test_linear_first_step_value():
    s = make_schedule(1000)
    assert float(s.alpha_bar[1]) == pytest.approx(1.0 - 1e-4, abs=1e-12)


def test_alpha_bar_matches_bruteforce_product():
    s = make_schedule(1000)
    prod = 1.0
    for t in range(1, 1001):
        prod *= 1.0 - float(s.beta[t])
    assert float(s.alpha_bar[1000]) == pytest.approx(prod, rel=1e-10)


def test_sentinel_row():
    s = make_schedule(10)
    assert float(s.beta[0]) == 0.0
    assert float(s.alpha_bar[0]) == 1.0
    assert float(s.posterior_var[1]) == 0.0


@settings(deadline=None, max_examples=30)
@given(st.integers(min_value=1, max_value=400),
       st.sampled_from(["linear", "cosine"]))
def test_schedule_invariants(T, kind):
    s = make_schedule(T, kind)
    beta = s.beta[1:]
    assert bool((beta > 0).all()) and bool((beta < 1).all())
    abar = s.alpha_bar
    assert bool((abar[1:] < abar[:-1]).all()), "alpha_bar must strictly decrease"
    assert torch.allclose(abar[1:], abar[:-1] * s.alpha[1:])


def test_invalid_inputs():
    with pytest.raises(ValidationError):
        make_schedule(0)
    with pytest.raises(ValidationError):
        make_schedule(10, "quadratic")


def test_forward_diffuse_zero_noise():
    s = make_schedule(10)
    x0 = torch.rand(2, 3, 4, 4, dtype=torch.float64)
    out = forward_diffuse(x0, 7, torch.zeros_like(x0), s)
    assert torch.allclose(out, s.alpha_bar[7].sqrt() * x0)


def test_forward_diffuse_alpha_bar_one_returns_input():
    s = make_schedule(10)
    # hypothetical zero-noise level at t=1
    s.alpha_bar[1] = 1.0
    x0 = torch.rand(1, 3, 4, 4, dtype=torch.float64)
    eps = torch.randn_like(x0)
    assert torch.equal(forward_diffuse(x0, 1, eps, s), x0)


def test_forward_diffuse_validates_t_and_shape():
    s = make_schedule(10)
    x0 = torch.rand(1, 3, 4, 4)
    with pytest.raises(ValidationError):
        forward_diffuse(x0, 0, torch.zeros_like(x0), s)
    with pytest.raises(ValidationError):
        forward_diffuse(x0, 11, torch.zeros_like(x0), s)
    with pytest.raises(ValidationError):
        forward_diffuse(x0, 5, torch.zeros(1, 3, 2, 2), s)


def test_forward_diffuse_per_sample_timesteps():
    s = make_schedule(10)
    x0 = torch.rand(3, 3, 4, 4, dtype=torch.float64)
    eps = torch.randn_like(x0)
    t = torch.tensor([1, 5, 10])
    out = forward_diffuse(x0, t, eps, s)
    for i, ti in enumerate(t.tolist()):
        single = forward_diffuse(x0[i:i + 1], ti, eps[i:i + 1], s)
        assert torch.allclose(out[i:i + 1], single)
