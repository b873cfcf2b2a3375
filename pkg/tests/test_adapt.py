import json
import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from adaptsiam.adapt import (
    AdapterConfig,
    AdaptSamples,
    Adapter,
    adaptation_loss,
    average_template,
    channel_attention,
    constraint_rate,
    constraint_satisfied,
    fuse,
    init_adapter,
    moving_average,
    train_adapter,
)
from adaptsiam.errors import InsufficientDataError, ShapeMismatchError


def fmap(rng, c=4, h=5, w=5):
    return torch.from_numpy(rng.normal(size=(c, h, w)))


def logit(p):
    return math.log(p / (1 - p))


def pass_through_adapter():
    """Attention head whose per-stream output is sigmoid(pooled input)."""
    net = Adapter(2, hidden=2).double()
    with torch.no_grad():
        net.attn[0].weight.copy_(torch.eye(2))
        net.attn[0].bias.fill_(10.0)
        net.attn[2].weight.copy_(torch.eye(2))
        net.attn[2].bias.fill_(-10.0)
    return net


def const_map(values, h=3):
    return torch.tensor(values, dtype=torch.float64)[:, None, None].expand(-1, h, h).clone()


def test_attention_is_mean_of_streams():
    net = pass_through_adapter()
    z = const_map([logit(0.2), logit(0.8)], 6)
    a = const_map([logit(0.4), logit(0.6)])
    b = const_map([logit(0.6), logit(0.4)])
    assert torch.allclose(channel_attention(net, z, a, b), torch.tensor([0.4, 0.6], dtype=torch.float64))


def test_attention_identical_streams_and_zero_weights(rng):
    net = init_adapter(4, 0).double()
    x = fmap(rng)
    single = torch.sigmoid(net.attn(x.mean(dim=(1, 2))))
    assert torch.allclose(channel_attention(net, x, x, x), single)
    with torch.no_grad():
        for p in net.attn.parameters():
            p.zero_()
    assert torch.all(channel_attention(net, fmap(rng, h=9, w=9), x, x) == 0.5)


def test_attention_channel_mismatch(rng):
    with pytest.raises(ShapeMismatchError):
        channel_attention(init_adapter(4, 0).double(), fmap(rng), fmap(rng, c=3), fmap(rng))


@given(st.integers(0, 2**32 - 1))
def test_attention_strictly_inside_unit_interval(seed):
    r = np.random.default_rng(seed)
    net = init_adapter(4, seed % 1000).double()
    a = channel_attention(net, fmap(r, h=7, w=7), fmap(r), fmap(r))
    assert torch.all((a > 0) & (a < 1))


def test_fuse_zero_eta_residual_is_init(rng):
    net = init_adapter(4, 0).double()
    with torch.no_grad():
        for p in net.eta.parameters():
            p.zero_()
    init = fmap(rng)
    out = fuse(net, fmap(rng), fmap(rng), torch.full((4,), 0.5, dtype=torch.float64), init, residual=True)
    assert torch.equal(out, init)


def test_fuse_zero_attention_ignores_phi_hat(rng):
    net = init_adapter(4, 1).double()
    prev, init = fmap(rng), fmap(rng)
    zero = torch.zeros(4, dtype=torch.float64)
    a = fuse(net, prev, fmap(rng), zero, init, residual=True)
    b = fuse(net, prev, fmap(rng), zero, init, residual=True)
    assert torch.equal(a, b)


def test_fuse_matches_hand_evaluation(rng):
    net = init_adapter(4, 2).double()
    prev, hat, init = fmap(rng), fmap(rng), fmap(rng)
    att = torch.from_numpy(rng.uniform(0.1, 0.9, 4))
    w1 = net.eta[0].weight.detach().numpy()[:, :, 0, 0]
    b1 = net.eta[0].bias.detach().numpy()
    w2 = net.eta[2].weight.detach().numpy()[:, :, 0, 0]
    b2 = net.eta[2].bias.detach().numpy()
    concat = np.concatenate([prev.numpy(), att.numpy()[:, None, None] * hat.numpy()])
    want = np.zeros((4, 5, 5))
    for i in range(5):
        for j in range(5):
            hidden = np.maximum(w1 @ concat[:, i, j] + b1, 0)
            want[:, i, j] = np.tanh(w2 @ hidden + b2)
    got_r = fuse(net, prev, hat, att, init, residual=False).detach().numpy()
    got = fuse(net, prev, hat, att, init, residual=True).detach().numpy()
    assert np.abs(got_r - want).max() <= 1e-6
    assert np.abs(got - (init.numpy() + want)).max() <= 1e-6


def test_fuse_shape_errors(rng):
    net = init_adapter(4, 0).double()
    att = torch.full((4,), 0.5, dtype=torch.float64)
    with pytest.raises(ShapeMismatchError):
        fuse(net, fmap(rng), fmap(rng, h=4), att, fmap(rng))
    with pytest.raises(ShapeMismatchError):
        fuse(net, fmap(rng), fmap(rng), torch.ones(3, dtype=torch.float64), fmap(rng))


@given(st.integers(0, 2**32 - 1))
def test_residual_bound(seed):
    r = np.random.default_rng(seed)
    net = init_adapter(4, seed % 97).double()
    init = fmap(r) * 5
    with torch.no_grad():
        out = fuse(net, fmap(r) * 5, fmap(r) * 5, torch.from_numpy(r.uniform(0, 1, 4)), init, residual=True)
    assert float((out - init).abs().max()) < 1.0


def test_moving_average_examples(rng):
    a, b = fmap(rng), fmap(rng)
    assert torch.equal(moving_average(a, b, 0.0), a)
    assert torch.equal(moving_average(a, b, 1.0), b)
    assert torch.equal(moving_average(torch.full((1, 1, 1), 2.0), torch.full((1, 1, 1), 4.0), 0.5),
                       torch.full((1, 1, 1), 3.0))
    with pytest.raises(ShapeMismatchError):
        moving_average(a, fmap(rng, h=4), 0.5)


def test_average_template_examples(rng):
    a, b = fmap(rng), fmap(rng)
    assert torch.equal(average_template(a, a), a)
    assert torch.equal(average_template(torch.zeros(1, 1, 1), torch.ones(1, 1, 1)), torch.full((1, 1, 1), 0.5))
    assert torch.equal(average_template(a, b), moving_average(a, b, 0.5))


@pytest.mark.parametrize("gamma", [0.1, 0.5, 0.9])
def test_ema_geometric_decay(gamma, rng):
    target = fmap(rng)
    phi = fmap(rng)
    d0 = float(torch.linalg.vector_norm(phi - target))
    for n in range(1, 51):
        phi = moving_average(phi, target, gamma)
        dn = float(torch.linalg.vector_norm(phi - target))
        assert dn == pytest.approx((1 - gamma) ** n * d0, rel=1e-9, abs=1e-12)


def test_adaptation_loss_examples(rng):
    gt = fmap(rng)
    assert float(adaptation_loss(gt, gt, fmap(rng))) == 0.0
    tilde, avg = fmap(rng), fmap(rng)
    assert torch.equal(adaptation_loss(gt, tilde, avg, lam=0.0), ((gt - tilde) ** 2).mean())
    one = lambda v: torch.tensor([[[v]]], dtype=torch.float64)
    assert float(adaptation_loss(one(0.0), one(2.0), one(1.0), lam=10.0)) == 14.0


@given(st.integers(0, 2**32 - 1), st.floats(0, 50))
def test_adaptation_loss_penalty_properties(seed, lam):
    r = np.random.default_rng(seed)
    gt, tilde, avg = fmap(r), fmap(r), fmap(r)
    loss = adaptation_loss(gt, tilde, avg, lam)
    assert float(loss) >= 0
    if bool(constraint_satisfied(gt, tilde, avg)):
        assert torch.equal(loss, adaptation_loss(gt, tilde, avg, 0.0))


def _composite(net, z, init, hat, prev, gt, avg):
    a = channel_attention(net, z, init, hat)
    return adaptation_loss(gt, fuse(net, prev, hat, a, init, residual=True), avg, 10.0)


def test_composite_gradient_check(rng):
    net = Adapter(4).double()
    torch.manual_seed(0)
    for p in net.parameters():
        torch.nn.init.normal_(p, std=0.5)
    z, init, hat, prev, gt = (fmap(rng, h=7 if i == 0 else 5, w=7 if i == 0 else 5) for i in range(5))
    avg = gt + 0.05 * fmap(rng)  # close average so the constraint is active
    assert not bool(constraint_satisfied(gt, init, avg))
    loss = _composite(net, z, init, hat, prev, gt, avg)
    loss.backward()
    eps = 1e-5
    for name, p in net.named_parameters():
        num = torch.zeros_like(p)
        with torch.no_grad():
            for i in range(p.numel()):
                orig = p.view(-1)[i].item()
                p.view(-1)[i] = orig + eps
                up = _composite(net, z, init, hat, prev, gt, avg)
                p.view(-1)[i] = orig - eps
                down = _composite(net, z, init, hat, prev, gt, avg)
                p.view(-1)[i] = orig
                num.view(-1)[i] = (up - down) / (2 * eps)
        rel = float((p.grad - num).norm() / max(float(num.norm()), 1e-12))
        assert rel < 1e-4, name


def _samples(rng, n=24, c=4):
    t = lambda: torch.from_numpy(rng.normal(size=(n, c, 5, 5)).astype(np.float32))
    gt = t()
    return AdaptSamples(t(), gt + 0.1 * t(), torch.from_numpy(rng.normal(size=(n, c)).astype(np.float32)),
                        gt + 0.3 * t(), gt)


def test_train_zero_lr_and_determinism(tmp_path, rng):
    s = _samples(rng)
    net0 = init_adapter(4, 0)
    net, _ = train_adapter(s, AdapterConfig(epochs=1, lr=0.0), adapter=init_adapter(4, 0))
    for a, b in zip(net0.state_dict().values(), net.state_dict().values()):
        assert torch.equal(a, b)
    cfg = AdapterConfig(epochs=3, batch_size=8)
    a, rec = train_adapter(s, cfg, log_path=tmp_path / "a.jsonl")
    b, _ = train_adapter(s, cfg)
    for x, y in zip(a.state_dict().values(), b.state_dict().values()):
        assert torch.equal(x, y)
    lines = [json.loads(x) for x in (tmp_path / "a.jsonl").read_text().splitlines()]
    assert len(lines) == 3 and set(lines[0]) == {"epoch", "loss", "constraint_rate"}
    assert 0.0 <= constraint_rate(a, s, cfg.residual) <= 1.0


def test_train_insufficient(rng):
    with pytest.raises(InsufficientDataError):
        train_adapter(_samples(rng, n=4), AdapterConfig(min_samples=10))
