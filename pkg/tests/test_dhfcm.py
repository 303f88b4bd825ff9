import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from helpers import rand_tensor, randomize, tiny_backbone_cfg, zero_params
from ha2f.dhfcm import DHFCM, HAFS, CrossAttention, LevelMerge, cross_attend, merge_levels
from ha2f.errors import ContractError, NumericError, ShapeError
from ha2f.features import FeatureMap, FeaturePyramid


def fmap(t, scale, phase=1):
    return FeatureMap(t, scale, phase)


def test_identical_keys_give_uniform_attention(double):
    ca = randomize(CrossAttention(4, 3, 5), seed=0)
    high = torch.randn(1, 4, 2, 2)
    low = torch.randn(1, 3, 1, 1).expand(1, 3, 4, 4).contiguous()
    out, attn = ca(high, low, return_attn=True)
    torch.testing.assert_close(attn, torch.full_like(attn, 1 / 16), atol=1e-12, rtol=0)
    mean_v = ca.v(low.flatten(2).transpose(1, 2)).mean(1)
    expected = ca.out(mean_v).reshape(1, 4, 1, 1).expand_as(out)
    torch.testing.assert_close(out, expected, atol=1e-12, rtol=0)


def test_single_key_output_ignores_queries(double):
    ca = randomize(CrossAttention(4, 3, 5), seed=1)
    low = torch.randn(1, 3, 1, 1)
    a = ca(torch.randn(1, 4, 2, 2), low)
    b = ca(torch.randn(1, 4, 2, 2) * 10, low)
    torch.testing.assert_close(a, b, atol=1e-12, rtol=0)
    expected = ca.out(ca.v(low.flatten(2).transpose(1, 2)))
    torch.testing.assert_close(a[0, :, 0, 0], expected[0, 0], atol=1e-12, rtol=0)


def test_cross_attention_scalar_hand_case(double):
    ca = zero_params(CrossAttention(1, 1, 1))
    with torch.no_grad():
        ca.q.weight.fill_(2.0)
        ca.k.weight.fill_(1.0)
        ca.k.bias.fill_(0.5)
        ca.v.weight.fill_(3.0)
        ca.out.weight.fill_(0.5)
        ca.out.bias.fill_(0.1)
    h = [1.0, -1.0]
    l = [0.0, 2.0]
    q = [2 * v for v in h]
    k = [v + 0.5 for v in l]
    v = [3 * x for x in l]
    expected = []
    for qi in q:
        e = [math.exp(qi * kj) for kj in k]
        expected.append(0.5 * sum(ej / sum(e) * vj for ej, vj in zip(e, v)) + 0.1)
    out = ca(torch.tensor(h).view(1, 1, 1, 2), torch.tensor(l).view(1, 1, 1, 2))
    np.testing.assert_allclose(out.detach().numpy().ravel(), expected, atol=1e-6, rtol=0)


def test_cross_attend_contracts():
    ca = CrossAttention(4, 3, 5)
    high, low = torch.randn(1, 4, 2, 2), torch.randn(1, 3, 4, 4)
    with pytest.raises(ContractError, match="phase"):
        cross_attend(fmap(high, 16, 1), fmap(low, 8, 2), ca)
    bad = low.clone()
    bad[0, 0, 0, 0] = float("nan")
    with pytest.raises(NumericError):
        cross_attend(fmap(high, 16), fmap(bad, 8), ca)
    out = cross_attend(fmap(high, 16), fmap(low, 8), ca)
    assert out.scale == 16 and out.data.shape == high.shape


def test_cross_attention_rows_sum_to_one(double):
    ca = randomize(CrossAttention(4, 3, 5), seed=2, scale=1.5)
    _, attn = ca(torch.randn(2, 4, 2, 2), torch.randn(2, 3, 8, 8), return_attn=True)
    torch.testing.assert_close(attn.sum(-1), torch.ones(2, 4), atol=1e-6, rtol=0)


def test_merge_zero_and_identity_slices(double):
    m = LevelMerge(3, 3)
    a = [torch.randn(1, 3, 4, 4) for _ in range(3)]
    with torch.no_grad():
        m.pointwise.weight.zero_()
        m.pointwise.bias.zero_()
        m.dw_bias.zero_()
    zeros = torch.zeros(1, 3, 4, 4)
    assert torch.equal(merge_levels(zeros, zeros, zeros, m), zeros)
    with torch.no_grad():
        m.dw_weight.fill_(1.0)
        m.pointwise.weight[:, :, 0, 0] = torch.cat([torch.eye(3)] * 3, dim=1)
    torch.testing.assert_close(merge_levels(*a, m), a[0] + a[1] + a[2], atol=1e-12, rtol=0)


def test_merge_matches_per_pixel_oracle(double):
    rng = np.random.default_rng(5)
    m = randomize(LevelMerge(3, 5), seed=5)
    a = [rand_tensor(rng, 1, 3, 4, 4) for _ in range(3)]
    expected = oracles.merge_levels(*(t[0].numpy() for t in a), m)
    np.testing.assert_allclose(m(*a)[0].detach().numpy(), expected, atol=1e-6)


def test_merge_shape_mismatch():
    with pytest.raises(ShapeError):
        LevelMerge(3, 3)(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 2, 2))


def test_hafs_zero_weights(double):
    m = zero_params(HAFS(3)).eval()
    with torch.no_grad():
        for bn in (m.cbr[1], m.dbr[2]):
            bn.weight.fill_(1.0)
    gate, guide = torch.randn(1, 3, 4, 4), torch.randn(1, 3, 4, 4)
    out, attn, h_proj = m(gate, guide, return_attn=True)
    assert torch.all(h_proj == 0)
    assert torch.all(attn == 0.5)
    torch.testing.assert_close(out, 0.5 * gate, atol=0, rtol=0)


def test_hafs_one_channel_hand_case(double):
    # 2x2 input with an all-ones 3x3 depthwise kernel: every output position sums the whole grid
    m = HAFS(1).eval()
    eps = m.cbr[1].eps
    with torch.no_grad():
        m.cbr[0].weight.fill_(0.8)
        m.cbr[1].running_mean.fill_(0.1)
        m.cbr[1].running_var.fill_(4.0)
        m.cbr[1].weight.fill_(1.5)
        m.cbr[1].bias.fill_(0.2)
        m.dbr[0].weight.fill_(1.0)
        m.dbr[1].weight.fill_(0.5)
        m.dbr[2].running_mean.fill_(0.0)
        m.dbr[2].running_var.fill_(1.0)
        m.dbr[2].weight.fill_(1.0)
        m.dbr[2].bias.fill_(-0.3)
        m.attn_proj.weight.fill_(0.7)
        m.attn_proj.bias.fill_(-0.2)
    gate = [[1.0, -2.0], [0.5, 3.0]]
    guide = [[0.0, 1.0], [-1.0, 2.0]]
    h = [[max(0.0, (0.8 * g - 0.1) / math.sqrt(4.0 + eps) * 1.5 + 0.2) for g in row] for row in guide]
    total = sum(gate[i][j] + h[i][j] for i in range(2) for j in range(2))
    d = max(0.0, (0.5 * total) / math.sqrt(1.0 + eps) - 0.3)
    a = 1 / (1 + math.exp(-(0.7 * d - 0.2)))
    expected = [[a * gate[i][j] + h[i][j] for j in range(2)] for i in range(2)]
    out = m(torch.tensor(gate).view(1, 1, 2, 2), torch.tensor(guide).view(1, 1, 2, 2))
    np.testing.assert_allclose(out.detach().numpy()[0, 0], expected, atol=1e-6, rtol=0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.1, 5.0))
def test_hafs_attention_range_and_residual_form(seed, scale):
    rng = np.random.default_rng(seed)
    m = randomize(HAFS(3), seed=seed % 1000).double().eval()
    gate, guide = rand_tensor(rng, 1, 3, 4, 4, scale=scale), rand_tensor(rng, 1, 3, 4, 4, scale=scale)
    with torch.no_grad():
        out, attn, h_proj = m(gate, guide, return_attn=True)
    assert attn.shape == (1, 1, 4, 4)
    # the attention map is strictly inside (0, 1) unless float saturation is reached
    assert torch.all(attn >= 0) and torch.all(attn <= 1)
    torch.testing.assert_close(out - h_proj, attn * gate, atol=1e-6, rtol=0)


def test_hafs_attention_strictly_inside_unit_interval(double):
    m = randomize(HAFS(3), seed=4).eval()
    with torch.no_grad():
        _, attn, _ = m(torch.randn(2, 3, 4, 4), torch.randn(2, 3, 4, 4), return_attn=True)
    assert torch.all(attn > 0) and torch.all(attn < 1)


def test_hafs_shape_mismatch():
    with pytest.raises(ShapeError):
        HAFS(3)(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 2, 2))


def make_pyramid(g, cfg, phase, n=4):
    chans = dict(zip((2, 4, 8, 16), cfg.cnn_channels))
    levels = {s: FeatureMap(torch.randn(1, chans[s], 16 * n // s, 16 * n // s, generator=g), s, phase)
              for s in (2, 4, 8, 16)}
    fused = FeatureMap(torch.randn(1, cfg.fused_channels, n // 1, n // 1, generator=g), 16, phase)
    return FeaturePyramid(levels, fused)


def _dhfcm(cfg, use_hafs=True, seed=0):
    return randomize(DHFCM(cfg, use_hafs=use_hafs), seed=seed, scale=0.3).eval()


def test_identical_pyramids_give_zero_diffs(double):
    cfg = tiny_backbone_cfg()
    m = _dhfcm(cfg)
    g = torch.Generator().manual_seed(0)
    p = make_pyramid(g, cfg, 1)
    q = FeaturePyramid({s: FeatureMap(fm.data, s, 2) for s, fm in p.levels.items()},
                       FeatureMap(p.fused_high.data, 16, 2))
    with torch.no_grad():
        _, _, diffs = m(p, q)
    for s in (2, 4, 8, 16):
        assert torch.all(diffs[s].data == 0)
        assert diffs[s].phase == "diff"


def test_hafs_off_passes_merge_output(double):
    cfg = tiny_backbone_cfg()
    m = _dhfcm(cfg, use_hafs=False)
    g = torch.Generator().manual_seed(1)
    p1, p2 = make_pyramid(g, cfg, 1), make_pyramid(g, cfg, 2)
    with torch.no_grad():
        r1, r2, _ = m(p1, p2)
        assert torch.equal(r1.fused_high.data, m.enrich(p1))
        assert torch.equal(r2.fused_high.data, m.enrich(p2))


def test_swap_symmetry_and_nonnegative_diffs(double):
    cfg = tiny_backbone_cfg()
    m = _dhfcm(cfg)
    g = torch.Generator().manual_seed(2)
    p1, p2 = make_pyramid(g, cfg, 1), make_pyramid(g, cfg, 2)
    with torch.no_grad():
        r1, r2, d = m(p1, p2)
        s1, s2, e = m(p2, p1)
    assert torch.equal(r1.fused_high.data, s2.fused_high.data)
    assert torch.equal(r2.fused_high.data, s1.fused_high.data)
    for s in (2, 4, 8, 16):
        assert torch.equal(d[s].data, e[s].data)
        assert torch.all(d[s].data >= 0)


def test_dhfcm_repeatable(double):
    cfg = tiny_backbone_cfg()
    outs = []
    for _ in range(2):
        m = _dhfcm(cfg, seed=9)
        g = torch.Generator().manual_seed(3)
        with torch.no_grad():
            _, _, d = m(make_pyramid(g, cfg, 1), make_pyramid(g, cfg, 2))
        outs.append(d[16].data)
    assert torch.equal(*outs)
