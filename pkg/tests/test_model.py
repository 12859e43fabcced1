"""Tests for the staged network assembly and the neck."""

import numpy as np
import pytest

from ctxtrack.model import STRIDE, ModelSpec, TrackerNet, small_spec, toy_spec
from ctxtrack.tensor import Tensor, finite_diff_grad


def rel_err(a, b, floor=1e-6):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


def toy_net(seed=0, **overrides):
    spec = toy_spec(**overrides)
    return TrackerNet(spec, np.random.default_rng(seed)), spec


def toy_images(rng):
    return (rng.random((32, 32, 3)), rng.random((64, 64, 3)),
            rng.random((64, 64, 3)))


# ----------------------------------------------------------------------
# spec validation
# ----------------------------------------------------------------------

def test_spec_rejects_bad_sizes():
    with pytest.raises(ValueError, match="multiple"):
        toy_spec(target_size=30)
    with pytest.raises(ValueError, match="window"):
        toy_spec(search_size=48)  # stride-16 grid of 3 is odd
    with pytest.raises(ValueError, match="divisible"):
        toy_spec(channels=9)
    with pytest.raises(ValueError, match="final_keys"):
        toy_spec(final_keys="none")
    with pytest.raises(ValueError, match="at least 1"):
        toy_spec(n3=0)


def test_toy_spec_layout_arithmetic():
    net, spec = toy_net()
    assert spec.dim == 32
    assert net.layout.grid("target") == (2, 2)
    assert net.layout.grid("previous") == (4, 4)
    assert net.layout.grid("search") == (4, 4)
    assert net.layout.length == 36


def test_small_spec_layout_arithmetic():
    spec = small_spec()
    t16, s16 = spec.target_size // STRIDE, spec.search_size // STRIDE
    assert (t16 * t16 + 2 * s16 * s16, spec.dim) == (441, 384)


# ----------------------------------------------------------------------
# backbone
# ----------------------------------------------------------------------

def test_backbone_token_shape():
    net, spec = toy_net()
    rng = np.random.default_rng(1)
    tokens = net.backbone_forward(*toy_images(rng))
    assert tokens.shape == (36, 32)


def test_backbone_stride_bookkeeping_other_sizes():
    net, spec = toy_net(target_size=32, search_size=96)
    rng = np.random.default_rng(2)
    tokens = net.backbone_forward(rng.random((32, 32, 3)),
                                  rng.random((96, 96, 3)),
                                  rng.random((96, 96, 3)))
    assert tokens.shape == (2 * 2 + 2 * 6 * 6, 32)


def test_backbone_without_joint_layers_has_no_cross_image_flow():
    net, spec = toy_net(seed=3)
    rng = np.random.default_rng(3)
    target, previous, search = toy_images(rng)
    base = net.backbone_forward(target, previous, search, joint=False).data
    bumped = net.backbone_forward(target, previous, search + 0.25,
                                  joint=False).data
    t = net.layout.segment_slice("target")
    p = net.layout.segment_slice("previous")
    s = net.layout.segment_slice("search")
    assert np.array_equal(base[t], bumped[t])
    assert np.array_equal(base[p], bumped[p])
    assert not np.allclose(base[s], bumped[s])


def test_backbone_joint_layers_mix_images():
    net, spec = toy_net(seed=4)
    rng = np.random.default_rng(4)
    target, previous, search = toy_images(rng)
    base = net.backbone_forward(target, previous, search).data
    bumped = net.backbone_forward(target, previous, search + 0.25).data
    t = net.layout.segment_slice("target")
    assert not np.allclose(base[t], bumped[t])


def test_construction_is_deterministic():
    net_a, _ = toy_net(seed=5)
    net_b, _ = toy_net(seed=5)
    state_a, state_b = net_a.state(), net_b.state()
    assert state_a.keys() == state_b.keys()
    for name in state_a:
        assert np.array_equal(state_a[name], state_b[name]), name


# ----------------------------------------------------------------------
# neck
# ----------------------------------------------------------------------

def test_neck_output_shape_and_depth():
    net, spec = toy_net(seed=6)
    rng = np.random.default_rng(6)
    tokens = net.backbone_forward(*toy_images(rng))
    maps = []
    out = net.neck_forward(tokens, prev_box=(16, 16, 48, 48), collect=maps)
    assert out.shape == (4, 4, 32)
    assert len(maps) == spec.n3  # three full layers plus the restricted one
    assert set(maps[-1]) == {("search", "target"), ("search", "previous")}
    assert len(maps[0]) == 9


def test_neck_single_layer_config():
    net, _ = toy_net(seed=7, n3=1)
    rng = np.random.default_rng(7)
    tokens = net.backbone_forward(*toy_images(rng))
    assert net.neck_full == []
    out = net.neck_forward(tokens, prev_box=(16, 16, 48, 48))
    assert out.shape == (4, 4, 32)


def test_neck_zeroed_box_embedding_matches_no_injection():
    net, _ = toy_net(seed=8)
    net.box_embed.weight.data[...] = 0.0
    net.box_embed.fc2.weight.data[...] = 0.0
    net.box_embed.fc2.bias.data[...] = 0.0
    rng = np.random.default_rng(8)
    tokens = net.backbone_forward(*toy_images(rng))
    with_box = net.neck_forward(tokens, prev_box=(16, 16, 48, 48)).data
    without = net.neck_forward(tokens, prev_box=None).data
    assert np.array_equal(with_box, without)


def test_neck_box_injection_changes_output():
    net, _ = toy_net(seed=9)
    rng = np.random.default_rng(9)
    tokens = net.backbone_forward(*toy_images(rng))
    a = net.neck_forward(tokens, prev_box=(16, 16, 48, 48)).data
    b = net.neck_forward(tokens, prev_box=(8, 8, 40, 40)).data
    assert not np.allclose(a, b)


# ----------------------------------------------------------------------
# full forward
# ----------------------------------------------------------------------

def test_forward_head_outputs():
    net, _ = toy_net(seed=10)
    rng = np.random.default_rng(10)
    target, previous, search = toy_images(rng)
    out = net(target, previous, search, prev_box=(16, 16, 48, 48))
    assert out.cls.shape == (4, 4, 1)
    assert out.reg.shape == (4, 4, 4)
    assert np.all(out.cls.data > 0) and np.all(out.cls.data < 1)
    assert np.all(out.reg.data > 0)


def test_forward_is_deterministic():
    rng_a, rng_b = np.random.default_rng(11), np.random.default_rng(11)
    net_a, _ = toy_net(seed=11)
    net_b, _ = toy_net(seed=11)
    out_a = net_a(*toy_images(rng_a), prev_box=(16, 16, 48, 48))
    out_b = net_b(*toy_images(rng_b), prev_box=(16, 16, 48, 48))
    assert np.array_equal(out_a.cls.data, out_b.cls.data)
    assert np.array_equal(out_a.reg.data, out_b.reg.data)


def test_forward_gradients_match_finite_differences():
    spec = toy_spec(target_size=32, search_size=32, channels=4,
                    n1=1, n2=1, n3=1)
    net = TrackerNet(spec, np.random.default_rng(12))
    rng = np.random.default_rng(12)
    images = (rng.random((32, 32, 3)), rng.random((32, 32, 3)),
              rng.random((32, 32, 3)))
    box = (8.0, 8.0, 24.0, 24.0)
    w_cls = rng.normal(size=(2, 2, 1))
    w_reg = rng.normal(size=(2, 2, 4))

    def scalar(_=None):
        out = net(*images, prev_box=box)
        return float((out.cls.data * w_cls).sum() + (out.reg.data * w_reg).sum())

    out = net(*images, prev_box=box)
    loss = (out.cls * w_cls).sum() + (out.reg * w_reg).sum()
    loss.backward()
    params = net.parameters()
    checks = [
        "patch.proj.bias",
        "stage1.0.norm1.gamma",
        "stage3_joint.0.rel_bias.tables.7",
        "box_embed.weight",
        "neck_last.abs_bias.tables.2",
        "head.cls_out.bias",
        "head.reg_out.bias",
    ]
    for name in checks:
        p = params[name]
        fd = finite_diff_grad(scalar, p)
        got = p.grad if p.grad is not None else np.zeros_like(p.data)
        assert rel_err(got, fd, floor=1e-5) < 1e-3, name
