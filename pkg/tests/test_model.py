"""Attention mechanisms, the CNN/BiLSTM composition, and ablation contracts."""

import numpy as np
import pytest

from eeg4d import diff
from eeg4d.diff import backward, constant
from eeg4d.gradcheck import grad_check
from eeg4d.model import (ModelConfig, aggregate, bilstm_forward, classify,
                         cnn_forward, forward, forward_graph, init_params,
                         spatial_attention, spectral_attention,
                         temporal_attention)
from eeg4d.train import cross_entropy


def rng(seed=0):
    return np.random.default_rng(seed)


def _spec_weights(c, hidden, seed=0, zero=False):
    # initialization-scale weights: strict (0,1) gates need unsaturated
    # sigmoids, which huge unnormalized weights would round away
    r = rng(seed)
    if zero:
        return constant(np.zeros((hidden, c))), constant(np.zeros((c, hidden)))
    return (constant(r.standard_normal((hidden, c)) / np.sqrt(c)),
            constant(r.standard_normal((c, hidden)) / np.sqrt(hidden)))


# ---------------------------------------------------------------------------
# spectral attention

def test_spectral_attention_constant_channels():
    # spatially constant V: avg and max paths coincide, gate = sigmoid(2 MLP(C))
    c_vals = np.array([0.5, -1.0, 2.0, 0.1])
    v = constant(np.broadcast_to(c_vals, (6, 6, 4)).copy())
    w1, w2 = _spec_weights(4, 4, seed=1)
    gate = spectral_attention(v, w1, w2)
    mlp = w2.value @ np.maximum(w1.value @ c_vals, 0)
    expect = 1.0 / (1.0 + np.exp(-2.0 * mlp))
    np.testing.assert_allclose(gate.value.reshape(-1), expect, rtol=1e-6)


def test_spectral_attention_in_unit_interval():
    for seed in range(30):
        v = constant(rng(seed).standard_normal((5, 7, 8)) * 3)
        w1, w2 = _spec_weights(8, 4, seed=seed + 100)
        gate = spectral_attention(v, w1, w2).value
        assert gate.shape == (1, 1, 8)
        assert np.all(gate > 0) and np.all(gate < 1)


def test_spectral_attention_zero_weights_half():
    v = constant(rng(2).standard_normal((5, 5, 6)))
    w1, w2 = _spec_weights(6, 4, zero=True)
    np.testing.assert_allclose(spectral_attention(v, w1, w2).value, 0.5)


def test_apply_spectral_halves_and_bounds():
    v_val = rng(3).standard_normal((5, 5, 6))
    v = constant(v_val)
    w1, w2 = _spec_weights(6, 4, zero=True)      # gate = 0.5 exactly
    gated = diff.mul(spectral_attention(v, w1, w2), v)
    np.testing.assert_allclose(gated.value, v_val / 2, rtol=1e-6)

    w1, w2 = _spec_weights(6, 4, seed=4)
    gated = diff.mul(spectral_attention(v, w1, w2), v)
    assert np.all(np.abs(gated.value) <= np.abs(v_val) + 1e-12)


def test_apply_spectral_matches_loop_oracle():
    v_val = rng(5).standard_normal((4, 5, 3))
    gate_val = rng(6).uniform(0.1, 0.9, size=3)
    out = diff.mul(constant(gate_val.reshape(1, 1, 3)), constant(v_val)).value
    for i in range(4):
        for j in range(5):
            for c in range(3):
                assert out[i, j, c] == pytest.approx(
                    v_val[i, j, c] * gate_val[c], rel=1e-6
                )


# ---------------------------------------------------------------------------
# spatial attention

def _spat_weights(k=7, seed=0, zero=False):
    r = rng(seed)
    if zero:
        return constant(np.zeros((k, k, 2, 1))), constant(np.zeros(1))
    return (constant(r.standard_normal((k, k, 2, 1)) * 0.3),
            constant(r.standard_normal(1)))


def test_spatial_attention_spatially_constant_interior():
    v = constant(np.broadcast_to(rng(7).standard_normal(5), (9, 9, 5)).copy())
    kern, bias = _spat_weights(seed=8)
    gate = spatial_attention(v, kern, bias).value[..., 0]
    interior = gate[3:6, 3:6]            # beyond the 7x7 kernel's border halo
    np.testing.assert_allclose(interior, interior[0, 0], rtol=1e-5)


def test_spatial_attention_range_and_zero_weights():
    for seed in range(20):
        v = constant(rng(seed).standard_normal((8, 8, 4)) * 2)
        kern, bias = _spat_weights(seed=seed + 50)
        gate = spatial_attention(v, kern, bias).value
        assert gate.shape == (8, 8, 1)
        assert np.all(gate > 0) and np.all(gate < 1)
    kern, bias = _spat_weights(zero=True)
    v = constant(rng(9).standard_normal((6, 6, 3)))
    np.testing.assert_allclose(spatial_attention(v, kern, bias).value, 0.5)


def test_attention_magnitude_never_grows():
    # |V''| <= |V'| <= |V| elementwise, gates in (0,1)
    for seed in range(10):
        v_val = rng(seed).standard_normal((7, 7, 6))
        v = constant(v_val)
        w1, w2 = _spec_weights(6, 4, seed=seed + 10)
        vp = diff.mul(spectral_attention(v, w1, w2), v)
        kern, bias = _spat_weights(seed=seed + 20)
        vpp = diff.mul(spatial_attention(vp, kern, bias), vp)
        assert np.all(np.abs(vp.value) <= np.abs(v_val) + 1e-12)
        assert np.all(np.abs(vpp.value) <= np.abs(vp.value) + 1e-12)


# ---------------------------------------------------------------------------
# cnn stage

def test_cnn_forward_output_shape_full_size():
    cfg = ModelConfig.full()
    params = init_params(cfg, rng(0))
    rep, tap, _, _ = cnn_forward(
        constant(rng(1).standard_normal((19, 19, 10)).astype(np.float32)),
        params, cfg,
    )
    assert rep.value.shape == (150,)
    assert tap.value.shape == (19, 19, 64)
    assert cfg.flatten_dim == 9 * 9 * 64 == 5184


def test_cnn_attention_off_ignores_attention_params():
    cfg = ModelConfig.desk().with_flags(spectral=False, spatial=False)
    params = init_params(cfg, rng(2))
    x = constant(rng(3).standard_normal(
        (19, 19, 10)).astype(np.float32))
    rep1, _, _, _ = cnn_forward(x, params, cfg)
    for i in range(1, 5):
        params[f"cnn.attn{i}.spec.w1"].value += 10.0
        params[f"cnn.attn{i}.spat.kernel"].value -= 5.0
    rep2, _, _, _ = cnn_forward(x, params, cfg)
    np.testing.assert_array_equal(rep1.value, rep2.value)


def test_cnn_zero_input_zero_biases():
    cfg = ModelConfig.desk()
    params = init_params(cfg, rng(4))
    x = constant(np.zeros((19, 19, 10), dtype=np.float32))
    rep, tap, _, _ = cnn_forward(x, params, cfg)
    assert np.all(tap.value == 0)
    assert np.all(rep.value == 0)


# ---------------------------------------------------------------------------
# bilstm

def test_bilstm_output_shape():
    cfg = ModelConfig.full()
    params = init_params(cfg, rng(5))
    p_nodes = [constant(rng(i).standard_normal(150).astype(np.float32))
               for i in range(6)]
    y_rows = bilstm_forward(p_nodes, params, cfg)
    assert len(y_rows) == 6
    assert all(y.value.shape == (72,) for y in y_rows)


def test_bilstm_zero_params():
    cfg = ModelConfig.tiny()
    params = init_params(cfg, rng(6))
    for name, t in params.items():
        if name.startswith("lstm."):
            t.value[:] = 0
    p_nodes = [constant(rng(7).standard_normal(16)) for _ in range(2)]
    for y in bilstm_forward(p_nodes, params, cfg):
        np.testing.assert_allclose(y.value, 0.0)


def test_bilstm_time_reversal_symmetry_with_tied_weights():
    cfg = ModelConfig.tiny()
    params = init_params(cfg, rng(8), dtype=np.float64)
    # tie the two directions
    for gate in ("i", "f", "g", "o"):
        for part in ("wx", "wh", "b"):
            params[f"lstm.bwd.{part}_{gate}"].value = \
                params[f"lstm.fwd.{part}_{gate}"].value.copy()
    seq = [constant(rng(20 + i).standard_normal(16)) for i in range(4)]
    y = bilstm_forward(seq, params, cfg)
    y_rev = bilstm_forward(list(reversed(seq)), params, cfg)
    n = len(seq)
    h = cfg.lstm_units
    for i in range(n):
        # reversing the input swaps the roles of the two directions
        np.testing.assert_allclose(y_rev[i].value[:h],
                                   y[n - 1 - i].value[h:], rtol=1e-10)
        np.testing.assert_allclose(y_rev[i].value[h:],
                                   y[n - 1 - i].value[:h], rtol=1e-10)


# ---------------------------------------------------------------------------
# temporal attention and aggregation

def test_temporal_attention_identical_rows_uniform():
    cfg = ModelConfig.full()
    params = init_params(cfg, rng(9))
    row = rng(10).standard_normal(72).astype(np.float32)
    attn = temporal_attention([constant(row.copy()) for _ in range(6)], params)
    np.testing.assert_allclose(attn.value, 1.0 / 6.0, rtol=1e-5)
    assert attn.value.shape == (6, 1)


def test_temporal_attention_simplex_and_shift_invariance():
    cfg = ModelConfig.full()
    params = init_params(cfg, rng(11))
    rows = [constant(rng(40 + i).standard_normal(72).astype(np.float32))
            for i in range(6)]
    a1 = temporal_attention(rows, params).value
    assert abs(a1.sum() - 1.0) < 1e-6
    assert np.all(a1 > 0)
    # shifting every score by a constant (via the shared output bias)
    # cannot change the softmax
    params["tattn.b2"].value += 3.7
    a2 = temporal_attention(rows, params).value
    np.testing.assert_allclose(a1, a2, rtol=1e-5)


def test_aggregate_one_hot_and_bounds():
    y_vals = rng(12).standard_normal((6, 72))
    y = constant(y_vals)
    onehot = np.zeros((6, 1))
    onehot[3] = 1.0
    np.testing.assert_allclose(aggregate(y, constant(onehot)).value,
                               y_vals[3], rtol=1e-6)

    w = rng(13).uniform(0, 1, size=(6, 1))
    w /= w.sum()
    out = aggregate(y, constant(w)).value
    assert np.all(out <= y_vals.max(axis=0) + 1e-9)
    assert np.all(out >= y_vals.min(axis=0) - 1e-9)


def test_aggregate_uniform_is_column_mean():
    y_vals = rng(14).standard_normal((6, 72))
    uniform = np.full((6, 1), 1.0 / 6.0)
    expect = np.array([np.mean([y_vals[t, e] for t in range(6)])
                       for e in range(72)])
    np.testing.assert_allclose(
        aggregate(constant(y_vals), constant(uniform)).value, expect,
        rtol=1e-6,
    )


def test_classify_properties():
    cfg = ModelConfig.full()
    params = init_params(cfg, rng(15))
    logits, pre = classify(constant(rng(16).standard_normal(72).astype(np.float32)),
                           params)
    assert pre.value.shape == (3,)
    assert abs(pre.value.sum() - 1.0) < 1e-6
    params["cls.w"].value[:] = 0
    params["cls.b"].value[:] = 0
    _, pre0 = classify(constant(rng(17).standard_normal(72).astype(np.float32)),
                       params)
    np.testing.assert_allclose(pre0.value, 1.0 / 3.0, rtol=1e-6)


# ---------------------------------------------------------------------------
# full forward

def test_forward_shape_chain():
    cfg = ModelConfig.full()
    params = init_params(cfg, rng(18))
    x = rng(19).standard_normal((19, 19, 10, 6)).astype(np.float32)
    out = forward_graph(x, params, cfg)
    assert len(out.slice_reps) == 6
    assert all(r.value.shape == (150,) for r in out.slice_reps)
    assert out.y_stack.value.shape == (6, 72)
    assert out.temporal_attn.value.shape == (6, 1)
    assert out.pre.value.shape == (3,)
    assert abs(out.pre.value.sum() - 1.0) < 1e-6


def test_forward_temporal_off_uses_uniform_weights():
    cfg = ModelConfig.desk().with_flags(temporal=False)
    params = init_params(cfg, rng(20))
    x = rng(21).standard_normal((19, 19, 10, 6)).astype(np.float32)
    out = forward_graph(x, params, cfg)
    np.testing.assert_allclose(out.temporal_attn.value, 1.0 / 6.0)
    # aggregation reduces to column means of Y
    y = np.stack([r.value for r in
                  [diff.reshape(n, (24,)) for n in out.y_stack.parents]])
    pre, _ = forward(x, params, cfg)
    np.testing.assert_allclose(pre, out.pre.value, rtol=1e-6)


def test_forward_deterministic_bitwise():
    cfg = ModelConfig.desk()
    params = init_params(cfg, rng(22))
    x = rng(23).standard_normal((19, 19, 10, 6)).astype(np.float32)
    a = forward_graph(x, params, cfg).pre.value
    b = forward_graph(x, params, cfg).pre.value
    assert a.tobytes() == b.tobytes()


def test_forward_rejects_bad_shape():
    cfg = ModelConfig.desk()
    params = init_params(cfg, rng(24))
    with pytest.raises(ValueError):
        forward_graph(np.zeros((19, 19, 10, 5), dtype=np.float32), params, cfg)


def test_attention_maps_exposed():
    cfg = ModelConfig.desk()
    params = init_params(cfg, rng(25))
    x = rng(26).standard_normal((19, 19, 10, 6)).astype(np.float32)
    pre, maps = forward(x, params, cfg)
    assert len(maps.spectral) == 6 and len(maps.spectral[0]) == 4
    for per_slice in maps.spectral:
        for gate in per_slice:
            assert np.all(gate > 0) and np.all(gate < 1)
    for per_slice in maps.spatial:
        for gate in per_slice:
            assert np.all(gate > 0) and np.all(gate < 1)
    assert abs(maps.temporal.sum() - 1.0) < 1e-6


def test_single_cnn_parameter_set_shared_across_slices():
    cfg = ModelConfig.desk()
    params = init_params(cfg, rng(27))
    conv_kernels = [n for n in params.names() if n.endswith(".kernel")
                    and n.startswith("cnn.conv")]
    assert len(conv_kernels) == 4          # one set, not one per slice

    x = rng(28).standard_normal((19, 19, 10, 6)).astype(np.float32)
    before = forward_graph(x, params, cfg)
    reps_before = [r.value.copy() for r in before.slice_reps]
    params["cnn.conv1.kernel"].value += 0.05
    after = forward_graph(x, params, cfg)
    for rb, ra in zip(reps_before, after.slice_reps):
        assert not np.allclose(rb, ra.value)   # every slice feels the change


def test_ablation_zero_gradient_contract():
    cfg = ModelConfig.tiny().with_flags(spectral=False, spatial=False,
                                        temporal=False)
    params = init_params(cfg, rng(29))
    params.zero_grad()
    x = rng(30).standard_normal((5, 5, 10, 2)).astype(np.float32)
    out = forward_graph(x, params, cfg)
    backward(cross_entropy(out.pre, 1))
    for name, t in params.items():
        if ".attn" in name or name.startswith("tattn."):
            assert np.all(t.grad == 0), name
        elif name.startswith("cnn.conv"):
            assert np.any(t.grad != 0), name


def test_end_to_end_tiny_gradient_check():
    cfg = ModelConfig.tiny()
    params = init_params(cfg, rng(31), dtype=np.float64)
    x = rng(32).standard_normal((5, 5, 10, 2))

    def f():
        out = forward_graph(x, params, cfg)
        return cross_entropy(out.pre, 2)

    err = grad_check(f, params.tensors(), h=1e-4, samples_per_tensor=4,
                     rng=rng(33))
    assert err < 1e-4
