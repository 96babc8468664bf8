"""TCN backbone: batch forward oracle, causality, streaming equivalence."""

import numpy as np
import numpy.testing as npt
import pytest

from handmotion.errors import DimensionError
from handmotion.model import MotionModel
from handmotion.nn import Tensor
from handmotion.summarize import SummarizerConfig
from handmotion.tcn import Tcn, TcnConfig

SMALL = TcnConfig(input_dim=5, channels=8, kernel_size=3, dilations=(1, 2), num_stacks=2)
SMALL_SUMM = SummarizerConfig(reduced_dim=4, perceptron_size=8, max_frames=8)


def small_model(seed=0, dtype=np.float64):
    return MotionModel.init(SMALL, SMALL_SUMM, seed=seed, dtype=dtype)


def naive_forward(model, x):
    """Independent layer-by-layer evaluation with explicit python loops.

    Recomputes each causal dilated convolution directly from its definition,
    without im2col, ring buffers, or the autodiff graph.
    """
    config = model.tcn_config
    k = config.kernel_size
    h = np.asarray(x, dtype=np.float64)

    def conv(inp, w, b, dilation):
        t_len = inp.shape[0]
        out = np.tile(b, (t_len, 1))
        for t in range(t_len):
            for kk in range(k):
                src = t - (k - 1 - kk) * dilation
                if src >= 0:
                    out[t] += inp[src] @ w[kk]
        return out

    for i, (in_dim, out_dim, dilation) in enumerate(config.block_specs()):
        s = model.store
        y = np.maximum(conv(h, s[f"tcn.b{i}.conv1.w"].data, s[f"tcn.b{i}.conv1.b"].data, dilation), 0)
        y = np.maximum(conv(y, s[f"tcn.b{i}.conv2.w"].data, s[f"tcn.b{i}.conv2.b"].data, dilation), 0)
        skip = h if in_dim == out_dim else h @ s[f"tcn.b{i}.proj.w"].data
        h = y + skip
    return h


def test_single_frame_shape():
    model = small_model()
    out = model.descriptors(np.random.default_rng(0).standard_normal((1, 5)))
    assert out.shape == (1, 8)


def test_forward_matches_naive_oracle():
    model = small_model(seed=1)
    x = np.random.default_rng(2).standard_normal((17, 5))
    npt.assert_allclose(model.descriptors(x), naive_forward(model, x), atol=1e-9)


def test_graph_forward_matches_frozen_forward():
    model = small_model(seed=3)
    x = np.random.default_rng(4).standard_normal((9, 5))
    graph_out = model.tcn.forward_graph(Tensor(x)).data
    npt.assert_array_equal(graph_out, model.descriptors(x))


def test_causality_prefix_determinism():
    model = small_model(seed=5)
    rng = np.random.default_rng(6)
    a = rng.standard_normal((12, 5))
    b = a.copy()
    b[7:] = rng.standard_normal((5, 5))  # change only the future
    out_a = model.descriptors(a)
    out_b = model.descriptors(b)
    npt.assert_array_equal(out_a[:7], out_b[:7])
    assert np.any(out_a[7:] != out_b[7:])


def test_receptive_field_formula_and_invariance():
    config = TcnConfig()  # defaults: K=4, dilations (1,2,4), 2 stacks, 2 convs/block
    assert config.receptive_field == 1 + 2 * 2 * 3 * (1 + 2 + 4)

    model = small_model(seed=7)
    rf = SMALL.receptive_field
    assert rf == 1 + 2 * 2 * 2 * 3  # K=3, dilations (1,2), 2 stacks
    rng = np.random.default_rng(8)
    t_len = rf + 4
    x = rng.standard_normal((t_len, 5))
    bumped = x.copy()
    bumped[0] += 10.0
    out_a = model.descriptors(x)
    out_b = model.descriptors(bumped)
    # descriptors at t >= rf cannot see frame 0 (window is frames t-rf+1..t)
    npt.assert_array_equal(out_a[rf:], out_b[rf:])
    assert np.abs(out_a[rf - 1] - out_b[rf - 1]).max() > 0


def test_zero_input_zero_bias_gives_zero_descriptors():
    model = small_model(seed=9)
    for name, tensor in model.store.items():
        if name.endswith(".b"):
            tensor.data[...] = 0.0
    out = model.descriptors(np.zeros((6, 5)))
    npt.assert_array_equal(out, np.zeros((6, 8)))


def test_dimension_mismatch_raises():
    model = small_model()
    with pytest.raises(DimensionError):
        model.descriptors(np.zeros((4, 7)))
    state = model.new_stream_state()
    with pytest.raises(DimensionError):
        model.stream_step(state, np.zeros(7))


# ---------------------------------------------------------------------------
# streaming
# ---------------------------------------------------------------------------


def test_stream_equals_batch_float64():
    model = small_model(seed=10)
    rng = np.random.default_rng(11)
    for t_len in (1, 2, 5, 23, 50):
        x = rng.standard_normal((t_len, 5))
        batch = model.descriptors(x)
        state = model.new_stream_state()
        stream = np.stack([model.stream_step(state, f) for f in x])
        npt.assert_allclose(stream, batch, atol=1e-12)


def test_stream_equals_batch_float32():
    model = small_model(seed=12).astype(np.float32)
    rng = np.random.default_rng(13)
    x = rng.standard_normal((40, 5)).astype(np.float32)
    batch = model.descriptors(x)
    state = model.new_stream_state()
    stream = np.stack([model.stream_step(state, f) for f in x])
    npt.assert_allclose(stream, batch, atol=1e-6)


def test_stream_reset_then_replay_is_identical():
    model = small_model(seed=14)
    x = np.random.default_rng(15).standard_normal((9, 5))
    state = model.new_stream_state()
    first = np.stack([model.stream_step(state, f) for f in x])
    state.reset()
    second = np.stack([model.stream_step(state, f) for f in x])
    npt.assert_array_equal(first, second)


def test_stream_buffer_capacities():
    model = small_model()
    state = model.new_stream_state()
    expected = []
    for _, _, dilation in SMALL.block_specs():
        expected += [(SMALL.kernel_size - 1) * dilation] * 2
    assert [layer.ring.shape[0] for layer in state.layers] == expected


def test_concurrent_streams_do_not_interfere():
    model = small_model(seed=16)
    rng = np.random.default_rng(17)
    xa = rng.standard_normal((12, 5))
    xb = rng.standard_normal((12, 5))
    sa, sb = model.new_stream_state(), model.new_stream_state()
    out_a, out_b = [], []
    for fa, fb in zip(xa, xb):  # interleaved stepping
        out_a.append(model.stream_step(sa, fa))
        out_b.append(model.stream_step(sb, fb))
    npt.assert_allclose(np.stack(out_a), model.descriptors(xa), atol=1e-12)
    npt.assert_allclose(np.stack(out_b), model.descriptors(xb), atol=1e-12)


def test_config_round_trip():
    config = TcnConfig(input_dim=5, channels=12, kernel_size=2, dilations=(1, 4), num_stacks=3)
    assert TcnConfig.from_config_dict(config.to_config_dict()) == config
