"""Gradient engine tests: op semantics, gradient checks, optimizer,
checkpoint format."""

import numpy as np
import numpy.testing as npt
import pytest

from handmotion import _kernels, nn
from handmotion.errors import DimensionError, NumericalError, StateError
from handmotion.nn import Adam, ParamStore, Tensor

from gradcheck_util import check_gradients

BACKENDS = [_kernels.numpy_backend]
if _kernels.HAVE_EXT:
    BACKENDS.append(_kernels.backend)


def brute_force_conv(x, w, b, dilation):
    """Triple-loop reference: y[t,o] = b[o] + sum x[t-(K-1-k)d, c] w[k,c,o]."""
    t_len, _ = x.shape
    kernel, c_in, c_out = w.shape
    y = np.tile(b.astype(np.float64), (t_len, 1))
    for t in range(t_len):
        for k in range(kernel):
            src = t - (kernel - 1 - k) * dilation
            if src < 0:
                continue
            for c in range(c_in):
                y[t] += x[src, c] * w[k, c]
    return y


# ---------------------------------------------------------------------------
# convolution kernels
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.NAME)
def test_conv_forward_matches_brute_force(backend):
    rng = np.random.default_rng(42)
    x = rng.standard_normal((6, 2))
    w = rng.standard_normal((3, 2, 5))
    b = rng.standard_normal(5)
    y = backend.conv_forward(x, w, b, 2)
    npt.assert_allclose(y, brute_force_conv(x, w, b, 2), atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=lambda b: b.NAME)
@pytest.mark.parametrize("shape", [(1, 3, 4, 2, 1), (9, 5, 3, 4, 3), (12, 4, 4, 1, 1)])
def test_conv_forward_shapes(backend, shape):
    t_len, c_in, c_out, kernel, dilation = shape
    rng = np.random.default_rng(7)
    x = rng.standard_normal((t_len, c_in))
    w = rng.standard_normal((kernel, c_in, c_out))
    b = rng.standard_normal(c_out)
    y = backend.conv_forward(x, w, b, dilation)
    assert y.shape == (t_len, c_out)
    npt.assert_allclose(y, brute_force_conv(x, w, b, dilation), atol=1e-12)


def test_conv_zero_input_zero_bias():
    y = nn.causal_conv1d(np.zeros((5, 3)), np.random.default_rng(0).standard_normal((2, 3, 4)), np.zeros(4), 1)
    npt.assert_array_equal(y.data, np.zeros((5, 4)))


def test_conv_kernel1_identity_permutation():
    # K=1, d=1 with a permutation matrix as weights permutes channels
    perm = np.eye(3)[[2, 0, 1]]
    x = np.random.default_rng(1).standard_normal((4, 3))
    y = nn.causal_conv1d(x, perm[None, :, :], np.zeros(3), 1)
    npt.assert_array_equal(y.data, x @ perm)


def test_conv_causality_exact():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((10, 3))
    w = rng.standard_normal((3, 3, 3))
    b = rng.standard_normal(3)
    base = _kernels.conv_forward(x, w, b, 2)
    for t in range(10):
        bumped = x.copy()
        bumped[t] += rng.standard_normal(3)
        out = _kernels.conv_forward(bumped, w, b, 2)
        npt.assert_array_equal(out[:t], base[:t])
        assert np.any(out[t:] != base[t:])


def test_backends_agree():
    if not _kernels.HAVE_EXT:
        pytest.skip("extension not built")
    rng = np.random.default_rng(5)
    x = rng.standard_normal((11, 6))
    w = rng.standard_normal((4, 6, 7))
    b = rng.standard_normal(7)
    gy = rng.standard_normal((11, 7))
    npt.assert_allclose(
        _kernels.numpy_backend.conv_forward(x, w, b, 2),
        _kernels.backend.conv_forward(x, w, b, 2),
        atol=1e-12,
    )
    for a, c in zip(
        _kernels.numpy_backend.conv_backward(x, w, gy, 2),
        _kernels.backend.conv_backward(x, w, gy, 2),
    ):
        npt.assert_allclose(a, c, atol=1e-12)


# ---------------------------------------------------------------------------
# backward mechanics
# ---------------------------------------------------------------------------


def test_grad_of_sum_is_ones():
    p = Tensor(np.random.default_rng(0).standard_normal((3, 4)), requires_grad=True)
    nn.tsum(p).backward()
    npt.assert_array_equal(p.grad, np.ones((3, 4)))


def test_grad_of_half_squared_norm_is_p():
    p = Tensor(np.random.default_rng(1).standard_normal(6), requires_grad=True)
    nn.mul(nn.tsum(nn.mul(p, p)), 0.5).backward()
    npt.assert_allclose(p.grad, p.data, atol=1e-12)


def test_backward_requires_scalar():
    p = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(StateError):
        nn.mul(p, 2.0).backward()


def test_gradient_accumulates_across_backwards():
    p = Tensor(np.ones(3), requires_grad=True)
    nn.tsum(p).backward()
    nn.tsum(p).backward()
    npt.assert_array_equal(p.grad, 2 * np.ones(3))


def test_finite_check_raises():
    with np.errstate(over="ignore"):
        with pytest.raises(NumericalError):
            nn.exp(Tensor(np.array([1000.0])))
        previous = nn.set_finite_checks(False)
        try:
            nn.exp(Tensor(np.array([1000.0])))  # no raise when disabled
        finally:
            nn.set_finite_checks(previous)


def test_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        nn.causal_conv1d(np.zeros((4, 3)), np.zeros((2, 5, 4)), np.zeros(4), 1)
    with pytest.raises(DimensionError):
        nn.matmul(Tensor(np.zeros((2, 2, 2))), Tensor(np.zeros((2, 2))))


# ---------------------------------------------------------------------------
# per-op gradient checks (64-bit, central differences)
# ---------------------------------------------------------------------------


def _param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _case_add(rng):
    a, b = _param(rng, 3, 4), _param(rng, 4)
    return [a, b], lambda: nn.tsum(nn.mul(nn.add(a, b), nn.add(a, 1.0)))


def _case_sub(rng):
    a, b = _param(rng, 3, 4), _param(rng, 3, 4)
    return [a, b], lambda: nn.tsum(nn.mul(nn.sub(a, b), nn.sub(a, b)))


def _case_mul_broadcast(rng):
    a, b = _param(rng, 5, 2), _param(rng, 2)
    return [a, b], lambda: nn.tsum(nn.mul(a, b))


def _case_div(rng):
    a = _param(rng, 4)
    b = Tensor(rng.standard_normal(4) + 3.0, requires_grad=True)
    return [a, b], lambda: nn.tsum(nn.div(a, b))


def _case_matmul_2d(rng):
    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    return [a, b], lambda: nn.tsum(nn.mul(nn.matmul(a, b), nn.matmul(a, b)))


def _case_matmul_vec_mat(rng):
    a, b = _param(rng, 4), _param(rng, 4, 3)
    return [a, b], lambda: nn.tsum(nn.mul(nn.matmul(a, b), 2.0))


def _case_matmul_mat_vec(rng):
    a, b = _param(rng, 3, 4), _param(rng, 4)
    return [a, b], lambda: nn.tsum(nn.mul(nn.matmul(a, b), nn.matmul(a, b)))


def _case_sigmoid(rng):
    a = _param(rng, 6)
    downstream = Tensor(rng.standard_normal(6))
    return [a], lambda: nn.tsum(nn.mul(nn.sigmoid(a), downstream))


def _case_exp(rng):
    a = _param(rng, 5)
    return [a], lambda: nn.tsum(nn.exp(a))


def _case_log(rng):
    a = Tensor(rng.uniform(0.5, 2.0, 5), requires_grad=True)
    return [a], lambda: nn.tsum(nn.log(a))


def _case_softmax(rng):
    a = _param(rng, 3, 5)
    downstream = Tensor(rng.standard_normal((3, 5)))
    return [a], lambda: nn.tsum(nn.mul(nn.softmax(a), downstream))


def _case_l1_normalize(rng):
    a = Tensor(rng.uniform(0.1, 1.0, 6), requires_grad=True)
    downstream = Tensor(rng.standard_normal(6))
    return [a], lambda: nn.tsum(nn.mul(nn.l1_normalize(a), downstream))


def _case_cosine_matrix(rng):
    a = _param(rng, 4, 3)
    downstream = Tensor(rng.standard_normal((4, 4)))
    return [a], lambda: nn.tsum(nn.mul(nn.cosine_similarity_matrix(a), downstream))


def _case_pad_front(rng):
    a = _param(rng, 3, 2)
    downstream = Tensor(rng.standard_normal((6, 2)))
    return [a], lambda: nn.tsum(nn.mul(nn.pad_front_rows(a, 6), downstream))


def _case_narrow(rng):
    a = _param(rng, 6, 2)
    downstream = Tensor(rng.standard_normal((3, 2)))
    return [a], lambda: nn.tsum(nn.mul(nn.narrow(a, 2, 3), downstream))


def _case_reshape(rng):
    a = _param(rng, 4, 3)
    downstream = Tensor(rng.standard_normal(12))
    return [a], lambda: nn.tsum(nn.mul(nn.reshape(a, (12,)), downstream))


OP_CASES = {
    "add": _case_add,
    "sub": _case_sub,
    "mul_broadcast": _case_mul_broadcast,
    "div": _case_div,
    "matmul_2d": _case_matmul_2d,
    "matmul_vec_mat": _case_matmul_vec_mat,
    "matmul_mat_vec": _case_matmul_mat_vec,
    "sigmoid": _case_sigmoid,
    "exp": _case_exp,
    "log": _case_log,
    "softmax": _case_softmax,
    "l1_normalize": _case_l1_normalize,
    "cosine_matrix": _case_cosine_matrix,
    "pad_front": _case_pad_front,
    "narrow": _case_narrow,
    "reshape": _case_reshape,
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients(name):
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    params, build = OP_CASES[name](rng)
    err = check_gradients(build, params)
    assert err < 1e-6, f"{name}: gradient error {err:.2e}"


@pytest.mark.parametrize("case", [(5, 2, 3, 2, 1), (6, 2, 2, 3, 2), (4, 3, 3, 1, 1), (7, 2, 4, 4, 3)])
def test_conv_gradients(case):
    t_len, c_in, c_out, kernel, dilation = case
    rng = np.random.default_rng(sum(case))
    x = _param(rng, t_len, c_in)
    w = _param(rng, kernel, c_in, c_out)
    b = _param(rng, c_out)
    downstream = Tensor(rng.standard_normal((t_len, c_out)))

    def build():
        return nn.tsum(nn.mul(nn.causal_conv1d(x, w, b, dilation), downstream))

    err = check_gradients(build, [x, w, b])
    assert err < 1e-6, f"conv gradient error {err:.2e}"


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(8)
    values = rng.standard_normal(8)
    values[np.abs(values) < 0.05] = 0.5
    a = Tensor(values, requires_grad=True)
    downstream = Tensor(rng.standard_normal(8))
    err = check_gradients(lambda: nn.tsum(nn.mul(nn.relu(a), downstream)), [a])
    assert err < 1e-6


def test_stack_rows_gradient():
    rng = np.random.default_rng(9)
    parts = [_param(rng, 3) for _ in range(4)]
    downstream = Tensor(rng.standard_normal((4, 3)))
    err = check_gradients(lambda: nn.tsum(nn.mul(nn.stack_rows(parts), downstream)), parts)
    assert err < 1e-6


# ---------------------------------------------------------------------------
# ParamStore and Adam
# ---------------------------------------------------------------------------


def test_param_store_grad_slots_and_unique_names():
    store = ParamStore()
    t = store.add("w", np.ones((2, 2)))
    assert t.grad.shape == (2, 2)
    with pytest.raises(DimensionError):
        store.add("w", np.zeros(3))
    assert store.n_parameters() == 4


def test_adam_zero_gradients_leave_params_unchanged():
    store = ParamStore()
    store.add("p", np.array([1.0, -2.0, 3.0]))
    optimizer = Adam(store)
    optimizer.step()
    npt.assert_array_equal(store["p"].data, [1.0, -2.0, 3.0])
    assert optimizer.t == 1


def test_adam_descends_constant_gradient():
    store = ParamStore()
    p = store.add("p", np.array([1.0]))
    optimizer = Adam(store, lr=1e-2)
    values = []
    for _ in range(50):
        p.grad[...] = 2.0  # constant positive gradient
        optimizer.step()
        values.append(float(p.data[0]))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_adam_converges_on_quadratic_bowl():
    # direct optimization run: this bowl reaches 1e-6 at step 1287
    target = np.array([0.3, -0.15])
    store = ParamStore()
    p = store.add("p", np.zeros(2))
    optimizer = Adam(store)  # defaults: lr=1e-3
    steps = 0
    for steps in range(1, 2001):
        d = nn.sub(p, Tensor(target))
        loss = nn.mul(nn.tsum(nn.mul(d, d)), 0.5)
        loss.backward()
        optimizer.step()
        if np.abs(p.data - target).max() < 1e-6:
            break
    assert np.abs(p.data - target).max() < 1e-6, f"not converged after {steps} steps"


def test_zero_lr_leaves_params_unchanged():
    store = ParamStore()
    p = store.add("p", np.array([1.0, 2.0]))
    optimizer = Adam(store, lr=0.0)
    p.grad[...] = 5.0
    optimizer.step()
    npt.assert_array_equal(p.data, [1.0, 2.0])


# ---------------------------------------------------------------------------
# HMDL checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    tensors = {
        "a.w": rng.standard_normal((3, 4)).astype(np.float32),
        "b.bias": rng.standard_normal(7).astype(np.float32),
        "scalarish": rng.standard_normal((1,)).astype(np.float32),
    }
    config = {"arch": "tiny", "labels": "a,b,c"}
    path = tmp_path / "model.hmdl"
    nn.save_checkpoint(path, config, tensors)
    config2, tensors2 = nn.load_checkpoint(path)
    assert config2 == config
    for name, arr in tensors.items():
        npt.assert_array_equal(tensors2[name], arr)
        assert tensors2[name].dtype == np.float32
    # save -> load -> save is byte-identical
    path2 = tmp_path / "model2.hmdl"
    nn.save_checkpoint(path2, config2, tensors2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.hmdl"
    bad.write_bytes(b"NOPE" + b"\x00" * 16)
    from handmotion.errors import DataError

    with pytest.raises(DataError):
        nn.load_checkpoint(bad)
