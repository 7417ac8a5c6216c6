import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eamri.tensor import (
    Parameter,
    ParamStore,
    ShapeError,
    Tensor,
    Trace,
    backward,
    conv2d,
    count_ops,
    depthwise_conv2d,
    directional_check,
    fft2c,
    ifft2c,
    numerical_gradient,
    ops,
)
from eamri.tensor.gradcheck import max_rel_err
from oracles import centered_dft2, conv2d_loops, matmul_loops

rng = np.random.default_rng(1234)


# ---------------------------------------------------------------- conv2d

def test_conv_identity_center_kernel():
    x = np.ones((1, 1, 3, 3))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    out = conv2d(x, w, np.zeros(1))
    np.testing.assert_array_equal(out.data, x)


def test_conv_zero_input_gives_bias():
    w = rng.standard_normal((3, 2, 3, 3))
    b = np.array([0.5, -1.0, 2.0])
    out = conv2d(np.zeros((2, 2, 5, 4)), w, b, dilation=2)
    for o in range(3):
        assert np.all(out.data[:, o] == b[o])


def test_conv_matches_loop_oracle_dilated():
    x = rng.standard_normal((1, 2, 8, 8))
    w = rng.standard_normal((4, 2, 3, 3))
    b = rng.standard_normal(4)
    out = conv2d(x, w, b, dilation=2)
    assert np.abs(out.data - conv2d_loops(x, w, b, dilation=2)).max() < 1e-12


@pytest.mark.parametrize("dilation,groups,k", [(1, 1, 3), (4, 1, 3), (1, 2, 3), (2, 3, 5), (1, 1, 1)])
def test_conv_oracle_grid(dilation, groups, k):
    x = rng.standard_normal((2, 6, 7, 5))
    w = rng.standard_normal((3 * groups, 6 // groups, k, k))
    out = conv2d(x, w, dilation=dilation, groups=groups)
    assert np.abs(out.data - conv2d_loops(x, w, None, dilation, groups)).max() < 1e-12


def test_depthwise_identity_and_independence():
    w = np.zeros((2, 1, 3, 3))
    w[:, 0, 1, 1] = 1.0
    x = rng.standard_normal((1, 2, 5, 5))
    np.testing.assert_array_equal(depthwise_conv2d(x, w).data, x)

    x[:, 1] = 0.0
    w = rng.standard_normal((2, 1, 3, 3))
    b = np.array([0.3, -0.7])
    out = depthwise_conv2d(x, w, b)
    assert np.all(out.data[:, 1] == -0.7)


def test_depthwise_matches_loop_oracle():
    x = rng.standard_normal((1, 3, 6, 6))
    w = rng.standard_normal((3, 1, 3, 3))
    out = depthwise_conv2d(x, w, dilation=1)
    assert np.abs(out.data - conv2d_loops(x, w, groups=3)).max() < 1e-12


def test_conv_errors():
    x = np.zeros((1, 4, 5, 5))
    with pytest.raises(ShapeError):
        conv2d(x, np.zeros((2, 3, 3, 3)))
    with pytest.raises(ShapeError):
        conv2d(x, np.zeros((3, 2, 3, 3)), groups=2)
    with pytest.raises(ShapeError):
        conv2d(x, np.zeros((2, 4, 2, 2)))
    with pytest.raises(ShapeError):
        conv2d(x, np.zeros((2, 4, 3, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        conv2d(x, np.zeros((2, 4, 3, 3)), dilation=0)
    with pytest.raises(ValueError):
        conv2d(x, np.zeros((2, 4, 3, 3)), groups=0)
    with pytest.raises(ValueError):
        conv2d(x, np.zeros((2, 4, 3, 3)), padding="valid")


def test_conv_gradients_elementwise():
    x = Tensor(rng.standard_normal((1, 2, 5, 4)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal(3), requires_grad=True)
    probe = rng.standard_normal((1, 3, 5, 4))

    def loss():
        return ops.sum(ops.mul(conv2d(x, w, b, dilation=2), probe))

    with Trace() as tr:
        out = loss()
    backward(tr, out)
    for t in (x, w, b):
        assert np.abs(t.grad - numerical_gradient(loss, t)).max() < 1e-7


# ---------------------------------------------------------------- fft

def test_fft_delta_at_center():
    x = np.zeros((8, 6), dtype=complex)
    x[4, 3] = 1.0
    k = fft2c(x).data
    np.testing.assert_allclose(k, np.full((8, 6), 1 / np.sqrt(48)), atol=1e-15)


def test_fft_round_trip_16():
    x = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    assert np.abs(ifft2c(fft2c(x)).data - x).max() < 1e-12


def test_fft_matches_naive_dft():
    x = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    assert np.abs(fft2c(x).data - centered_dft2(x)).max() < 1e-10


def test_fft_matches_naive_dft_odd():
    x = rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7))
    assert np.abs(fft2c(x).data - centered_dft2(x)).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
def test_fft_unitary(h, w, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((2, h, w)) + 1j * r.standard_normal((2, h, w))
    k = fft2c(x).data
    assert abs(np.linalg.norm(k) - np.linalg.norm(x)) < 1e-12 * max(1.0, np.linalg.norm(x))
    assert np.abs(ifft2c(k).data - x).max() < 1e-12


def test_fft_vjp_is_inverse():
    x = Tensor(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)), requires_grad=True)
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    with Trace() as tr:
        out = ops.sum(ops.mul(fft2c(x), g))
    backward(tr, out)
    # L = Re<conj(g), F x>, so dL/dx = F^H conj(g)
    np.testing.assert_allclose(x.grad, ifft2c(np.conj(g)).data, atol=1e-13)


# ---------------------------------------------------------------- softmax & friends

def test_softmax_constant_row():
    np.testing.assert_allclose(ops.softmax(np.full(4, 3.0)).data, 0.25)


def test_softmax_no_overflow():
    out = ops.softmax(np.array([1000.0, 0.0])).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-300)


def test_softmax_gradient_5_vector():
    x = Tensor(rng.standard_normal(5), requires_grad=True)
    w = rng.standard_normal(5)
    res = directional_check(lambda: ops.sum(ops.mul(ops.softmax(x), w)), [x], n_dirs=5)
    assert max_rel_err(res) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=9))
def test_softmax_rows_sum_to_one(values):
    out = ops.softmax(np.array(values)).data
    assert abs(out.sum() - 1.0) < 1e-12
    assert np.all(out >= 0)


def test_relu_and_magnitude():
    np.testing.assert_array_equal(ops.relu(np.array([-1.0, 2.0])).data, [0.0, 2.0])
    assert ops.magnitude(np.array(3 + 4j)).data == 5.0


def test_magnitude_subgradient_at_zero():
    z = Tensor(np.array([0j, 3 + 4j]), requires_grad=True)
    with Trace() as tr:
        out = ops.sum(ops.magnitude(z))
    backward(tr, out)
    np.testing.assert_allclose(z.grad, [0.0, 0.6 + 0.8j])


def test_matmul_triple_loop_oracle():
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    assert np.abs(ops.matmul(a, b).data - matmul_loops(a, b)).max() < 1e-13
    ac = a + 1j * rng.standard_normal((3, 4))
    assert np.abs(ops.matmul(ac, b).data - matmul_loops(ac, b)).max() < 1e-13


def test_shape_errors():
    with pytest.raises(ShapeError):
        ops.add(np.zeros((2, 3)), np.zeros((4, 3)))
    with pytest.raises(ShapeError):
        ops.matmul(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        ops.concat_channels([np.zeros((1, 2, 3, 3)), np.zeros((1, 2, 4, 3))])


def test_two_channel_round_trip():
    z = rng.standard_normal((2, 3, 4)) + 1j * rng.standard_normal((2, 3, 4))
    two = ops.two_channel_from_complex(z)
    assert two.shape == (2, 2, 3, 4)
    np.testing.assert_array_equal(two.data[:, 0], z.real)
    np.testing.assert_array_equal(ops.complex_from_two_channel(two).data, z)


# ---------------------------------------------------------------- backward

def test_backward_sum_gives_ones():
    w = Parameter("w", rng.standard_normal((3, 2)))
    with Trace() as tr:
        loss = ops.sum(w)
    backward(tr, loss)
    np.testing.assert_array_equal(w.grad, np.ones((3, 2)))


def test_backward_half_square_gives_w():
    w = Parameter("w", rng.standard_normal(5))
    with Trace() as tr:
        loss = ops.scale(ops.sum(ops.mul(w, w)), 0.5)
    backward(tr, loss)
    np.testing.assert_allclose(w.grad, w.data, rtol=1e-15)


def test_backward_rejects_non_scalar():
    w = Parameter("w", np.ones(3))
    with Trace() as tr:
        out = ops.mul(w, 2.0)
    with pytest.raises(ValueError):
        backward(tr, out)


def test_unreached_parameter_keeps_zero_grad():
    store = ParamStore()
    a = store.add("a", np.ones(2))
    b = store.add("b", np.ones(2))
    store.zero_grad()
    with Trace() as tr:
        loss = ops.sum(ops.mul(a, 3.0))
    backward(tr, loss)
    np.testing.assert_array_equal(a.grad, [3.0, 3.0])
    np.testing.assert_array_equal(b.grad, [0.0, 0.0])


def test_gradients_accumulate_over_reuse():
    w = Parameter("w", np.array([2.0]))
    with Trace() as tr:
        loss = ops.sum(ops.add(ops.mul(w, w), w))
    backward(tr, loss)
    np.testing.assert_allclose(w.grad, [5.0])


def test_untraced_ops_record_nothing():
    w = Parameter("w", np.ones(3))
    with Trace() as tr:
        ops.relu(np.ones(3))
    assert tr.records == []
    with Trace() as tr:
        ops.relu(w)
    assert len(tr.records) == 1


def test_trace_determinism_bit_identical():
    def run():
        r = np.random.default_rng(7)
        w = Parameter("w", r.standard_normal((4, 3, 3, 3)))
        x = r.standard_normal((2, 3, 6, 6))
        with Trace() as tr:
            loss = ops.sum(ops.sigmoid(conv2d(x, w, dilation=2)))
        backward(tr, loss)
        return w.grad

    assert run().tobytes() == run().tobytes()


def test_param_store_duplicate_name():
    store = ParamStore()
    store.add("w", np.ones(2))
    with pytest.raises(KeyError):
        store.add("w", np.ones(2))


def test_param_store_state_dict_validation():
    store = ParamStore()
    store.add("w", np.ones((2, 2)))
    with pytest.raises(ValueError):
        store.load_state_dict({"w": np.ones(3)})
    with pytest.raises(KeyError):
        store.load_state_dict({})


def test_count_ops_tallies_conv_macs():
    with count_ops() as c:
        conv2d(np.zeros((2, 3, 4, 5)), np.zeros((6, 3, 3, 3)))
    assert c["conv"] == 2 * 6 * 4 * 5 * 3 * 9


# ---------------------------------------------------------------- finite differences per op

def test_every_op_passes_directional_check():
    from eamri.harness.checks import OP_TOL, run_op_checks

    results = run_op_checks(seed=3)
    bad = [(r.name, r.rel_err) for r in results if r.rel_err >= OP_TOL]
    assert not bad


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.sampled_from([1, 2, 3]))
def test_conv_gradient_property(seed, dilation, cin):
    r = np.random.default_rng(seed)
    x = Tensor(r.standard_normal((1, cin, 5, 6)), requires_grad=True)
    w = Tensor(r.standard_normal((2, cin, 3, 3)), requires_grad=True)
    probe = r.standard_normal((1, 2, 5, 6))
    res = directional_check(lambda: ops.sum(ops.mul(conv2d(x, w, dilation=dilation), probe)),
                            [x, w], seed=seed)
    assert max_rel_err(res) < 1e-5
