import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eamri import edge
from eamri.edge import (
    EpnNet,
    Msrb,
    canny_edges,
    edge_operator,
    epn_forward,
    msrb_forward,
    sobel_edges,
    sobel_magnitude,
)
from eamri.harness import PhantomSpec, generate_phantom
from eamri.tensor import ParamStore, ShapeError, Tensor, Trace, backward, directional_check, ops
from eamri.tensor.gradcheck import max_rel_err
from eamri.training import AdamState, adam_step
from oracles import sobel_loops

rng = np.random.default_rng(7)


def step_image(h=8, w=8):
    img = np.zeros((h, w))
    img[:, w // 2:] = 1.0
    return img


# ---------------------------------------------------------------- Sobel

def test_sobel_constant_image_is_zero():
    assert not sobel_edges(np.full((6, 7), 3.5)).any()


def test_sobel_vertical_step():
    e = sobel_edges(step_image())
    # the response straddles the step (columns 3 and 4) and is zero elsewhere
    assert np.all(e[:, 3:5] == 1.0)
    assert not e[:, :3].any() and not e[:, 5:].any()


def test_sobel_matches_loop_oracle():
    img = rng.random((8, 8))
    assert np.abs(sobel_magnitude(img) - sobel_loops(img)).max() < 1e-12
    ref = sobel_loops(img)
    assert np.abs(sobel_edges(img) - ref / ref.max()).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sobel_range_and_translation_equivariance(seed):
    r = np.random.default_rng(seed)
    img = r.random((10, 10))
    e = sobel_edges(img)
    assert e.min() >= 0 and e.max() <= 1
    shifted = np.roll(img, 1, axis=1)
    a, b = sobel_magnitude(img), sobel_magnitude(shifted)
    # interior pixels away from the wrap and the borders
    np.testing.assert_allclose(b[1:-1, 3:-1], a[1:-1, 2:-2], atol=1e-12)


def test_sobel_batched_normalises_per_image():
    imgs = np.stack([step_image(), 5 * step_image()])
    e = sobel_edges(imgs)
    np.testing.assert_allclose(e[0], e[1])


# ---------------------------------------------------------------- Canny

def test_canny_constant_is_zero():
    assert not canny_edges(np.ones((8, 8))).any()


def test_canny_step_is_single_pixel_line():
    e = canny_edges(step_image(10, 10))
    cols = np.flatnonzero(e.any(axis=0))
    assert len(cols) == 1
    assert e[:, cols[0]].all()
    assert set(np.unique(e)) <= {0.0, 1.0}


def test_canny_count_not_above_sobel_on_phantom():
    img = np.abs(generate_phantom(PhantomSpec(32, 6, seed=3)))
    low = 0.1
    assert canny_edges(img, low, 0.3).sum() <= (sobel_edges(img) >= low).sum()


def test_canny_threshold_order():
    with pytest.raises(ValueError):
        canny_edges(np.zeros((4, 4)), 0.5, 0.5)


def test_edge_operator_lookup():
    assert edge_operator("sobel") is sobel_edges
    assert edge_operator("canny") is canny_edges
    with pytest.raises(ValueError):
        edge_operator("prewitt")


# ---------------------------------------------------------------- MSRB / EPN

def make_msrb(c=4, seed=0):
    store = ParamStore()
    block = Msrb(store, "m", c, np.random.default_rng(seed))
    return block, store


def test_msrb_zero_weights_is_identity():
    block, store = make_msrb()
    for _, p in store.items():
        p.data = np.zeros(p.shape)
    x = rng.standard_normal((2, 4, 5, 7))
    np.testing.assert_array_equal(msrb_forward(Tensor(x), block).data, x)


@pytest.mark.parametrize("hw", [(3, 3), (6, 5), (9, 16)])
def test_msrb_shape(hw):
    block, _ = make_msrb()
    assert msrb_forward(Tensor(rng.standard_normal((1, 4, *hw))), block).shape == (1, 4, *hw)


def test_msrb_rejects_wrong_channels():
    block, _ = make_msrb()
    with pytest.raises(ShapeError):
        msrb_forward(Tensor(np.zeros((1, 3, 5, 5))), block)


def test_msrb_gradient_check():
    block, store = make_msrb(seed=2)
    r = np.random.default_rng(2)
    for _, p in store.items():
        p.data = 0.4 * r.standard_normal(p.shape)
    x = Tensor(r.standard_normal((1, 4, 6, 6)), requires_grad=True)
    probe = r.standard_normal((1, 4, 6, 6))
    tensors = [x] + [p for _, p in store.items()]
    res = directional_check(lambda: ops.sum(ops.mul(msrb_forward(x, block), probe)), tensors)
    assert max_rel_err(res) < 1e-5


def make_epn(c=8, seed=0):
    store = ParamStore()
    return EpnNet(store, "epn", c, 3, np.random.default_rng(seed)), store


def test_epn_structure_and_shape():
    epn, store = make_epn()
    assert len(epn.msrbs) == 3
    assert store["epn.fuse.weight"].shape == (8, 24, 1, 1)
    out = epn_forward(Tensor(rng.standard_normal((3, 2, 9, 7))), epn)
    assert out.shape == (3, 1, 9, 7)
    assert out.data.min() >= 0 and out.data.max() <= 1


def test_epn_zero_tail_gives_half():
    epn, _ = make_epn()
    epn.tail.weight.data[...] = 0
    epn.tail.bias.data[...] = 0
    out = epn_forward(Tensor(np.zeros((1, 2, 6, 6))), epn)
    np.testing.assert_array_equal(out.data, 0.5)


def test_epn_counts_calls():
    epn, _ = make_epn()
    before = edge.calls["epn_forward"]
    epn_forward(Tensor(np.zeros((1, 2, 4, 4))), epn)
    assert edge.calls["epn_forward"] == before + 1


def test_epn_rejects_wrong_input():
    epn, _ = make_epn()
    with pytest.raises(ShapeError):
        epn_forward(Tensor(np.zeros((1, 1, 4, 4))), epn)


def test_epn_supervised_fit_halves_edge_loss():
    images = [generate_phantom(PhantomSpec(16, 5, seed=s)) for s in range(10)]
    x = ops.two_channel_from_complex(np.stack(images)).data
    target = sobel_edges(np.abs(np.stack(images)))[:, None]
    epn, store = make_epn(c=8, seed=1)
    state = AdamState(lr=2e-3)

    def loss_value():
        return ops.l1_mean(epn_forward(Tensor(x), epn), target).item()

    initial = loss_value()
    for _ in range(200):
        store.zero_grad()
        with Trace() as tr:
            loss = ops.l1_mean(epn_forward(Tensor(x), epn), target)
        backward(tr, loss)
        adam_step(store, state)
    assert loss_value() < 0.5 * initial
