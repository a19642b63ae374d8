import numpy as np
import pytest
from hypothesis import given, strategies as st

from partgrad.gradmaps import (
    ZeroMapError, channel_gradient_map, class_gradient_map,
    nearest_rank_quantile, normalize_map, threshold_map,
)
from partgrad.net import (
    Conv2d, Dense, NetError, Network, build_reference_net,
)


def test_single_conv_all_ones_filter_coverage():
    conv = Conv2d(1, 1, 3, pad=0)
    conv.weight[:] = 1.0
    net = Network([conv], (1, 6, 6))
    x = np.zeros((1, 6, 6))
    gmap = channel_gradient_map(net, x, 0, 0)
    # interior pixels are covered by all 9 filter taps, corners by fewer
    assert gmap[2, 2] == 9.0
    assert gmap[0, 0] == 1.0
    assert gmap[0, 2] == 3.0


def test_channel_map_equals_per_element_sum():
    net = build_reference_net((3, 12, 12), 3, seed=21)
    x = np.random.default_rng(22).normal(size=(3, 12, 12))
    b = net.last_pool_index
    c = 4
    gmap = channel_gradient_map(net, x, b, c)
    sc = net.channel_seed(b, c)
    total = np.zeros((3, 12, 12))
    for j in np.nonzero(sc)[0]:
        e = np.zeros_like(sc)
        e[j] = 1.0
        total += net.backward_seeded(x, b, e)
    assert np.allclose(gmap, np.abs(total).max(axis=0), rtol=1e-10)


def test_zero_weights_give_zero_map():
    net = build_reference_net((3, 12, 12), 3, seed=0)
    for layer in net.layers:
        for p in layer.params:
            p[:] = 0.0
    x = np.random.default_rng(1).normal(size=(3, 12, 12))
    gmap = channel_gradient_map(net, x, net.last_pool_index, 0)
    assert np.all(gmap == 0.0)


def test_channel_out_of_range():
    net = build_reference_net((3, 12, 12), 3)
    with pytest.raises(NetError):
        channel_gradient_map(net, np.zeros((3, 12, 12)), net.last_pool_index, 99)


def test_class_map_dense_identity_selects_row():
    layer = Dense(4, 4)
    layer.weight[:] = np.eye(4)
    net = Network([layer], (1, 2, 2))
    gmap = class_gradient_map(net, np.zeros((1, 2, 2)), class_id=2)
    expected = np.zeros((2, 2))
    expected[1, 0] = 1.0  # flat element 2 of the 2x2 input
    assert np.array_equal(gmap, expected)


def test_class_map_matches_finite_differences():
    net = build_reference_net((3, 10, 10), 3, seed=30)
    rng = np.random.default_rng(31)
    x = rng.normal(size=(3, 10, 10))
    cid = 1
    seed = np.zeros(3)
    seed[cid] = 1.0
    grad = net.backward_seeded(x, len(net.layers) - 1, seed)
    h = 1e-3
    for ci in rng.choice(x.size, 10, replace=False):
        xp, xm = x.reshape(-1).copy(), x.reshape(-1).copy()
        xp[ci] += h
        xm[ci] -= h
        fd = (net.scores(xp.reshape(x.shape))[cid]
              - net.scores(xm.reshape(x.shape))[cid]) / (2 * h)
        an = grad.reshape(-1)[ci]
        assert abs(fd - an) <= 1e-4 * max(abs(an), abs(fd), 1e-6)


def test_class_map_defaults_to_winning_class():
    net = build_reference_net((3, 10, 10), 3, seed=32)
    x = np.random.default_rng(33).normal(size=(3, 10, 10))
    winner = int(np.argmax(net.scores(x)))
    assert np.array_equal(class_gradient_map(net, x),
                          class_gradient_map(net, x, class_id=winner))


def test_class_map_invalid_class():
    net = build_reference_net((3, 10, 10), 3)
    with pytest.raises(NetError):
        class_gradient_map(net, np.zeros((3, 10, 10)), class_id=3)


def test_threshold_constant_map_all_ones():
    mask = threshold_map(np.full((4, 5), 2.5), 0.95)
    assert mask.all()


def test_threshold_top6_of_100_distinct():
    values = np.arange(100, dtype=float).reshape(10, 10)
    mask = threshold_map(values, 0.95)
    assert mask.sum() == 6
    assert values[mask].min() == 94.0


def test_threshold_median_of_four():
    mask = threshold_map(np.array([[1.0, 2.0], [3.0, 4.0]]), 0.5)
    assert mask.sum() == 3
    assert not mask[0, 0]


@pytest.mark.parametrize("q", [0.0, 1.0, -0.2, 1.5])
def test_threshold_rejects_bad_quantile(q):
    with pytest.raises(NetError):
        threshold_map(np.ones((2, 2)), q)


@given(st.lists(st.floats(min_value=0.0, max_value=1e6,
                          allow_nan=False), min_size=2, max_size=50,
                unique=True),
       st.floats(min_value=0.01, max_value=0.99))
def test_threshold_mask_size_bounds(values, q):
    gmap = np.array(values).reshape(1, -1)
    mask = threshold_map(gmap, q)
    assert 1 <= mask.sum() <= gmap.size


def test_nearest_rank_quantile_direct():
    assert nearest_rank_quantile(np.array([1.0, 2.0, 3.0, 4.0]), 0.5) == 2.0


def test_normalize_simple():
    out = normalize_map(np.array([[1.0, 3.0]]))
    assert np.allclose(out, [[0.25, 0.75]], atol=1e-15)


def test_normalize_idempotent():
    gmap = np.random.default_rng(0).uniform(size=(6, 6))
    once = normalize_map(gmap)
    twice = normalize_map(once)
    assert np.abs(once - twice).max() < 1e-12
    assert abs(once.sum() - 1.0) < 1e-12


def test_normalize_zero_map_signals():
    with pytest.raises(ZeroMapError):
        normalize_map(np.zeros((3, 3)))


def test_map_invariant_to_input_scaling_with_margin():
    net = build_reference_net((3, 12, 12), 3, seed=40)
    rng = np.random.default_rng(41)
    # inputs with margin: keep pre-activations away from relu boundaries
    x = rng.uniform(0.5, 1.0, size=(3, 12, 12))
    b = net.last_pool_index
    base = channel_gradient_map(net, x, b, 2)
    for alpha in (0.5, 2.0):
        scaled = channel_gradient_map(net, alpha * x, b, 2)
        if np.allclose(net.forward(x)[1] > 0, net.forward(alpha * x)[1] > 0):
            assert np.allclose(scaled, base, rtol=1e-9)
