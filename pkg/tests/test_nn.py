import numpy as np
import pytest

from acoustopt.errors import ConfigurationError, UsageError
from acoustopt.nn import engine as E
from acoustopt.nn import (
    BenchMLP,
    Tensor,
    build_unet,
    design_to_nn,
    he_init,
    load_checkpoint,
    nn_to_design,
    parameter,
    save_checkpoint,
)


def fd_check(fn, tensors, rng, n_probe=12, h=1e-6, rtol=1e-4):
    """Compare engine gradients of ``sum(w * fn())`` with central differences.

    Relative error ``|g - fd| / max(|g|, |fd|, floor)``; the floor (1e-3 of the
    largest gradient entry) keeps structurally zero gradients, e.g. a bias in
    front of a batchnorm, from being judged on round-off alone.
    """
    out = fn()
    w = rng.standard_normal(out.shape)
    for t in tensors:
        t.grad = None
    E.weighted_sum(fn(), w).backward()
    worst = 0.0
    floor = 1e-3 * max(max(np.max(np.abs(t.grad)) for t in tensors), 1e-300)
    for t in tensors:
        g = t.grad
        flat = t.value.reshape(-1)
        idx = rng.choice(flat.size, size=min(n_probe, flat.size), replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            fp = np.sum(w * fn().value)
            flat[i] = old - h
            fm = np.sum(w * fn().value)
            flat[i] = old
            fd = (fp - fm) / (2 * h)
            gi = g.reshape(-1)[i]
            worst = max(worst, abs(gi - fd) / max(abs(fd), abs(gi), floor))
    assert worst <= rtol, worst
    return worst


def test_conv2d_gradients(rng):
    x = parameter(rng.standard_normal((2, 3, 6, 5)))
    w = parameter(rng.standard_normal((4, 3, 5, 5)))
    b = parameter(rng.standard_normal(4))
    fd_check(lambda: E.conv2d(x, w, b), [x, w, b], rng)


def test_conv2d_matches_direct_correlation(rng):
    x = rng.standard_normal((1, 2, 5, 4))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = E.conv2d(Tensor(x), Tensor(w), Tensor(b)).value
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 5, 4))
    for o in range(3):
        for i in range(5):
            for j in range(4):
                ref[0, o, i, j] = np.sum(xp[0, :, i:i + 3, j:j + 3] * w[o]) + b[o]
    np.testing.assert_allclose(out, ref, rtol=1e-13, atol=1e-13)


def test_batchnorm_gradients(rng):
    x = parameter(rng.standard_normal((2, 3, 4, 4)) * 2 + 1)
    s = parameter(rng.standard_normal(3))
    t = parameter(rng.standard_normal(3))
    fd_check(lambda: E.batchnorm(x, s, t), [x, s, t], rng)


def test_batchnorm_normalizes(rng):
    x = Tensor(rng.standard_normal((1, 2, 8, 8)) * 5 + 3)
    y = E.batchnorm(x, Tensor(np.ones(2)), Tensor(np.zeros(2))).value
    np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=(0, 2, 3)), 1.0, rtol=1e-3)


@pytest.mark.parametrize("op", [E.leaky_relu, E.sigmoid, E.maxpool2, E.upsample2])
def test_pointwise_and_resampling_gradients(op, rng):
    x = parameter(rng.standard_normal((1, 2, 4, 6)))
    fd_check(lambda: op(x), [x], rng)


def test_maxpool_first_index_wins_ties():
    x = parameter(np.ones((1, 1, 2, 2)))
    E.tensor_sum(E.maxpool2(x)).backward()
    np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_concat_dense_mse_gradients(rng):
    a = parameter(rng.standard_normal((1, 2, 3, 3)))
    b = parameter(rng.standard_normal((1, 1, 3, 3)))
    fd_check(lambda: E.concat([a, b]), [a, b], rng)
    x = parameter(rng.standard_normal((3, 4)))
    w = parameter(rng.standard_normal((5, 4)))
    bias = parameter(rng.standard_normal(5))
    fd_check(lambda: E.dense(x, w, bias), [x, w, bias], rng)
    target = rng.random((3, 5))
    y = parameter(rng.standard_normal((3, 5)))
    fd_check(lambda: E.mse(y, target), [y], rng)


def test_leaky_relu_slope():
    x = parameter(np.array([-2.0, 3.0]))
    out = E.leaky_relu(x)
    np.testing.assert_allclose(out.value, [-0.02, 3.0])


def test_backward_errors():
    x = parameter(np.ones(3))
    with pytest.raises(UsageError, match="scalar"):
        E.leaky_relu(x).backward()
    loss = E.tensor_sum(x)
    loss.backward()
    with pytest.raises(UsageError, match="consumed"):
        loss.backward()


def test_gradient_accumulates_over_reuse(rng):
    x = parameter(rng.standard_normal(4))
    E.tensor_sum(E.add(x, x)).backward()
    np.testing.assert_allclose(x.grad, 2.0)


def test_unet_gradients_toy_shape(rng):
    net = build_unet((8, 48), seed=3)
    x = Tensor(rng.standard_normal((1, 1, 48, 8)))
    # batchnorm over the 6x1 bottleneck amplifies perturbations enough that
    # larger steps cross leaky-ReLU and max-pool switch points
    fd_check(lambda: net(x), net.params, rng, n_probe=4, h=1e-7)


def test_unet_output_shape_and_range(rng):
    net = build_unet((8, 48), seed=0)
    out = net(design_to_nn(rng.standard_normal((8, 48)))).value
    assert out.shape == (1, 1, 48, 8)
    assert np.all((out > 0) & (out < 1))
    assert nn_to_design(out).shape == (8, 48)


def test_unet_parameter_table():
    net = build_unet((24, 432))
    assert net.n_params == 148806
    counts = [r.n_params for r in net.layer_table() if r.n_params]
    assert counts == [2, 312, 24, 7224, 48, 28848, 96, 57648, 144, 43224, 72, 10812, 26, 326]
    assert net.layer_table()[-1].shape_after == (1, 432, 24)


def test_unet_rejects_indivisible_shape():
    with pytest.raises(ConfigurationError, match="divisible by 8"):
        build_unet((12, 216))


def test_he_init_statistics():
    net = build_unet((24, 432), seed=0)
    w = net.params[26].value  # up3 conv weights, fan_in = 13 * 25
    assert w.std() == pytest.approx(np.sqrt(2 / 325), rel=0.15)
    again = he_init(build_unet((24, 432)), 0)
    np.testing.assert_array_equal(again.get_flat(), net.get_flat())


@pytest.mark.parametrize("width,count", [(25, 327), (50, 652), (100, 1302), (200, 2602), (400, 5202)])
def test_bench_mlp_counts(width, count):
    assert BenchMLP(width, seed=0).n_params == count


def test_bench_mlp_initial_prediction_exact(rng):
    mlp = BenchMLP(100, seed=5, start=(3.0, 3.0))
    assert tuple(mlp.forward().value[0]) == (3.0, 3.0)
    assert tuple(mlp.predict_numpy()) == (3.0, 3.0)
    fd_check(mlp.forward, mlp.params, rng)


def test_checkpoint_roundtrip(tmp_path):
    net = build_unet((8, 48), seed=1)
    path = tmp_path / "net.ckpt"
    save_checkpoint(net, path)
    other = load_checkpoint(build_unet((8, 48)), path)
    np.testing.assert_array_equal(other.get_flat(), net.get_flat())
    with pytest.raises(ConfigurationError):
        load_checkpoint(BenchMLP(25, seed=0), path)
    path.write_bytes(b"garbage")
    with pytest.raises(ConfigurationError):
        load_checkpoint(build_unet((8, 48)), path)
