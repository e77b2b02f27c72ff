"""U-net design generator and the small MLP used on the 2-D benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from . import engine as E
from .engine import Tensor, parameter


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    n_params: int
    shape_after: tuple = ()


class Module:
    """Holds named parameters in a fixed order."""

    def __init__(self):
        self.params: list[Tensor] = []
        self.kinds: list[str] = []

    def _param(self, value, kind, name):
        t = parameter(value, name=name)
        self.params.append(t)
        self.kinds.append(kind)
        return t

    @property
    def n_params(self):
        return int(sum(p.value.size for p in self.params))

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def get_flat(self):
        return np.concatenate([p.value.ravel() for p in self.params])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} values, got {flat.size}")
        i = 0
        for p in self.params:
            n = p.value.size
            p.value = flat[i:i + n].reshape(p.value.shape).copy()
            i += n

    def grad_flat(self):
        return np.concatenate(
            [(p.grad if p.grad is not None else np.zeros_like(p.value)).ravel() for p in self.params]
        )


def he_init(module: Module, seed):
    """Weights ~ N(0, 2/fan_in), biases 0, batchnorm scale 1 and shift 0."""
    rng = np.random.default_rng(seed)
    for p, kind in zip(module.params, module.kinds):
        if kind in ("conv_w", "dense_w"):
            fan_in = int(np.prod(p.value.shape[1:]))
            p.value = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=p.value.shape)
        elif kind == "bn_scale":
            p.value = np.ones_like(p.value)
        else:
            p.value = np.zeros_like(p.value)
    return module


class UNet(Module):
    """Three pooling blocks, a bottleneck and three upsampling blocks with skips.

    Tensors are ``(N, C, H, W)``; a ceiling design of ``n_ceiling`` rows and
    ``nx`` columns is fed as ``H = nx``, ``W = n_ceiling``.
    """

    DOWN = ((1, 12), (12, 24), (24, 48))
    UP = ((72, 24), (36, 12), (13, 1))
    K = 5

    def __init__(self, H, W):
        super().__init__()
        if H % 8 or W % 8:
            raise ConfigurationError(f"U-net input {H}x{W} must be divisible by 8 in both directions")
        self.H, self.W = H, W
        self.blocks = []
        for i, (cin, cout) in enumerate(self.DOWN):
            self.blocks.append(self._block(f"down{i + 1}", cin, cout))
        self.blocks.append(self._block("bottleneck", 48, 48))
        for i, (cin, cout) in enumerate(self.UP):
            self.blocks.append(self._block(f"up{i + 1}", cin, cout))

    def _block(self, name, cin, cout):
        scale = self._param(np.ones(cin), "bn_scale", f"{name}.bn.scale")
        shift = self._param(np.zeros(cin), "bn_shift", f"{name}.bn.shift")
        w = self._param(np.zeros((cout, cin, self.K, self.K)), "conv_w", f"{name}.conv.weight")
        b = self._param(np.zeros(cout), "conv_b", f"{name}.conv.bias")
        return scale, shift, w, b

    @staticmethod
    def _apply(block, x):
        scale, shift, w, b = block
        return E.conv2d(E.batchnorm(x, scale, shift), w, b)

    def forward(self, x):
        x = E.as_tensor(x)
        if x.value.ndim == 2:
            x = Tensor(x.value[None, None])
        if x.shape[2:] != (self.H, self.W):
            raise ConfigurationError(f"U-net built for {self.H}x{self.W}, got input {x.shape}")
        d1 = E.leaky_relu(self._apply(self.blocks[0], E.maxpool2(x)))
        d2 = E.leaky_relu(self._apply(self.blocks[1], E.maxpool2(d1)))
        d3 = self._apply(self.blocks[2], E.maxpool2(d2))
        bott = E.leaky_relu(self._apply(self.blocks[3], d3))
        u1 = E.leaky_relu(self._apply(self.blocks[4], E.concat([E.upsample2(bott), d2])))
        u2 = E.leaky_relu(self._apply(self.blocks[5], E.concat([E.upsample2(u1), d1])))
        return E.sigmoid(self._apply(self.blocks[6], E.concat([E.upsample2(u2), x])))

    __call__ = forward

    def layer_table(self):
        """Rows of (kind, in, out, learnable parameters, shape after layer)."""
        H, W = self.H, self.W
        rows = [LayerSpec("input", 1, 1, 0, (1, H, W))]
        shapes = [(H // 2, W // 2), (H // 4, W // 4), (H // 8, W // 8)]
        for (cin, cout), (h, w) in zip(self.DOWN, shapes):
            rows.append(LayerSpec("maxpool2", cin, cin, 0, (cin, h, w)))
            rows.append(LayerSpec("batchnorm", cin, cin, 2 * cin, (cin, h, w)))
            act = "conv5x5+leaky_relu" if cout != 48 else "conv5x5"
            rows.append(LayerSpec(act, cin, cout, cout * 25 * cin + cout, (cout, h, w)))
        h, w = shapes[-1]
        rows.append(LayerSpec("batchnorm", 48, 48, 96, (48, h, w)))
        rows.append(LayerSpec("conv5x5+leaky_relu", 48, 48, 48 * 25 * 48 + 48, (48, h, w)))
        up_shapes = [(H // 4, W // 4), (H // 2, W // 2), (H, W)]
        for (cin, cout), (h, w) in zip(self.UP, up_shapes):
            rows.append(LayerSpec("upsample2+concat", cin, cin, 0, (cin, h, w)))
            rows.append(LayerSpec("batchnorm", cin, cin, 2 * cin, (cin, h, w)))
            act = "conv5x5+sigmoid" if cout == 1 else "conv5x5+leaky_relu"
            rows.append(LayerSpec(act, cin, cout, cout * 25 * cin + cout, (cout, h, w)))
        return rows


def build_unet(design_shape, seed=None):
    """U-net for a ``(n_ceiling, nx)`` design field; He-initialized when ``seed`` is given."""
    n_ceiling, nx = design_shape
    net = UNet(nx, n_ceiling)
    if seed is not None:
        he_init(net, seed)
    return net


def design_to_nn(field):
    """``(n_ceiling, nx)`` field to a ``(1, 1, nx, n_ceiling)`` network tensor."""
    return np.ascontiguousarray(np.asarray(field, dtype=np.float64).T[None, None])


def nn_to_design(arr):
    return np.ascontiguousarray(np.asarray(arr)[0, 0].T)


class BenchMLP(Module):
    """10 fixed random inputs -> one hidden layer -> (x, y) plus a fixed offset.

    The output is ``start + (net(z) - net_0(z))`` with ``net_0`` the prediction at
    initialization, so the initial prediction equals ``start`` bit for bit.
    """

    N_IN = 10

    def __init__(self, width, seed, start=(0.0, 0.0), activation="leaky_relu"):
        super().__init__()
        if width < 1:
            raise ConfigurationError("hidden width must be positive")
        if activation not in ("leaky_relu", "sigmoid"):
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.width = width
        self.activation = activation
        self.w1 = self._param(np.zeros((width, self.N_IN)), "dense_w", "hidden.weight")
        self.b1 = self._param(np.zeros(width), "dense_b", "hidden.bias")
        self.w2 = self._param(np.zeros((2, width)), "dense_w", "out.weight")
        self.b2 = self._param(np.zeros(2), "dense_b", "out.bias")
        rng = np.random.default_rng(seed)
        self.z = rng.uniform(-1.0, 1.0, size=(1, self.N_IN))
        he_init(self, rng.integers(2**63))
        self.start = np.asarray(start, dtype=float)
        self.raw0 = np.zeros(2)
        self.raw0 = self._raw_numpy()

    def forward(self):
        act = E.leaky_relu if self.activation == "leaky_relu" else E.sigmoid
        h = act(E.dense(Tensor(self.z), self.w1, self.b1))
        out = E.add(E.dense(h, self.w2, self.b2), Tensor(-self.raw0[None]))
        return E.add(out, Tensor(self.start[None]))

    def _raw_numpy(self):
        h = self.z @ self.w1.value.T + self.b1.value
        if self.activation == "leaky_relu":
            h = np.where(h > 0, h, E.LEAKY_SLOPE * h)
        else:
            h = 1.0 / (1.0 + np.exp(-h))
        return (h @ self.w2.value.T + self.b2.value)[0]

    def predict_numpy(self):
        """Plain forward without building a graph."""
        return (self._raw_numpy() - self.raw0) + self.start
