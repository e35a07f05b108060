"""Parameterized layers built from the functional ops.

Every layer is constructed from a :class:`LayerSpec`, the same record the
architecture analyzer consumes, so parameter shapes can never drift between
the live network and the static analysis.

Weights and biases are initialized uniformly in ``+-1/sqrt(fan_in)`` with
``fan_in = channels_along_axis0 * prod(kernel)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, Tuple

import numpy as np

from . import ops
from .tensor import Tensor


@dataclass(frozen=True)
class LayerSpec:
    """Static description of one primitive layer."""

    name: str
    kind: str  # conv2d | conv3d | tconv3d | inorm | lrelu
    cin: int = 0
    cout: int = 0
    kernel: Tuple[int, ...] = ()
    stride: Tuple[int, ...] = ()
    pad: Tuple[int, ...] = ()

    @property
    def param_count(self) -> int:
        if self.kind in ("conv2d", "conv3d", "tconv3d"):
            return self.cout * self.cin * int(np.prod(self.kernel)) + self.cout
        if self.kind == "inorm":
            return 2 * self.cout
        return 0

    def out_spatial(self, spatial: Tuple[int, ...]) -> Tuple[int, ...]:
        """Output spatial extents for the given input extents."""
        if self.kind in ("conv2d", "conv3d"):
            return tuple((n + 2 * p - k) // s + 1 for n, k, s, p in
                         zip(spatial, self.kernel, self.stride, self.pad))
        if self.kind == "tconv3d":
            return tuple(s * (n - 1) + k - 2 * p for n, k, s, p in
                         zip(spatial, self.kernel, self.stride, self.pad))
        return spatial


def conv_spec(name, cin, cout, kernel, stride, pad, kind) -> LayerSpec:
    nd = 2 if kind == "conv2d" else 3
    as_tuple = lambda v: tuple(v) if isinstance(v, (tuple, list)) else (v,) * nd
    return LayerSpec(name, kind, cin, cout, as_tuple(kernel), as_tuple(stride),
                     as_tuple(pad))


def norm_spec(name, channels) -> LayerSpec:
    return LayerSpec(name, "inorm", cin=channels, cout=channels)


def act_spec(name) -> LayerSpec:
    return LayerSpec(name, "lrelu")


class ConvLayer:
    """conv2d/conv3d/tconv3d with owned weight and bias tensors."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator,
                 dtype=np.float32):
        self.spec = spec
        if spec.kind == "tconv3d":
            w_shape = (spec.cin, spec.cout) + spec.kernel
        else:
            w_shape = (spec.cout, spec.cin) + spec.kernel
        fan_in = spec.cin * int(np.prod(spec.kernel))
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = Tensor(rng.uniform(-bound, bound, w_shape),
                             requires_grad=True, dtype=dtype)
        self.bias = Tensor(rng.uniform(-bound, bound, (spec.cout,)),
                           requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        s = self.spec
        if s.kind == "conv2d":
            return ops.conv2d(x, self.weight, self.bias, s.stride, s.pad)
        if s.kind == "conv3d":
            return ops.conv3d(x, self.weight, self.bias, s.stride, s.pad)
        return ops.transposed_conv3d(x, self.weight, self.bias, s.stride, s.pad)

    def params(self) -> Iterator[Tuple[str, Tensor]]:
        yield f"{self.spec.name}.weight", self.weight
        yield f"{self.spec.name}.bias", self.bias


class InstanceNormLayer:
    def __init__(self, spec: LayerSpec, eps: float, dtype=np.float32):
        self.spec = spec
        self.eps = eps
        self.gamma = Tensor(np.ones(spec.cout), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(spec.cout), requires_grad=True, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.instance_norm(x, self.gamma, self.beta, self.eps)

    def params(self) -> Iterator[Tuple[str, Tensor]]:
        yield f"{self.spec.name}.gamma", self.gamma
        yield f"{self.spec.name}.beta", self.beta


def build_layer(spec: LayerSpec, rng, eps: float, dtype=np.float32):
    if spec.kind in ("conv2d", "conv3d", "tconv3d"):
        return ConvLayer(spec, rng, dtype)
    if spec.kind == "inorm":
        return InstanceNormLayer(spec, eps, dtype)
    raise ValueError(f"no parameters to build for {spec.kind}")


def collect_params(layers: Dict[str, object]) -> Dict[str, Tensor]:
    out: Dict[str, Tensor] = {}
    for layer in layers.values():
        for name, tensor in layer.params():
            if name in out:
                raise ValueError(f"duplicate parameter name {name}")
            out[name] = tensor
    return out
