"""The stereo network: embedding, bottleneck matching, hourglass regularization.

Input is a rectified pair of (3, H, W) images; output is a cost volume of
shape (D/2, H, W) whose slice k holds the cost of assigning disparity 2k
to each left-image pixel.  Matching weights are shared across disparities
and the hourglass is fully convolutional along the disparity axis, so the
disparity range at inference may differ from the one used in training.

The per-layer geometry lives in spec lists (:func:`embedding_specs` and
friends); both the live network and the architecture analyzer are built
from those lists.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import ops
from .config import NetConfig
from .layers import (LayerSpec, act_spec, build_layer, collect_params,
                     conv_spec, norm_spec)
from .tensor import DimensionError, Tensor


def head_channels(base: int) -> Tuple[int, int]:
    """Channel widths of the two upsampling head stages."""
    return max(base // 8, 2), 2


def embedding_specs(cfg: NetConfig) -> List[LayerSpec]:
    c = cfg.embed_channels
    specs = [
        conv_spec("embedding.conv1", 3, c, 5, 2, 2, "conv2d"),
        norm_spec("embedding.norm1", c),
        act_spec("embedding.act1"),
        conv_spec("embedding.conv2", c, c, 3, 2, 1, "conv2d"),
        norm_spec("embedding.norm2", c),
        act_spec("embedding.act2"),
    ]
    for i in (1, 2):
        p = f"embedding.res{i}"
        specs += [
            conv_spec(f"{p}.conv_a", c, c, 3, 1, 1, "conv2d"),
            norm_spec(f"{p}.norm_a", c),
            act_spec(f"{p}.act_a"),
            conv_spec(f"{p}.conv_b", c, c, 3, 1, 1, "conv2d"),
            norm_spec(f"{p}.norm_b", c),
            act_spec(f"{p}.act_out"),
        ]
    return specs


def matching_specs(cfg: NetConfig) -> List[LayerSpec]:
    c2 = 2 * cfg.embed_channels
    hidden = cfg.matching_hidden_channels
    return [
        conv_spec("matching.reduce", c2, hidden, 1, 1, 0, "conv2d"),
        norm_spec("matching.norm", hidden),
        act_spec("matching.act"),
        conv_spec("matching.project", hidden, cfg.signature_channels, 1, 1, 0,
                  "conv2d"),
    ]


def hourglass_specs(cfg: NetConfig) -> List[LayerSpec]:
    base = cfg.hourglass_base_channels
    h1, h2 = head_channels(base)
    specs = [
        conv_spec("regularization.stem.conv", cfg.signature_channels, base,
                  3, 1, 1, "conv3d"),
        norm_spec("regularization.stem.norm", base),
        act_spec("regularization.stem.act"),
    ]
    ch = base
    for i in range(1, cfg.hourglass_levels + 1):
        specs += [
            conv_spec(f"regularization.down{i}.conv", ch, 2 * ch, 3, 2, 1,
                      "conv3d"),
            norm_spec(f"regularization.down{i}.norm", 2 * ch),
            act_spec(f"regularization.down{i}.act"),
        ]
        ch *= 2
    for i in range(cfg.hourglass_levels, 0, -1):
        specs += [
            conv_spec(f"regularization.up{i}.tconv", ch, ch // 2, 4, 2, 1,
                      "tconv3d"),
            norm_spec(f"regularization.up{i}.norm", ch // 2),
            act_spec(f"regularization.up{i}.act"),
        ]
        ch //= 2
    specs += [
        conv_spec("regularization.head1.tconv", base, h1, 4, (2, 2, 2), 1,
                  "tconv3d"),
        norm_spec("regularization.head1.norm", h1),
        act_spec("regularization.head1.act"),
        conv_spec("regularization.head2.tconv", h1, h2, (3, 4, 4), (1, 2, 2),
                  (1, 1, 1), "tconv3d"),
        norm_spec("regularization.head2.norm", h2),
        act_spec("regularization.head2.act"),
        conv_spec("regularization.final.conv", h2, 1, 3, 1, 1, "conv3d"),
    ]
    return specs


def all_specs(cfg: NetConfig) -> List[LayerSpec]:
    return embedding_specs(cfg) + matching_specs(cfg) + hourglass_specs(cfg)


@dataclass
class CostTensor:
    """Matching cost volume; slice k is the cost of disparity 2k pixels."""

    values: Tensor  # (D/2, H, W)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.values.shape[0], dtype=np.float64) * 2.0

    grid_step = 2.0


class _Act:
    def __init__(self, slope: float):
        self.slope = slope

    def __call__(self, x: Tensor) -> Tensor:
        return ops.leaky_relu(x, self.slope)

    def params(self):
        return iter(())


class PdsNetwork:
    """Named parameter collection for the three submodules."""

    def __init__(self, cfg: NetConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.layers: Dict[str, object] = {}
        for spec in all_specs(cfg):
            if spec.kind == "lrelu":
                self.layers[spec.name] = _Act(cfg.lrelu_slope)
            else:
                self.layers[spec.name] = build_layer(spec, rng, cfg.norm_eps,
                                                     dtype)

    # -- parameter plumbing -------------------------------------------------

    def named_parameters(self) -> Dict[str, Tensor]:
        return collect_params(self.layers)

    def parameter_count(self) -> int:
        return sum(t.size for t in self.named_parameters().values())

    def zero_grad(self) -> None:
        for t in self.named_parameters().values():
            t.zero_grad()

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} "
                           f"extra={sorted(extra)}")
        for name, tensor in params.items():
            arr = np.asarray(state[name])
            if arr.shape != tensor.shape:
                raise DimensionError(
                    f"{name}: expected shape {tensor.shape}, got {arr.shape}")
            tensor.data = np.ascontiguousarray(arr, dtype=tensor.dtype)

    # -- submodules ----------------------------------------------------------

    def _chain(self, names, x: Tensor, trace=None) -> Tensor:
        for name in names:
            x = self.layers[name](x)
            if trace is not None:
                trace.append((name, x.shape))
        return x

    def embed(self, image: Tensor, trace=None) -> Tensor:
        """(3, H, W) -> (embed_channels, H/4, W/4); weights shared L/R."""
        _, h, w = image.shape
        if h % 4 or w % 4:
            raise DimensionError(
                f"image extents must be multiples of 4, got {h}x{w}")
        x = self._chain(["embedding.conv1", "embedding.norm1", "embedding.act1",
                         "embedding.conv2", "embedding.norm2", "embedding.act2"],
                        image, trace)
        for i in (1, 2):
            p = f"embedding.res{i}"
            h_branch = self._chain([f"{p}.conv_a", f"{p}.norm_a", f"{p}.act_a",
                                    f"{p}.conv_b", f"{p}.norm_b"], x, trace)
            x = self.layers[f"{p}.act_out"](x + h_branch)
            if trace is not None:
                trace.append((f"{p}.act_out", x.shape))
        return x

    def match(self, left_desc: Tensor, right_desc_shifted: Tensor,
              trace=None) -> Tensor:
        """Compress concatenated descriptors into a matching signature."""
        if left_desc.shape != right_desc_shifted.shape:
            raise DimensionError(
                f"descriptor shapes differ: {left_desc.shape} vs "
                f"{right_desc_shifted.shape}")
        x = ops.concat([left_desc, right_desc_shifted], axis=0)
        return self._chain(["matching.reduce", "matching.norm", "matching.act",
                            "matching.project"], x, trace)

    def regularize(self, signatures: Tensor, trace=None) -> CostTensor:
        """(sig, D/4, H/4, W/4) -> cost volume (D/2, H, W)."""
        levels = self.cfg.hourglass_levels
        x = self._chain(["regularization.stem.conv", "regularization.stem.norm",
                         "regularization.stem.act"], signatures, trace)
        saved = [x]
        for i in range(1, levels + 1):
            x = self._chain([f"regularization.down{i}.conv",
                             f"regularization.down{i}.norm",
                             f"regularization.down{i}.act"], x, trace)
            saved.append(x)
        for i in range(levels, 0, -1):
            shortcut = saved[i - 1]
            x = self.layers[f"regularization.up{i}.tconv"](x)
            if trace is not None:
                trace.append((f"regularization.up{i}.tconv", x.shape))
            x = self.layers[f"regularization.up{i}.norm"](x)
            if trace is not None:
                trace.append((f"regularization.up{i}.norm", x.shape))
            x = ops.crop_to(x, shortcut.shape[1:])
            x = self.layers[f"regularization.up{i}.act"](x + shortcut)
            if trace is not None:
                trace.append((f"regularization.up{i}.act", x.shape))
        x = self._chain(["regularization.head1.tconv", "regularization.head1.norm",
                         "regularization.head1.act", "regularization.head2.tconv",
                         "regularization.head2.norm", "regularization.head2.act",
                         "regularization.final.conv"], x, trace)
        return CostTensor(x[0])

    def signature_volume(self, left: Tensor, right: Tensor,
                         d_run: Optional[int] = None, trace=None) -> Tensor:
        """Embed both images and stack matching signatures over disparities."""
        d_run = self.cfg.max_disparity if d_run is None else d_run
        if d_run % 4 or d_run < 4:
            raise DimensionError(
                f"disparity range must be a positive multiple of 4, got {d_run}")
        if left.shape != right.shape:
            raise DimensionError(
                f"stereo pair shapes differ: {left.shape} vs {right.shape}")
        left_desc = self.embed(left, trace)
        right_desc = self.embed(right, trace)
        signatures = []
        for d_q in range(d_run // 4):
            shifted = ops.shift_right(right_desc, d_q)
            signatures.append(self.match(left_desc, shifted, trace))
        volume = ops.stack(signatures, axis=1)
        if trace is not None:
            trace.append(("matching.signature_volume", volume.shape))
        return volume

    def forward(self, left: Tensor, right: Tensor,
                d_run: Optional[int] = None, trace=None) -> CostTensor:
        volume = self.signature_volume(left, right, d_run, trace)
        return self.regularize(volume, trace)


def shift_right_descriptor(desc: Tensor, d_q: int) -> Tensor:
    """Shift a quarter-resolution descriptor by d_q columns, zero filling.

    One step corresponds to 4*d_q full-resolution disparity pixels.
    """
    return ops.shift_right(desc, d_q)
