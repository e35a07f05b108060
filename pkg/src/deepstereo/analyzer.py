"""Static shape, parameter and activation-memory analysis.

``analyze`` propagates shapes through the same layer specs the live network
is built from, without instantiating any arrays, and simulates sequential
single-stream execution to estimate peak activation memory.

Liveness model (declared):
  * every primitive layer allocates one float32 output (4 bytes/value);
  * a tensor is freed immediately after its last consumer runs;
  * additive shortcut tensors stay live until the merge that consumes them;
  * shortcut merges and trailing crops run in place inside the following
    activation, so they allocate nothing;
  * per-disparity matching signatures are written into one stacked volume
    allocated before the disparity loop;
  * network parameters are excluded from the totals.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .config import NetConfig
from .layers import LayerSpec
from .model import embedding_specs, hourglass_specs, matching_specs


def _bytes_of(shape: Tuple[int, ...]) -> int:
    return 4 * int(np.prod(shape))


@dataclass
class LayerRow:
    name: str
    kind: str
    output_shape: Tuple[int, ...]
    param_count: int
    activation_bytes: int


@dataclass
class ArchReport:
    label: str
    height: int
    width: int
    d_run: int
    rows: List[LayerRow] = field(default_factory=list)
    total_params: int = 0
    peak_activation_bytes: int = 0

    def row(self, name: str) -> LayerRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_text(self) -> str:
        widths = (44, 8, 22, 12, 14)
        header = ("layer", "kind", "output shape", "params", "activ. bytes")
        lines = ["".join(h.ljust(w) for h, w in zip(header, widths))]
        for r in self.rows:
            shape = "x".join(str(e) for e in r.output_shape)
            lines.append("".join(str(v).ljust(w) for v, w in zip(
                (r.name, r.kind, shape, r.param_count, r.activation_bytes),
                widths)))
        lines.append(f"total parameters: {self.total_params}")
        lines.append(f"peak activation bytes: {self.peak_activation_bytes} "
                     f"({self.peak_activation_bytes / 2**30:.3f} GiB)")
        return "\n".join(lines) + "\n"


class _Liveness:
    def __init__(self):
        self._live: Dict[int, int] = {}
        self._next = 0
        self.peak = 0

    def alloc(self, shape: Tuple[int, ...]) -> int:
        handle = self._next
        self._next += 1
        self._live[handle] = _bytes_of(shape)
        self.peak = max(self.peak, sum(self._live.values()))
        return handle

    def free(self, handle: Optional[int]) -> None:
        if handle is not None:
            del self._live[handle]


class _Simulator:
    """Mirrors the forward execution order of the live network."""

    def __init__(self, cfg: NetConfig, height: int, width: int, d_run: int):
        if height % 4 or width % 4:
            raise ValueError(f"extents must be multiples of 4, got "
                             f"{height}x{width}")
        if d_run % 4 or d_run < 4:
            raise ValueError(f"d_run must be a positive multiple of 4, "
                             f"got {d_run}")
        self.cfg = cfg
        self.h, self.w, self.d_run = height, width, d_run
        self.mem = _Liveness()
        self.rows: Dict[str, LayerRow] = {}
        self.specs = {s.name: s for s in
                      embedding_specs(cfg) + matching_specs(cfg) +
                      hourglass_specs(cfg)}

    def record(self, spec: LayerSpec, out_shape: Tuple[int, ...]) -> None:
        if spec.name not in self.rows:
            self.rows[spec.name] = LayerRow(spec.name, spec.kind, out_shape,
                                            spec.param_count,
                                            _bytes_of(out_shape))

    def run_layer(self, name: str, in_shape, in_handle, free_input=True):
        """One primitive layer: compute shape, allocate, free the input."""
        spec = self.specs[name]
        if spec.kind in ("conv2d", "conv3d", "tconv3d"):
            out_shape = (spec.cout,) + spec.out_spatial(tuple(in_shape[1:]))
        else:
            out_shape = tuple(in_shape)
        self.record(spec, out_shape)
        handle = self.mem.alloc(out_shape)
        if free_input:
            self.mem.free(in_handle)
        return out_shape, handle

    def run_chain(self, names, shape, handle, free_first_input=True):
        free_next = free_first_input
        for name in names:
            shape, handle = self.run_layer(name, shape, handle,
                                           free_input=free_next)
            free_next = True
        return shape, handle

    def embed(self, shape, handle):
        shape, handle = self.run_chain(
            ["embedding.conv1", "embedding.norm1", "embedding.act1",
             "embedding.conv2", "embedding.norm2", "embedding.act2"],
            shape, handle)
        for i in (1, 2):
            p = f"embedding.res{i}"
            # branch keeps x live; merge happens inside act_out
            b_shape, b_handle = self.run_chain(
                [f"{p}.conv_a", f"{p}.norm_a", f"{p}.act_a",
                 f"{p}.conv_b", f"{p}.norm_b"], shape, handle,
                free_first_input=False)
            out_shape, out_handle = self.run_layer(f"{p}.act_out", b_shape,
                                                   b_handle)
            self.mem.free(handle)
            shape, handle = out_shape, out_handle
        return shape, handle

    def run(self) -> ArchReport:
        cfg = self.cfg
        left = self.mem.alloc((3, self.h, self.w))
        right = self.mem.alloc((3, self.h, self.w))
        desc_shape, left_desc = self.embed((3, self.h, self.w), left)
        _, right_desc = self.embed((3, self.h, self.w), right)

        steps = self.d_run // 4
        vol_shape = (cfg.signature_channels, steps) + desc_shape[1:]
        volume = self.mem.alloc(vol_shape)
        # one disparity iteration; all iterations have identical footprints
        shifted = self.mem.alloc(desc_shape)
        cat_shape = (2 * desc_shape[0],) + desc_shape[1:]
        cat = self.mem.alloc(cat_shape)
        self.mem.free(shifted)
        m_shape, m_handle = self.run_chain(
            ["matching.reduce", "matching.norm", "matching.act",
             "matching.project"], cat_shape, cat)
        self.mem.free(m_handle)  # written into the stacked volume
        self.mem.free(left_desc)
        self.mem.free(right_desc)
        self.rows["matching.signature_volume"] = LayerRow(
            "matching.signature_volume", "stack", vol_shape, 0,
            _bytes_of(vol_shape))

        shape, handle = self.run_chain(
            ["regularization.stem.conv", "regularization.stem.norm",
             "regularization.stem.act"], vol_shape, volume)
        saved = [(shape, handle)]
        for i in range(1, cfg.hourglass_levels + 1):
            # every down input is a saved shortcut; freed at its merge
            shape, handle = self.run_chain(
                [f"regularization.down{i}.conv", f"regularization.down{i}.norm",
                 f"regularization.down{i}.act"], shape, handle,
                free_first_input=False)
            if i < cfg.hourglass_levels:
                saved.append((shape, handle))
        for i in range(cfg.hourglass_levels, 0, -1):
            sc_shape, sc_handle = saved[i - 1]
            shape, handle = self.run_layer(f"regularization.up{i}.tconv",
                                           shape, handle)
            shape, handle = self.run_layer(f"regularization.up{i}.norm",
                                           shape, handle)
            # crop to the shortcut extents (a view), then merge in place
            shape = (shape[0],) + sc_shape[1:]
            shape, handle = self.run_layer(f"regularization.up{i}.act",
                                           shape, handle)
            self.mem.free(sc_handle)
        shape, handle = self.run_chain(
            ["regularization.head1.tconv", "regularization.head1.norm",
             "regularization.head1.act", "regularization.head2.tconv",
             "regularization.head2.norm", "regularization.head2.act",
             "regularization.final.conv"], shape, handle)

        expected = (1, self.d_run // 2, self.h, self.w)
        if shape != expected:
            raise ValueError(f"cost volume shape {shape}, expected {expected}")

        report = ArchReport("", self.h, self.w, self.d_run)
        ordered = [s.name for s in (embedding_specs(cfg) + matching_specs(cfg))]
        ordered.append("matching.signature_volume")
        ordered += [s.name for s in hourglass_specs(cfg)]
        report.rows = [self.rows[name] for name in ordered]
        report.total_params = sum(r.param_count for r in report.rows)
        report.peak_activation_bytes = self.mem.peak
        return report


def analyze(cfg: NetConfig, height: int, width: int,
            d_run: Optional[int] = None, label: str = "net") -> ArchReport:
    """Shape propagation and memory estimate, no arrays allocated."""
    d_run = cfg.max_disparity if d_run is None else d_run
    report = _Simulator(cfg, height, width, d_run).run()
    report.label = label
    return report


def compare(reports: List[ArchReport], sort_by: str = "params",
            fmt: str = "text") -> str:
    """Aligned comparison table over reports, sorted ascending."""
    keys = {
        "params": lambda r: r.total_params,
        "memory": lambda r: r.peak_activation_bytes,
        "label": lambda r: r.label,
    }
    if sort_by not in keys:
        raise ValueError(f"unknown sort column {sort_by!r}")
    ordered = sorted(reports, key=keys[sort_by])
    header = ["label", "height", "width", "d_run", "params",
              "peak_activation_bytes"]
    table = [[r.label, r.height, r.width, r.d_run, r.total_params,
              r.peak_activation_bytes] for r in ordered]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(header)
        writer.writerows(table)
        return buf.getvalue()
    widths = [max(len(str(v)) for v in [h] + [row[i] for row in table]) + 2
              for i, h in enumerate(header)]
    lines = ["".join(str(h).ljust(w) for h, w in zip(header, widths))]
    for row in table:
        lines.append("".join(str(v).ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines) + "\n"
