"""Dataset ingestion and synthesis.

Disparity ground truth is read from PFM files (dense float maps, stored
bottom-to-top) or 16-bit PNG files (value/256, zero means invalid).  The
synthetic generator produces random-dot stereograms with layered rectangles
of constant disparity, giving dense exact ground truth at any size.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from .estimators import DisparityMap
from .tensor import Tensor


class DataError(RuntimeError):
    pass


# -----------------------------------------------------------------------
# PFM
# -----------------------------------------------------------------------

def read_pfm(path) -> np.ndarray:
    """Read a PFM file into (H, W) or (H, W, 3) float32, top row first."""
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise DataError(f"bad PFM magic {magic!r} in {path}")
        dims = fh.readline().decode("ascii", errors="replace")
        match = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not match:
            raise DataError(f"bad PFM dimensions line {dims!r}")
        width, height = int(match.group(1)), int(match.group(2))
        scale = float(fh.readline().decode("ascii", errors="replace"))
        if scale == 0.0:
            raise DataError("PFM scale must be nonzero")
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        payload = fh.read(count * 4)
        if len(payload) != count * 4:
            raise DataError(f"truncated PFM payload in {path}")
    data = np.frombuffer(payload, dtype=f"{endian}f4", count=count)
    shape = (height, width, 3) if channels == 3 else (height, width)
    # PFM stores the bottom row first
    return np.flipud(data.reshape(shape)).astype(np.float32)


def write_pfm(path, data: np.ndarray, little_endian: bool = True) -> None:
    data = np.asarray(data)
    if data.ndim == 2:
        magic, channels = b"Pf", 1
    elif data.ndim == 3 and data.shape[2] == 3:
        magic, channels = b"PF", 3
    else:
        raise DataError(f"PFM data must be (H,W) or (H,W,3), got {data.shape}")
    height, width = data.shape[:2]
    scale = -1.0 if little_endian else 1.0
    dtype = "<f4" if little_endian else ">f4"
    with open(path, "wb") as fh:
        fh.write(magic + b"\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(f"{scale:.1f}\n".encode("ascii"))
        fh.write(np.flipud(data).astype(dtype).tobytes())


# -----------------------------------------------------------------------
# 16-bit PNG disparity (KITTI convention)
# -----------------------------------------------------------------------

def read_kitti_disparity(path) -> DisparityMap:
    """stored/256.0, stored 0 means no ground truth at that pixel."""
    img = Image.open(path)
    if img.mode not in ("I", "I;16", "I;16B"):
        raise DataError(
            f"disparity PNG must be 16-bit single channel, got mode {img.mode}")
    stored = np.asarray(img, dtype=np.int64)
    if stored.ndim != 2:
        raise DataError(f"disparity PNG must be single channel, got shape "
                        f"{stored.shape}")
    if stored.min() < 0 or stored.max() > 65535:
        raise DataError("disparity PNG values out of 16-bit range")
    values = stored.astype(np.float64) / 256.0
    mask = stored > 0
    return DisparityMap(values, mask)


def write_kitti_disparity(path, disparity: DisparityMap) -> None:
    stored = np.round(np.asarray(disparity.values) * 256.0)
    stored = np.clip(stored, 0, 65535).astype(np.uint16)
    stored[~disparity.mask] = 0
    Image.fromarray(stored).save(path, format="PNG")


def read_image(path) -> np.ndarray:
    """Color image as (3, H, W) float32 in [0, 1]."""
    img = Image.open(path).convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def write_image(path, chw: np.ndarray) -> None:
    arr = np.clip(np.asarray(chw), 0.0, 1.0)
    hwc = (arr.transpose(1, 2, 0) * 255.0).round().astype(np.uint8)
    Image.fromarray(hwc).save(path, format="PNG")


# -----------------------------------------------------------------------
# samples
# -----------------------------------------------------------------------

@dataclass
class StereoSample:
    """A rectified pair with dense or sparse ground-truth disparity."""

    left: np.ndarray   # (3, H, W) float32
    right: np.ndarray  # (3, H, W) float32
    gt: DisparityMap
    name: str = "sample"

    def __post_init__(self):
        lh, lw = self.left.shape[1:]
        if self.right.shape != self.left.shape:
            raise DataError(
                f"left/right shapes differ: {self.left.shape} vs "
                f"{self.right.shape}")
        if self.gt.values.shape != (lh, lw):
            raise DataError(
                f"ground truth shape {self.gt.values.shape} does not match "
                f"images {(lh, lw)}")
        valid = self.gt.values[self.gt.mask]
        if valid.size and (not np.isfinite(valid).all() or (valid < 0).any()):
            raise DataError("valid ground-truth disparities must be finite "
                            "and nonnegative")

    @property
    def height(self) -> int:
        return self.left.shape[1]

    @property
    def width(self) -> int:
        return self.left.shape[2]


def make_synthetic_stereogram(rng_seed: int, height: int, width: int,
                              max_disp: int, n_layers: int) -> StereoSample:
    """Random-dot stereogram with layered constant-disparity rectangles.

    The left image is random color noise.  The right image is the left
    image forward-warped by the per-pixel disparity with a z-buffer, so
    nearer layers occlude farther ones; pixels never hit by the warp are
    filled with fresh noise.  Ground truth is the exact disparity field
    and is valid everywhere, including pixels occluded in the right view.
    """
    if max_disp >= width // 2:
        raise DataError(f"max_disp {max_disp} too large for width {width}")
    rng = np.random.default_rng(rng_seed)
    disp = np.full((height, width), float(rng.integers(0, max(1, max_disp // 3) + 1)))
    layers = []
    for _ in range(n_layers):
        layers.append((int(rng.integers(1, max_disp + 1)),
                       int(rng.integers(0, height - 3)),
                       int(rng.integers(0, width - 6)),
                       int(rng.integers(3, max(4, height // 2) + 1)),
                       int(rng.integers(6, max(7, width // 2) + 1))))
    # paint farthest (smallest disparity) first so nearer layers overwrite
    for d, top, leftx, h, w in sorted(layers, key=lambda t: t[0]):
        disp[top:top + h, leftx:leftx + w] = float(d)

    left = rng.random((3, height, width), dtype=np.float32)
    right = rng.random((3, height, width), dtype=np.float32)
    zbuf = np.full((height, width), -1.0)
    cols = np.arange(width)
    for y in range(height):
        targets = cols - disp[y].astype(int)
        for x in range(width):
            t = targets[x]
            if 0 <= t and disp[y, x] > zbuf[y, t]:
                zbuf[y, t] = disp[y, x]
                right[:, y, t] = left[:, y, x]
    return StereoSample(left, right, DisparityMap(disp.astype(np.float64)),
                        name=f"synthetic-{rng_seed}")


def normalize(sample: StereoSample) -> StereoSample:
    """Zero mean, unit variance per image (all channels and pixels jointly)."""
    def norm(img):
        mu = img.mean()
        sigma = max(img.std(), 1e-6)
        return ((img - mu) / sigma).astype(np.float32)

    return StereoSample(norm(sample.left), norm(sample.right), sample.gt,
                        sample.name)


def random_crop(sample: StereoSample, crop_h: int, crop_w: int,
                rng: np.random.Generator) -> StereoSample:
    """One crop window applied identically to images, gt and mask."""
    if crop_h > sample.height or crop_w > sample.width:
        raise DataError(
            f"crop {crop_h}x{crop_w} larger than image "
            f"{sample.height}x{sample.width}")
    top = int(rng.integers(0, sample.height - crop_h + 1))
    left = int(rng.integers(0, sample.width - crop_w + 1))
    return crop_at(sample, top, left, crop_h, crop_w)


def crop_at(sample: StereoSample, top: int, left: int, crop_h: int,
            crop_w: int) -> StereoSample:
    ys = slice(top, top + crop_h)
    xs = slice(left, left + crop_w)
    gt = DisparityMap(sample.gt.values[ys, xs].copy(),
                      sample.gt.mask[ys, xs].copy())
    return StereoSample(np.ascontiguousarray(sample.left[:, ys, xs]),
                        np.ascontiguousarray(sample.right[:, ys, xs]),
                        gt, sample.name)


def pad_to_multiple_of_four(sample: StereoSample) -> Tuple[StereoSample, Tuple[int, int]]:
    """Edge-replicate right/bottom to multiples of 4; mask padding invalid.

    Returns the padded sample and the original (H, W) so outputs can be
    cropped back.
    """
    h, w = sample.height, sample.width
    ph = (-h) % 4
    pw = (-w) % 4
    if ph == 0 and pw == 0:
        return sample, (h, w)
    pad_img = ((0, 0), (0, ph), (0, pw))
    left = np.pad(sample.left, pad_img, mode="edge")
    right = np.pad(sample.right, pad_img, mode="edge")
    gt = DisparityMap(np.pad(sample.gt.values, ((0, ph), (0, pw)), mode="edge"),
                      np.pad(sample.gt.mask, ((0, ph), (0, pw)),
                             constant_values=False))
    return StereoSample(left, right, gt, sample.name), (h, w)


def sample_tensors(sample: StereoSample) -> Tuple[Tensor, Tensor]:
    return Tensor(sample.left), Tensor(sample.right)


# -----------------------------------------------------------------------
# manifests
# -----------------------------------------------------------------------

@dataclass
class DatasetManifest:
    """Sample path triples (left image, right image, ground truth)."""

    entries: List[Tuple[Path, Path, Path]] = field(default_factory=list)

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        base = Path(path).parent
        entries = []
        for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{path}:{line_no}: expected three tab-separated paths")
            triple = tuple((base / p).resolve() if not Path(p).is_absolute()
                           else Path(p) for p in parts)
            for p in triple:
                if not p.exists():
                    raise DataError(f"{path}:{line_no}: missing file {p}")
            entries.append(triple)
        return cls(entries)

    def save(self, path) -> None:
        """Write one tab-separated triple per line, relative when possible."""
        base = Path(path).resolve().parent

        def fmt(p: Path) -> str:
            try:
                return str(Path(p).resolve().relative_to(base))
            except ValueError:
                return str(p)

        lines = ["\t".join(fmt(p) for p in triple) for triple in self.entries]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))

    def load_sample(self, index: int) -> StereoSample:
        left_p, right_p, gt_p = self.entries[index]
        left = read_image(left_p)
        right = read_image(right_p)
        if gt_p.suffix.lower() == ".pfm":
            values = read_pfm(gt_p)
            if values.ndim == 3:
                values = values[:, :, 0]
            gt = DisparityMap(values.astype(np.float64),
                              np.isfinite(values) & (values >= 0))
        elif gt_p.suffix.lower() == ".png":
            gt = read_kitti_disparity(gt_p)
        else:
            raise DataError(f"unsupported ground-truth format {gt_p.suffix}")
        return StereoSample(left, right, gt, name=left_p.stem)

    def samples(self) -> List[StereoSample]:
        return [self.load_sample(i) for i in range(len(self.entries))]

    def filtered(self, max_disparity: float) -> "DatasetManifest":
        """Keep only samples whose valid ground truth stays <= max_disparity."""
        kept = []
        for i, triple in enumerate(self.entries):
            sample = self.load_sample(i)
            valid = sample.gt.values[sample.gt.mask]
            if valid.size == 0 or valid.max() <= max_disparity:
                kept.append(triple)
        return DatasetManifest(kept)

    def __len__(self) -> int:
        return len(self.entries)
