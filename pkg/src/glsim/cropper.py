"""Turn selected patch indices into a pixel crop and resample it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from glsim.config import ArchConfig, grid_dims
from glsim.errors import InvalidConfigError, ShapeError
from glsim.rng import SplitMix64


@dataclass(frozen=True)
class PatchBox:
    row_min: int
    row_max: int
    col_min: int
    col_max: int


@dataclass(frozen=True)
class PixelRect:
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


def enclosing_box(indices, grid: tuple[int, int]) -> PatchBox:
    rows, cols = grid
    idx = np.asarray(list(indices), dtype=np.int64)
    if idx.size == 0:
        raise InvalidConfigError("cannot enclose an empty index set")
    if idx.min() < 0 or idx.max() >= rows * cols:
        raise InvalidConfigError(f"patch index out of range for {rows}x{cols} grid")
    r, c = idx // cols, idx % cols
    return PatchBox(int(r.min()), int(r.max()), int(c.min()), int(c.max()))


def box_to_pixels(box: PatchBox, config: ArchConfig) -> PixelRect:
    """Union of the patch windows spanned by ``box``, clipped to the image."""
    rows, cols = grid_dims(config)
    if not (0 <= box.row_min <= box.row_max < rows and 0 <= box.col_min <= box.col_max < cols):
        raise InvalidConfigError(f"{box} outside {rows}x{cols} grid")
    p, s = config.patch_size, config.stride
    return PixelRect(
        x0=box.col_min * s,
        y0=box.row_min * s,
        x1=min(box.col_max * s + p, config.image_w),
        y1=min(box.row_max * s + p, config.image_h),
    )


def _axis_taps(src: int, dst: int):
    d = np.arange(dst, dtype=np.float64)
    pos = (d + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def crop_resize(image: np.ndarray, rect: PixelRect, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resample of ``image[y0:y1, x0:x1]`` to ``out_h x out_w``.

    Half-pixel centres, edge-clamped. Interpolation runs in float64 and the
    result is cast back to the input dtype, so outputs never leave the
    range of their source pixels.
    """
    img = np.asarray(image)
    if img.ndim != 3:
        raise ShapeError(f"image must be (height, width, channels), got {img.shape}")
    h, w = img.shape[:2]
    if not (0 <= rect.x0 < rect.x1 <= w and 0 <= rect.y0 < rect.y1 <= h):
        raise InvalidConfigError(f"{rect} invalid for {w}x{h} image")
    if out_w < 1 or out_h < 1:
        raise InvalidConfigError(f"output size must be positive, got {out_w}x{out_h}")
    region = img[rect.y0:rect.y1, rect.x0:rect.x1].astype(np.float64)
    ylo, yhi, fy = _axis_taps(rect.height, out_h)
    xlo, xhi, fx = _axis_taps(rect.width, out_w)
    fx = fx[None, :, None]
    top = region[ylo][:, xlo] + fx * (region[ylo][:, xhi] - region[ylo][:, xlo])
    bottom = region[yhi][:, xlo] + fx * (region[yhi][:, xhi] - region[yhi][:, xlo])
    out = top + fy[:, None, None] * (bottom - top)
    return out.astype(img.dtype)


def random_indices(seed: int, o: int, n: int) -> np.ndarray:
    """``o`` distinct patch indices from a seeded partial Fisher-Yates shuffle (sorted)."""
    if not 1 <= o <= n:
        raise InvalidConfigError(f"need 1 <= O <= N, got O={o}, N={n}")
    rng = SplitMix64(seed)
    perm = np.arange(n)
    draws = rng.next_u64(o)
    for i in range(o):
        j = i + int(draws[i]) % (n - i)
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:o])
