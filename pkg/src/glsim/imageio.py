"""Binary PPM (P6) input, PGM (P5) heatmap output."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from glsim.errors import DecodeError

MEAN = 0.5
STD = 0.5
_WS = b" \t\n\r\v\f"


def _read_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Next header token, skipping whitespace and '#' comments. Returns (token, start, end)."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c in _WS:
            pos += 1
        elif c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos:pos + 1] not in _WS and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise DecodeError("unexpected end of header", offset=start)
    return data[start:pos], start, pos


def _header_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    tok, start, end = _read_token(data, pos)
    if not tok.isdigit():
        raise DecodeError(f"expected {what}, found {tok[:16]!r}", offset=start)
    value = int(tok)
    if value <= 0:
        raise DecodeError(f"{what} must be positive", offset=start)
    return value, end


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode a P6 file with maxval 255 to a (height, width, 3) uint8 array."""
    if data[:2] != b"P6":
        raise DecodeError("not a binary PPM (missing P6 magic)", offset=0)
    pos = 2
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise DecodeError("expected whitespace after magic", offset=pos)
    width, pos = _header_int(data, pos, "width")
    height, pos = _header_int(data, pos, "height")
    maxval, pos = _header_int(data, pos, "maxval")
    if maxval != 255:
        raise DecodeError(f"only maxval 255 is supported, got {maxval}", offset=pos)
    if pos >= len(data) or data[pos:pos + 1] not in _WS:
        raise DecodeError("expected single whitespace before raster", offset=pos)
    pos += 1
    need = width * height * 3
    if len(data) - pos < need:
        raise DecodeError(f"raster truncated: need {need} bytes, have {len(data) - pos}", offset=len(data))
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width, 3).copy()


def encode_ppm(pixels: np.ndarray) -> bytes:
    px = np.asarray(pixels, dtype=np.uint8)
    h, w, _ = px.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + px.tobytes()


def encode_pgm(pixels: np.ndarray) -> bytes:
    px = np.asarray(pixels, dtype=np.uint8)
    h, w = px.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes()


def normalize(pixels: np.ndarray) -> np.ndarray:
    """uint8 RGB -> float32 with per-channel mean/std 0.5."""
    x = np.asarray(pixels, dtype=np.float32) / np.float32(255.0)
    return ((x - np.float32(MEAN)) / np.float32(STD)).astype(np.float32)


def denormalize(image: np.ndarray) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64) * STD + MEAN
    return np.clip(np.floor(x * 255.0 + 0.5), 0, 255).astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Load a PPM file as a normalised float32 (height, width, 3) array."""
    return normalize(decode_ppm(Path(path).read_bytes()))


def heatmap_pixels(scores, grid: tuple[int, int], upsample: tuple[int, int] | None = None) -> np.ndarray:
    """Min-max scale scores to 0..255 (half rounds up); constant maps become all zeros.

    ``upsample`` is (width, height) for nearest-neighbour enlargement.
    """
    rows, cols = grid
    s = np.asarray(scores, dtype=np.float64).reshape(rows, cols)
    lo, hi = s.min(), s.max()
    if hi > lo:
        px = np.floor(255.0 * (s - lo) / (hi - lo) + 0.5).astype(np.uint8)
    else:
        px = np.zeros((rows, cols), dtype=np.uint8)
    if upsample is not None:
        w, h = upsample
        ys = np.arange(h) * rows // h
        xs = np.arange(w) * cols // w
        px = px[ys][:, xs]
    return px
