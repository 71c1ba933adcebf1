"""Pixel-level utilities: PPM I/O, synthetic rendering, resampling, augmentation.

All images are uint8 arrays of shape (H, W, 3). Rendering and augmentation
take an explicit :class:`~foodrec.rng.Rng` so results are reproducible
byte-for-byte.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import Rng

DEFAULT_SIDE = 32

SHAPE_PROTOTYPES = ("circle", "square", "triangle", "stripes")


class ImageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PPM (P6) files


def write_ppm(path: str | Path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ImageError(f"expected (H, W, 3) pixels, got {pixels.shape}")
    h, w = pixels.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    return decode_ppm(data)


def decode_ppm(data: bytes) -> np.ndarray:
    if not data.startswith(b"P6"):
        raise ImageError("not a P6 PPM file")
    # Header: magic, width, height, maxval, each separated by whitespace
    # (comments starting with '#' allowed), then a single whitespace byte.
    fields: list[int] = []
    i = 2
    while len(fields) < 3:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise ImageError("truncated PPM header")
        fields.append(int(data[start:i]))
    i += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ImageError(f"unsupported PPM maxval {maxval}")
    raw = data[i : i + w * h * 3]
    if len(raw) != w * h * 3:
        raise ImageError("truncated PPM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


# ---------------------------------------------------------------------------
# Color and resampling helpers


def hue_to_rgb(hue_degrees: float, saturation: float = 0.85, value: float = 0.9) -> tuple[int, int, int]:
    """HSV color with hue in degrees (wraps mod 360) to an 8-bit RGB triple."""
    h = (hue_degrees % 360.0) / 360.0
    r, g, b = colorsys.hsv_to_rgb(h, saturation, value)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def resize_nearest(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize. Deterministic, no interpolation."""
    h, w = pixels.shape[:2]
    rows = np.minimum((np.arange(out_h) * h) // out_h, h - 1)
    cols = np.minimum((np.arange(out_w) * w) // out_w, w - 1)
    return pixels[rows[:, None], cols[None, :]]


def box_downsample(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Box-filter downsample (block mean). Used for 8x8 review thumbnails."""
    h, w = pixels.shape[:2]
    if h % out_h or w % out_w:
        pixels = resize_nearest(pixels, (h // out_h) * out_h or out_h, (w // out_w) * out_w or out_w)
        h, w = pixels.shape[:2]
    bh, bw = h // out_h, w // out_w
    blocks = pixels.reshape(out_h, bh, out_w, bw, 3).astype(np.float64)
    return np.clip(np.rint(blocks.mean(axis=(1, 3))), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Synthetic rendering

_BACKGROUND = 42


def _noise_field(side: int, rng: Rng, amplitude: int) -> np.ndarray:
    """Per-pixel noise in [-amplitude, amplitude], drawn bytewise."""
    raw = np.frombuffer(rng.bytes(side * side), dtype=np.uint8).astype(np.int16)
    return (raw % (2 * amplitude + 1) - amplitude).reshape(side, side)


def _base_canvas(side: int, rng: Rng) -> np.ndarray:
    canvas = np.full((side, side, 3), _BACKGROUND, dtype=np.int16)
    return canvas + _noise_field(side, rng, 8)[:, :, None]


def render_shape(shape: str, hue_degrees: float, rng: Rng, side: int = DEFAULT_SIDE) -> np.ndarray:
    """Draw one colored prototype shape on a noisy dark background.

    Position, size and color value are lightly jittered from ``rng``, so
    images of the same class vary while staying visually coherent.
    """
    if shape not in SHAPE_PROTOTYPES:
        raise ImageError(f"unknown shape prototype {shape!r}")
    canvas = _base_canvas(side, rng)
    color = np.array(
        hue_to_rgb(hue_degrees, value=rng.uniform(0.75, 1.0)), dtype=np.int16
    )

    yy, xx = np.mgrid[0:side, 0:side]
    cy = side / 2 + rng.uniform(-side / 10, side / 10)
    cx = side / 2 + rng.uniform(-side / 10, side / 10)
    half = side * rng.uniform(0.28, 0.38)

    if shape == "circle":
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= half ** 2
    elif shape == "square":
        mask = (np.abs(yy - cy) <= half) & (np.abs(xx - cx) <= half)
    elif shape == "triangle":
        # Upward triangle: widens linearly from the apex down to the base.
        rel_y = (yy - (cy - half)) / (2 * half)
        mask = (rel_y >= 0) & (rel_y <= 1) & (np.abs(xx - cx) <= rel_y * half)
    else:  # stripes
        period = max(2, int(round(side / 5)))
        phase = rng.randrange(period)
        mask = ((yy + phase) // (period // 2)) % 2 == 0
        band = np.abs(yy - cy) <= half
        mask = mask & band

    out = canvas.copy()
    speckle = _noise_field(side, rng, 10)
    for c in range(3):
        out[:, :, c] = np.where(mask, color[c] + speckle, canvas[:, :, c])
    return np.clip(out, 0, 255).astype(np.uint8)


def render_non_food(index: int, rng: Rng, side: int = DEFAULT_SIDE) -> np.ndarray:
    """Non-food stand-ins: pure noise and linear gradients, alternating."""
    if index % 2 == 0:
        flat = np.frombuffer(rng.bytes(side * side * 3), dtype=np.uint8)
        return flat.reshape(side, side, 3).copy()
    angle = rng.uniform(0.0, 2 * math.pi)
    c0 = np.array([rng.randrange(256) for _ in range(3)], dtype=np.float64)
    c1 = np.array([rng.randrange(256) for _ in range(3)], dtype=np.float64)
    yy, xx = np.mgrid[0:side, 0:side]
    t = xx * math.cos(angle) + yy * math.sin(angle)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
    grad = c0[None, None, :] + t[:, :, None] * (c1 - c0)[None, None, :]
    return np.clip(np.rint(grad), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Augmentation


@dataclass
class AugmentationSpec:
    """Per-op probabilities and magnitudes for training-time augmentation.

    ``rotation_degrees`` is a symmetric range (angle drawn from +-value),
    ``crop_size`` is the side of the random crop (rescaled back to the input
    size), ``contrast_range`` is a multiplicative interval for the
    mean-anchored contrast op.
    """

    rotation_degrees: float = 15.0
    crop_size: int = 28
    contrast_range: tuple[float, float] = (0.8, 1.2)
    rotation_prob: float = 0.5
    crop_prob: float = 0.5
    contrast_prob: float = 0.5

    def validate(self, side: int) -> None:
        if self.crop_size > side:
            raise ImageError(f"crop_size {self.crop_size} exceeds image side {side}")
        if self.crop_size < 1:
            raise ImageError("crop_size must be >= 1")
        lo, hi = self.contrast_range
        if lo <= 0 or hi <= 0 or hi < lo:
            raise ImageError("contrast_range must be a positive interval")
        for p in (self.rotation_prob, self.crop_prob, self.contrast_prob):
            if not 0.0 <= p <= 1.0:
                raise ImageError("op probabilities must be in [0, 1]")
        if self.rotation_degrees < 0:
            raise ImageError("rotation_degrees must be >= 0")

    @staticmethod
    def identity() -> "AugmentationSpec":
        return AugmentationSpec(rotation_prob=0.0, crop_prob=0.0, contrast_prob=0.0)


def _rotate_nearest(pixels: np.ndarray, degrees: float) -> np.ndarray:
    if degrees == 0.0:
        return pixels
    h, w = pixels.shape[:2]
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w]
    # Inverse map output coords back into the source, clamped at the edges.
    sy = cos_t * (yy - cy) + sin_t * (xx - cx) + cy
    sx = -sin_t * (yy - cy) + cos_t * (xx - cx) + cx
    sy = np.clip(np.rint(sy).astype(np.int64), 0, h - 1)
    sx = np.clip(np.rint(sx).astype(np.int64), 0, w - 1)
    return pixels[sy, sx]


def augment(pixels: np.ndarray, spec: AugmentationSpec, rng: Rng) -> np.ndarray:
    """Apply rotation -> crop -> contrast, each gated by its probability.

    Output has the same shape as the input; pixel values stay in [0, 255].
    The crop is rescaled back to the input size with nearest-neighbor
    resampling; contrast is mean-anchored: out = mean + f * (in - mean).
    """
    h, w = pixels.shape[:2]
    spec.validate(min(h, w))
    out = pixels

    if spec.rotation_prob > 0 and rng.random() < spec.rotation_prob:
        angle = rng.uniform(-spec.rotation_degrees, spec.rotation_degrees)
        out = _rotate_nearest(out, angle)

    if spec.crop_prob > 0 and rng.random() < spec.crop_prob:
        cs = spec.crop_size
        top = rng.randrange(h - cs + 1)
        left = rng.randrange(w - cs + 1)
        out = resize_nearest(out[top : top + cs, left : left + cs], h, w)

    if spec.contrast_prob > 0 and rng.random() < spec.contrast_prob:
        f = rng.uniform(*spec.contrast_range)
        mean = float(out.mean())
        adjusted = mean + f * (out.astype(np.float64) - mean)
        out = np.clip(np.rint(adjusted), 0, 255).astype(np.uint8)

    return out
