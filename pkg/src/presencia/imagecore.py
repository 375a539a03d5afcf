"""Raster images, the PNM codec, integral images, and resampling primitives.

Everything downstream (detection, preprocessing) is built on the three
image kinds defined here. Images are immutable: pixel arrays are marked
read-only at construction and every operation returns a new value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ImageError(Exception):
    """Base class for image-layer failures."""


class MalformedHeader(ImageError):
    """PNM header is not a binary P5/P6 with positive dims and maxval 255."""


class TruncatedPayload(ImageError):
    """Fewer pixel bytes than the header promises."""


class OutOfBounds(ImageError):
    """A rectangle does not fit inside the image it is applied to."""


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle, top-left origin, width/height convention."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValueError(f"negative rect origin ({self.x},{self.y})")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"nonpositive rect size ({self.w}x{self.h})")

    @property
    def area(self) -> int:
        return self.w * self.h


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GrayImage:
    """Single-channel luminance raster, bytes in [0,255], row-major (h, w)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 2 or p.dtype != np.uint8 or p.size == 0:
            raise ValueError("GrayImage needs a nonempty (h, w) uint8 array")
        object.__setattr__(self, "pixels", _freeze(p))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class RgbImage:
    """Three-channel raster, bytes in [0,255], row-major (h, w, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8 or p.size == 0:
            raise ValueError("RgbImage needs a nonempty (h, w, 3) uint8 array")
        object.__setattr__(self, "pixels", _freeze(p))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


Image = GrayImage | RgbImage


@dataclass(frozen=True)
class IntegralImage:
    """Zero-padded cumulative sum tables over a GrayImage.

    `sums[y][x]` is the sum of all pixels above and left of (x, y)
    exclusive, so any rectangle sum is four lookups and needs no branch.
    `sq_sums` is the same for squared pixel values. int64 holds
    255^2 * w * h without overflow for any image we accept.
    """

    width: int
    height: int
    sums: np.ndarray
    sq_sums: np.ndarray

    def __post_init__(self) -> None:
        expect = (self.height + 1, self.width + 1)
        for name in ("sums", "sq_sums"):
            t = getattr(self, name)
            if t.shape != expect or t.dtype != np.int64:
                raise ValueError(f"{name} must be int64 of shape {expect}")
            object.__setattr__(self, name, _freeze(t))


def _check_rect(r: Rect, width: int, height: int) -> None:
    if r.x + r.w > width or r.y + r.h > height:
        raise OutOfBounds(f"rect {r} outside {width}x{height}")


# --- PNM codec (binary P5/P6, maxval 255) ---------------------------------

_WS = b" \t\r\n"


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comment lines between header tokens
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c in (b"#",):
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c in (b" ", b"\t", b"\r", b"\n"):
            pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos : pos + 1] not in (b" ", b"\t", b"\r", b"\n", b"#"):
        pos += 1
    if start == pos:
        raise MalformedHeader("unexpected end of header")
    return data[start:pos], pos


def decode_pnm(data: bytes) -> Image:
    """Decode binary PNM bytes: P5 -> GrayImage, P6 -> RgbImage.

    Header comments are skipped; exactly one whitespace byte separates the
    maxval from the pixel payload.
    """
    if len(data) < 2:
        raise MalformedHeader("too short for a PNM header")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise MalformedHeader(f"bad magic {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise MalformedHeader(f"non-numeric header token {tok!r}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"nonpositive dimensions {width}x{height}")
    if maxval != 255:
        raise MalformedHeader(f"unsupported maxval {maxval}")
    if pos >= len(data) or data[pos : pos + 1] not in (b" ", b"\t", b"\r", b"\n"):
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise TruncatedPayload(f"need {need} pixel bytes, have {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8, count=need)
    if channels == 1:
        return GrayImage(arr.reshape(height, width))
    return RgbImage(arr.reshape(height, width, 3))


def encode_pnm(img: Image) -> bytes:
    """Encode to the canonical binary PNM form: 'P5\\n{w} {h}\\n255\\n' + bytes."""
    magic = b"P5" if isinstance(img, GrayImage) else b"P6"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    return header + img.pixels.tobytes()


# --- color and geometry ----------------------------------------------------


def to_gray(img: RgbImage) -> GrayImage:
    """BT.601 luma with round-half-up: round(0.299 R + 0.587 G + 0.114 B)."""
    p = img.pixels.astype(np.float64)
    luma = p[:, :, 0] * 0.299 + p[:, :, 1] * 0.587 + p[:, :, 2] * 0.114
    out = np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)
    return GrayImage(out)


def as_gray(img: Image) -> GrayImage:
    return img if isinstance(img, GrayImage) else to_gray(img)


def integral(img: GrayImage) -> IntegralImage:
    """Build both cumulative tables in one pass over the pixels."""
    h, w = img.pixels.shape
    sums = np.zeros((h + 1, w + 1), dtype=np.int64)
    sq = np.zeros((h + 1, w + 1), dtype=np.int64)
    p = img.pixels.astype(np.int64)
    np.cumsum(np.cumsum(p, axis=0), axis=1, out=sums[1:, 1:])
    np.cumsum(np.cumsum(p * p, axis=0), axis=1, out=sq[1:, 1:])
    return IntegralImage(width=w, height=h, sums=sums, sq_sums=sq)


def rect_sum(ii: IntegralImage, r: Rect, squared: bool = False) -> int:
    """Exact pixel (or squared-pixel) sum over `r` in four table lookups."""
    _check_rect(r, ii.width, ii.height)
    t = ii.sq_sums if squared else ii.sums
    x0, y0, x1, y1 = r.x, r.y, r.x + r.w, r.y + r.h
    return int(t[y1, x1] - t[y0, x1] - t[y1, x0] + t[y0, x0])


def crop(img: Image, r: Rect) -> Image:
    """Copy the pixels under `r` into a new image of size (r.w, r.h)."""
    _check_rect(r, img.width, img.height)
    view = img.pixels[r.y : r.y + r.h, r.x : r.x + r.w]
    if isinstance(img, GrayImage):
        return GrayImage(view.copy())
    return RgbImage(view.copy())


def _sample_axis(out_n: int, in_n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel-center mapping: src = (dst + 0.5) * scale - 0.5, clamped
    scale = in_n / out_n
    src = (np.arange(out_n, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_n - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_n - 1)
    frac = src - i0
    return i0, i1, frac


def resize_bilinear(img: Image, out_w: int, out_h: int) -> Image:
    """Bilinear resample to (out_w, out_h) with half-pixel-center mapping.

    Interpolation is computed as a + t*(b - a) per axis so constant inputs
    reproduce exactly; channel values round half-up.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    x0, x1, fx = _sample_axis(out_w, img.width)
    y0, y1, fy = _sample_axis(out_h, img.height)
    p = img.pixels.astype(np.float64)
    if isinstance(img, GrayImage):
        p = p[:, :, None]
    top = p[y0][:, x0] + fx[None, :, None] * (p[y0][:, x1] - p[y0][:, x0])
    bot = p[y1][:, x0] + fx[None, :, None] * (p[y1][:, x1] - p[y1][:, x0])
    out = top + fy[:, None, None] * (bot - top)
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    if isinstance(img, GrayImage):
        return GrayImage(out[:, :, 0])
    return RgbImage(out)
