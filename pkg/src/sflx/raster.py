"""Raster images, pixel masking, and image file I/O.

A pixel spans all channels of one (row, col) position; pixel indices are
row-major from the top-left corner, in [0, width*height) regardless of the
channel count. Masking replaces a pixel's channels with a background color.

All operations here are pure: inputs are never mutated and results are
fresh values, so everything is safe to share across threads.
"""

import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, UnsupportedFormatError

__all__ = [
    "Raster",
    "BackgroundColor",
    "MaskSet",
    "CellGrid",
    "apply_mask",
    "keep_only",
    "load_image",
    "save_image",
    "write_atomic",
]


@dataclass(frozen=True, eq=False)
class Raster:
    """Width x height x channels grid of intensity bytes.

    ``data`` is a 1-D uint8 array, row-major and channel-interleaved, of
    length width*height*channels. Grayscale has 1 channel, RGB has 3.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidArgumentError("raster dimensions must be positive")
        if self.channels not in (1, 3):
            raise InvalidArgumentError(f"channels must be 1 or 3, got {self.channels}")
        arr = np.asarray(self.data, dtype=np.uint8).ravel()
        if arr.size != self.width * self.height * self.channels:
            raise InvalidArgumentError(
                f"data length {arr.size} != {self.width}x{self.height}x{self.channels}"
            )
        object.__setattr__(self, "data", arr)

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def pixel_view(self) -> np.ndarray:
        """(pixel_count, channels) view of the data. Do not write through it."""
        return self.data.reshape(self.pixel_count, self.channels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.channels == other.channels
            and np.array_equal(self.data, other.data)
        )

    def copy(self) -> "Raster":
        return Raster(self.width, self.height, self.channels, self.data.copy())


@dataclass(frozen=True)
class BackgroundColor:
    """Per-channel byte values used to mask pixels. Length = channels."""

    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) not in (1, 3):
            raise InvalidArgumentError("background must have 1 or 3 channels")
        if any(not (0 <= v <= 255) for v in self.values):
            raise InvalidArgumentError(f"background bytes out of range: {self.values}")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    @classmethod
    def black(cls, channels: int) -> "BackgroundColor":
        return cls((0,) * channels)

    def check_against(self, image: Raster) -> None:
        if len(self.values) != image.channels:
            raise InvalidArgumentError(
                f"background has {len(self.values)} channels, image has {image.channels}"
            )

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=np.uint8)


class MaskSet:
    """Bitset over pixel indices; True marks a masked pixel."""

    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray):
        bits = np.asarray(bits, dtype=bool).ravel()
        self.bits = bits

    @classmethod
    def empty(cls, n: int) -> "MaskSet":
        return cls(np.zeros(n, dtype=bool))

    @classmethod
    def full(cls, n: int) -> "MaskSet":
        return cls(np.ones(n, dtype=bool))

    @classmethod
    def from_indices(cls, n: int, indices) -> "MaskSet":
        idx = np.asarray(list(indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise InvalidArgumentError(f"pixel index out of range [0, {n})")
        bits = np.zeros(n, dtype=bool)
        bits[idx] = True
        return cls(bits)

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskSet):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    @property
    def cardinality(self) -> int:
        return int(np.count_nonzero(self.bits))

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def complement(self) -> "MaskSet":
        return MaskSet(~self.bits)

    def union(self, other: "MaskSet") -> "MaskSet":
        return MaskSet(self.bits | other.bits)

    def packed(self) -> bytes:
        """Big-endian packed bits, for serialization."""
        return np.packbits(self.bits).tobytes()

    @classmethod
    def unpack(cls, blob: bytes, n: int) -> "MaskSet":
        bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8), count=n)
        return cls(bits.astype(bool))


def apply_mask(image: Raster, mask: MaskSet, bg: BackgroundColor) -> Raster:
    """New raster equal to ``image`` with every masked pixel set to ``bg``."""
    if len(mask) != image.pixel_count:
        raise InvalidArgumentError(
            f"mask length {len(mask)} != pixel count {image.pixel_count}"
        )
    bg.check_against(image)
    out = image.data.copy().reshape(image.pixel_count, image.channels)
    out[mask.bits] = bg.as_array()
    return Raster(image.width, image.height, image.channels, out.ravel())


def keep_only(image: Raster, keep, bg: BackgroundColor) -> Raster:
    """Mask every pixel *not* in ``keep``; equals apply_mask with the complement.

    ``keep`` is any iterable of pixel indices, or a MaskSet interpreted as
    the set of pixels to keep.
    """
    n = image.pixel_count
    if isinstance(keep, MaskSet):
        if len(keep) != n:
            raise InvalidArgumentError(f"keep-set length {len(keep)} != pixel count {n}")
        keep_bits = keep.bits
    else:
        keep_bits = MaskSet.from_indices(n, keep).bits
    return apply_mask(image, MaskSet(~keep_bits), bg)


class CellGrid:
    """Optional g x g cell granularity: cells act as atomic pixels.

    With cell size 1 (the default everywhere) units coincide with pixels.
    Edge cells are clipped to the image, so every pixel belongs to exactly
    one unit.
    """

    def __init__(self, width: int, height: int, cell: int = 1):
        if cell < 1:
            raise InvalidArgumentError(f"cell size must be >= 1, got {cell}")
        self.width = width
        self.height = height
        self.cell = cell
        self.cols = -(-width // cell)
        self.rows = -(-height // cell)
        self.units = self.cols * self.rows

    @property
    def is_identity(self) -> bool:
        return self.cell == 1

    def unit_pixels(self, unit: int) -> np.ndarray:
        """Pixel indices covered by ``unit``, row-major within the cell."""
        ur, uc = divmod(unit, self.cols)
        r0, c0 = ur * self.cell, uc * self.cell
        rows = np.arange(r0, min(r0 + self.cell, self.height))
        cols = np.arange(c0, min(c0 + self.cell, self.width))
        return (rows[:, None] * self.width + cols[None, :]).ravel()

    def expand(self, unit_bits: np.ndarray) -> np.ndarray:
        """Pixel-level bool mask for a unit-level bool mask."""
        out = np.zeros(self.width * self.height, dtype=bool)
        for u in np.flatnonzero(unit_bits):
            out[self.unit_pixels(int(u))] = True
        return out

    def representative_pixels(self) -> np.ndarray:
        """Top-left pixel index of every unit, in unit order."""
        return np.array([self.unit_pixels(u)[0] for u in range(self.units)])


def write_atomic(path: str, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via a temp file + rename in the same dir."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- image file I/O: PNG (8-bit gray / RGB) and binary PGM/PPM, maxval 255 ---

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def load_image(path: str) -> Raster:
    """Load a PNG (8-bit gray or RGB) or binary PGM/PPM image.

    The format is sniffed from the file's magic bytes, not its extension.
    Anything else, including 16-bit or palette PNGs, raises
    UnsupportedFormatError.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] == _PNG_MAGIC:
        return _load_png(blob, path)
    if blob[:2] in (b"P5", b"P6"):
        return _load_pnm(blob, path)
    raise UnsupportedFormatError(f"{path}: not a PNG or binary PGM/PPM file")


def save_image(image: Raster, path: str) -> None:
    """Save as PNG, PGM, or PPM depending on the file extension.

    .pgm requires a 1-channel raster and .ppm a 3-channel one; .png accepts
    both. The write is atomic (temp file + rename).
    """
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        payload = _encode_png(image)
    elif ext == ".pgm":
        if image.channels != 1:
            raise UnsupportedFormatError("PGM holds single-channel images only")
        payload = b"P5 %d %d 255\n" % (image.width, image.height) + image.data.tobytes()
    elif ext == ".ppm":
        if image.channels != 3:
            raise UnsupportedFormatError("PPM holds 3-channel images only")
        payload = b"P6 %d %d 255\n" % (image.width, image.height) + image.data.tobytes()
    else:
        raise UnsupportedFormatError(f"unsupported output extension: {path}")
    write_atomic(path, payload)


def _load_png(blob: bytes, path: str) -> Raster:
    from PIL import Image
    import io

    try:
        img = Image.open(io.BytesIO(blob))
        img.load()
    except Exception as exc:
        raise UnsupportedFormatError(f"{path}: cannot decode PNG ({exc})") from exc
    if img.mode == "L":
        channels = 1
    elif img.mode == "RGB":
        channels = 3
    else:
        raise UnsupportedFormatError(
            f"{path}: PNG mode {img.mode!r} unsupported (8-bit gray or RGB only)"
        )
    arr = np.asarray(img, dtype=np.uint8)
    return Raster(img.width, img.height, channels, arr.ravel())


def _encode_png(image: Raster) -> bytes:
    # hand-rolled encoder: deterministic bytes independent of Pillow version
    w, h, c = image.width, image.height, image.channels
    color_type = 0 if c == 1 else 2
    raw = image.data.reshape(h, w * c)
    stride = w * c
    scan = np.zeros((h, stride + 1), dtype=np.uint8)
    scan[:, 1:] = raw  # filter byte 0 (None) per scanline
    compressed = zlib.compress(scan.tobytes(), 9)

    def chunk(tag: bytes, body: bytes) -> bytes:
        return (
            struct.pack(">I", len(body))
            + tag
            + body
            + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    return (
        _PNG_MAGIC
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", compressed)
        + chunk(b"IEND", b"")
    )


def _load_pnm(blob: bytes, path: str) -> Raster:
    magic = blob[:2]
    channels = 1 if magic == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and '#' comment lines between header fields
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnsupportedFormatError(f"{path}: truncated PNM header")
        fields.append(blob[start:pos])
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise UnsupportedFormatError(f"{path}: malformed PNM header") from exc
    if maxval != 255:
        raise UnsupportedFormatError(
            f"{path}: PNM maxval {maxval} unsupported (only 255)"
        )
    pos += 1  # single whitespace byte after maxval
    expected = width * height * channels
    data = blob[pos : pos + expected]
    if len(data) != expected:
        raise UnsupportedFormatError(f"{path}: PNM pixel data truncated")
    return Raster(width, height, channels, np.frombuffer(data, dtype=np.uint8))
