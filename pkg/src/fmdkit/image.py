"""Image container, file I/O and cropping.

Pixels are held as a read-only ``float64`` array of shape
``(height, width, channels)``, which is row-major and channel-interleaved when
flattened.  Two on-disk formats are supported:

* binary Netpbm (P5 grey / P6 colour), maxval 255 or 65535, 16-bit samples
  big-endian;
* FMDF, a raw float container: ``b"FMDF"``, then little-endian ``u32``
  version (=1), width, height, channels, followed by the samples as
  little-endian float64.
"""
from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass

import numpy as np

FMDF_MAGIC = b"FMDF"
FMDF_VERSION = 1
_FMDF_HEADER = struct.Struct("<4sIIII")


class ImageFormatError(ValueError):
    """Raised for malformed or truncated image files."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class Format(enum.Enum):
    PGM8 = "pgm8"
    PGM16 = "pgm16"
    FMDF = "fmdf"


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable floating-point raster with a declared peak value."""

    data: np.ndarray
    peak: float = 1.0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"image data must be 2-D or 3-D, got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValueError("image must be at least 1x1")
        if c not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {c}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image samples must be finite")
        peak = float(self.peak)
        if not (peak > 0 and np.isfinite(peak)):
            raise ValueError(f"peak must be positive and finite, got {self.peak}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "peak", peak)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def pixels(self) -> np.ndarray:
        """Flat row-major, channel-interleaved view of the samples."""
        return self.data.reshape(-1)

    def channel(self, k: int) -> np.ndarray:
        return self.data[:, :, k]

    def with_data(self, data) -> "Image":
        """New image sharing this one's peak."""
        return Image(data, self.peak)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.peak == other.peak and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"Image({self.width}x{self.height}x{self.channels}, peak={self.peak:g})"


@dataclass(frozen=True)
class Rect:
    x0: int
    y0: int
    w: int
    h: int


# ---------------------------------------------------------------------------
# reading


def _read_netpbm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        ch = buf[pos : pos + 1]
        if ch == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ImageFormatError("malformed header: unexpected end of file", start)
    return buf[start:pos], pos


def _decode_netpbm(buf: bytes) -> Image:
    magic = buf[:2]
    channels = 1 if magic == b"P5" else 3
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        start = pos
        tok, pos = _read_netpbm_token(buf, pos)
        if not tok.isdigit():
            raise ImageFormatError(f"malformed header: bad {name} {tok!r}", start)
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ImageFormatError("malformed header: zero image dimension", 2)
    if maxval not in (255, 65535):
        raise ImageFormatError(f"malformed header: unsupported maxval {maxval}", pos)
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise ImageFormatError("malformed header: missing separator before raster", pos)
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    need = count * dtype.itemsize
    if len(buf) - pos < need:
        raise ImageFormatError(
            f"truncated pixel payload: expected {need} bytes, found {len(buf) - pos}",
            len(buf),
        )
    raw = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    return Image(raw.reshape(height, width, channels).astype(np.float64), float(maxval))


def _decode_fmdf(buf: bytes, peak: float | None = None) -> Image:
    if len(buf) < _FMDF_HEADER.size:
        raise ImageFormatError("malformed header: file shorter than FMDF header", len(buf))
    magic, version, width, height, channels = _FMDF_HEADER.unpack_from(buf, 0)
    if magic != FMDF_MAGIC:
        raise ImageFormatError("malformed header: bad magic", 0)
    if version != FMDF_VERSION:
        raise ImageFormatError(f"malformed header: unsupported version {version}", 4)
    if width < 1 or height < 1:
        raise ImageFormatError("malformed header: zero image dimension", 8)
    if channels not in (1, 3):
        raise ImageFormatError(f"malformed header: unsupported channel count {channels}", 16)
    count = width * height * channels
    pos = _FMDF_HEADER.size
    if len(buf) - pos < 8 * count:
        raise ImageFormatError(
            f"truncated pixel payload: expected {8 * count} bytes, found {len(buf) - pos}",
            len(buf),
        )
    raw = np.frombuffer(buf, dtype="<f8", count=count, offset=pos)
    if not np.all(np.isfinite(raw)):
        bad = int(np.flatnonzero(~np.isfinite(raw))[0])
        raise ImageFormatError("non-finite sample in FMDF payload", pos + 8 * bad)
    if peak is None:
        peak = infer_peak(raw)
    return Image(raw.reshape(height, width, channels), peak)


def infer_peak(samples) -> float:
    """Smallest of 1, 255, 65535 covering ``samples`` (FMDF stores no peak)."""
    top = float(np.max(samples))
    for peak in (1.0, 255.0, 65535.0):
        if top <= peak:
            return peak
    return top


def decode_image(buf: bytes, peak: float | None = None) -> Image:
    """Decode an in-memory PGM/PPM or FMDF file.

    ``peak`` overrides the inferred peak of FMDF data; Netpbm files always
    take their peak from maxval.
    """
    magic = bytes(buf[:4])
    if magic == FMDF_MAGIC:
        return _decode_fmdf(buf, peak)
    if magic[:2] in (b"P5", b"P6"):
        return _decode_netpbm(buf)
    raise ImageFormatError(f"malformed header: unrecognised magic {magic!r}", 0)


def read_image(path: str | os.PathLike, peak: float | None = None) -> Image:
    """Read a binary PGM/PPM or FMDF file."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise ImageFormatError(f"unreadable file {os.fspath(path)!r}: {exc.strerror}") from exc
    return decode_image(buf, peak)


# ---------------------------------------------------------------------------
# writing


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def encode_image(image: Image, format: Format | str = Format.FMDF) -> bytes:
    fmt = Format(format)
    if fmt is Format.FMDF:
        header = _FMDF_HEADER.pack(
            FMDF_MAGIC, FMDF_VERSION, image.width, image.height, image.channels
        )
        return header + image.data.astype("<f8").tobytes()
    if image.channels != 1:
        raise ValueError(f"{fmt.name} requires a single-channel image, got {image.channels}")
    maxval = 255 if fmt is Format.PGM8 else 65535
    q = np.clip(_round_half_away(image.data[:, :, 0]), 0, maxval)
    dtype = "u1" if maxval == 255 else ">u2"
    header = b"P5\n%d %d\n%d\n" % (image.width, image.height, maxval)
    return header + q.astype(dtype).tobytes()


def write_image(image: Image, path: str | os.PathLike, format: Format | str = Format.FMDF) -> None:
    payload = encode_image(image, format)
    with open(path, "wb") as fh:
        fh.write(payload)


# ---------------------------------------------------------------------------
# geometry


def crop(image: Image, rect: Rect) -> Image:
    if rect.w < 1 or rect.h < 1 or rect.x0 < 0 or rect.y0 < 0:
        raise ValueError(f"invalid crop rectangle {rect}")
    if rect.x0 + rect.w > image.width or rect.y0 + rect.h > image.height:
        raise ValueError(f"crop rectangle {rect} exceeds {image.width}x{image.height} image")
    return image.with_data(image.data[rect.y0 : rect.y0 + rect.h, rect.x0 : rect.x0 + rect.w])


def split_patches(image: Image, patch: int) -> list[Image]:
    """Tile ``image`` into ``patch x patch`` crops in row-major order."""
    if patch < 1 or image.width % patch or image.height % patch:
        raise ValueError(
            f"{image.width}x{image.height} image is not divisible into {patch}x{patch} patches"
        )
    return [
        crop(image, Rect(x0, y0, patch, patch))
        for y0 in range(0, image.height, patch)
        for x0 in range(0, image.width, patch)
    ]
