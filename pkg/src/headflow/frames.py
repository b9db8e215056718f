"""Raster frame types and frame acquisition.

Covers the binary PNM subset used throughout the pipeline (P5 grayscale,
P6 color, maxval 255), RGB-to-luma conversion, and two frame sources:
a directory of numbered images and a headerless raw byte stream with
declared dimensions.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Rec.601 luma weights.
LUMA_R = 0.299
LUMA_G = 0.587
LUMA_B = 0.114

PNM_EXTENSIONS = (".pgm", ".ppm", ".pnm")

_WHITESPACE = b" \t\n\r\x0b\x0c"


class PnmError(ValueError):
    """Base class for malformed PNM input."""


class PnmMagicError(PnmError):
    """Input does not start with a supported magic number (P5 or P6)."""


class PnmMaxvalError(PnmError):
    """Header declares a maximum sample value other than 255."""


class PnmTruncatedError(PnmError):
    """Pixel payload is shorter than width * height * channels bytes."""


class RawStreamTruncatedError(ValueError):
    """A raw frame stream ended partway through a frame."""

    def __init__(self, offset: int, expected: int, got: int):
        self.offset = offset
        self.expected = expected
        self.got = got
        super().__init__(
            f"raw stream truncated at byte offset {offset}: "
            f"expected a {expected}-byte frame, got {got} bytes"
        )


@dataclass(frozen=True)
class Frame:
    """One decoded video frame.

    data holds row-major, channel-interleaved 8-bit samples with shape
    (height, width, channels). channels is 1 (grayscale) or 3 (RGB).
    index is the frame's position in its source sequence.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray
    index: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame dimensions must be positive, got {self.width}x{self.height}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        data = np.asarray(self.data, dtype=np.uint8)
        if data.size != self.width * self.height * self.channels:
            raise ValueError(
                f"frame data has {data.size} samples, expected "
                f"{self.width * self.height * self.channels}"
            )
        data = data.reshape(self.height, self.width, self.channels)
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class GrayFrame:
    """Single-channel frame with real-valued brightness in [0, 255]."""

    width: int
    height: int
    data: np.ndarray
    index: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.height, self.width):
            raise ValueError(
                f"gray data shape {data.shape} does not match "
                f"{self.height}x{self.width}"
            )
        object.__setattr__(self, "data", data)


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Scan the next whitespace-delimited header token, skipping comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos:pos + 1] not in _WHITESPACE and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PnmTruncatedError("header ended before all fields were read")
    return buf[start:pos], pos


def decode_pnm(data: bytes, index: int = 0) -> Frame:
    """Decode a binary PGM (P5) or PPM (P6) image.

    Header comments are accepted. Only maxval 255 is supported; anything
    else raises PnmMaxvalError. A payload shorter than the header promises
    raises PnmTruncatedError.
    """
    if len(data) < 2:
        raise PnmMagicError("input shorter than a PNM magic number")
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise PnmMagicError(f"unsupported magic {magic!r}, expected P5 or P6")

    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _next_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise PnmError(f"non-numeric header field {token!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PnmError(f"non-positive dimensions {width}x{height}")
    if maxval != 255:
        raise PnmMaxvalError(f"unsupported maxval {maxval}, only 255 is handled")

    # Exactly one whitespace byte separates the header from the payload.
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise PnmTruncatedError("missing separator between header and pixel data")
    pos += 1

    expected = width * height * channels
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise PnmTruncatedError(
            f"pixel payload has {len(payload)} bytes, expected {expected}"
        )
    samples = np.frombuffer(payload, dtype=np.uint8)
    return Frame(width, height, channels, samples, index=index)


def encode_pnm(frame: Frame) -> bytes:
    """Encode a frame as binary PGM or PPM with maxval 255.

    The emitted header is canonical: magic, newline, "width height",
    newline, maxval, newline. Comments are never written, so encoding
    is byte-deterministic.
    """
    magic = b"P5" if frame.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (frame.width, frame.height)
    return header + frame.data.tobytes()


def to_gray(frame: Frame) -> GrayFrame:
    """Convert a frame to luma using Rec.601 weights, rounding half up.

    1-channel input passes through unchanged, so the conversion is
    idempotent.
    """
    if frame.channels == 1:
        data = frame.data[:, :, 0].astype(np.float64)
    else:
        rgb = frame.data.astype(np.float64)
        luma = LUMA_R * rgb[:, :, 0] + LUMA_G * rgb[:, :, 1] + LUMA_B * rgb[:, :, 2]
        data = np.floor(luma + 0.5)
    return GrayFrame(frame.width, frame.height, data, index=frame.index)


class FrameSource:
    """Sequential frame reader over a directory of images or a raw stream.

    Frames carry consecutive indices starting at zero. Exhaustion is
    signaled by next_frame() returning None (or ordinary iterator stop),
    never by an exception; a partially delivered raw frame is an error.
    """

    def __init__(self):
        self._index = 0

    @staticmethod
    def from_directory(path: str | Path) -> "DirectorySource":
        return DirectorySource(path)

    @staticmethod
    def from_raw(stream, width: int, height: int, channels: int = 3) -> "RawStreamSource":
        return RawStreamSource(stream, width, height, channels)

    def next_frame(self) -> Frame | None:
        raise NotImplementedError

    def __iter__(self):
        while True:
            frame = self.next_frame()
            if frame is None:
                return
            yield frame


class DirectorySource(FrameSource):
    """Reads *.pgm / *.ppm files from a directory in lexicographic name order."""

    def __init__(self, path: str | Path):
        super().__init__()
        self.path = Path(path)
        if not self.path.is_dir():
            raise FileNotFoundError(f"not a directory: {self.path}")
        self.files = sorted(
            p for p in self.path.iterdir()
            if p.is_file() and p.suffix.lower() in PNM_EXTENSIONS
        )

    def next_frame(self) -> Frame | None:
        if self._index >= len(self.files):
            return None
        raw = self.files[self._index].read_bytes()
        frame = decode_pnm(raw, index=self._index)
        self._index += 1
        return frame


class RawStreamSource(FrameSource):
    """Reads headerless frames of a declared geometry from a binary stream."""

    def __init__(self, stream, width: int, height: int, channels: int = 3):
        super().__init__()
        if channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {channels}")
        if width < 1 or height < 1:
            raise ValueError(f"dimensions must be positive, got {width}x{height}")
        self.stream = stream
        self.width = width
        self.height = height
        self.channels = channels
        self._offset = 0

    def next_frame(self) -> Frame | None:
        frame_size = self.width * self.height * self.channels
        chunk = self.stream.read(frame_size)
        if not chunk:
            return None
        if len(chunk) < frame_size:
            raise RawStreamTruncatedError(self._offset, frame_size, len(chunk))
        frame = Frame(
            self.width, self.height, self.channels,
            np.frombuffer(chunk, dtype=np.uint8), index=self._index,
        )
        self._offset += frame_size
        self._index += 1
        return frame
