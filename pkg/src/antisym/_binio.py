"""Little-endian record helpers shared by the binary file formats."""
from __future__ import annotations

import struct
import zlib

import numpy as np


class FormatError(ValueError):
    """A binary file is truncated, corrupted or of an unknown version."""


class Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf = memoryview(buf)
        self.pos = 0
        self.what = what

    def take(self, size: int) -> memoryview:
        if self.pos + size > len(self.buf):
            raise FormatError(f"{self.what}: truncated at byte {self.pos} (need {size} more)")
        out = self.buf[self.pos:self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str):
        vals = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return vals[0] if len(vals) == 1 else vals

    def doubles(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)

    def expect_magic(self, magic: bytes) -> None:
        got = bytes(self.take(len(magic)))
        if got != magic:
            raise FormatError(f"{self.what}: bad magic {got!r}, expected {magic!r}")

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(f"{self.what}: {len(self.buf) - self.pos} trailing bytes")


def le_doubles(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def with_crc(payload: bytes) -> bytes:
    return payload + struct.pack("<I", zlib.crc32(payload))


def strip_crc(buf: bytes, what: str) -> bytes:
    if len(buf) < 4:
        raise FormatError(f"{what}: file too short ({len(buf)} bytes)")
    payload, tail = buf[:-4], buf[-4:]
    if struct.unpack("<I", tail)[0] != zlib.crc32(payload):
        raise FormatError(f"{what}: checksum mismatch")
    return payload
