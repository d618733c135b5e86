"""
Persistence for tensors, images, result tables and JSON documents.

Binary formats are little-endian with a 4-byte magic and a u32 version; see
docs/formats.md for the byte layout. Every writer goes through
`atomic_writer`, every reader decodes fully in memory and validates before
returning anything.
"""
import csv
import io
import json
import logging
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Iterable, List, Sequence, Tuple

import numpy as np

from errors import (
    BadMagicError, FormatError, TruncatedFileError, ValidationError, VersionMismatchError
)

logger = logging.getLogger(__name__)

MAGIC_TENSOR = b"GLVT"
MAGIC_CHECKPOINT = b"GLVR"
FORMAT_VERSION = 1
HEADER_SIZE = 8

PIXEL_TOLERANCE = 1e-6


@dataclass(frozen=True)
class FileHeader:
    magic: bytes
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.magic not in (MAGIC_TENSOR, MAGIC_CHECKPOINT):
            raise BadMagicError(f"bad magic {self.magic!r}")
        if self.version != FORMAT_VERSION:
            raise VersionMismatchError(
                f"version mismatch: expected {FORMAT_VERSION}, got {self.version}")

    def pack(self) -> bytes:
        return self.magic + struct.pack("<I", self.version)


def read_header(buf: bytes, expected_magic: bytes, path=None) -> FileHeader:
    """Validate the magic and version at the start of `buf`."""
    if len(buf) < 4 or buf[:4] != expected_magic:
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}, expected {expected_magic!r}", path)
    require(buf, HEADER_SIZE, path)
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"version mismatch: expected {FORMAT_VERSION}, got {version}", path)
    return FileHeader(bytes(buf[:4]), version)


def require(buf: bytes, needed: int, path=None):
    if len(buf) < needed:
        raise TruncatedFileError(needed, len(buf), path)


@contextmanager
def atomic_writer(path, mode: str = "wb"):
    """
    Write to a temporary file next to `path` and rename it into place.

    On any exception the temporary file is removed and `path` is untouched.
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    newline = "" if "b" not in mode else None
    try:
        with os.fdopen(fd, mode, newline=newline) as handle:
            yield handle
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_path, path)
        logger.debug(f"Wrote {path}")
    except BaseException:
        try:
            os.unlink(tmp_path)
        except FileNotFoundError:
            pass
        raise


def read_bytes(path) -> bytes:
    with open(path, "rb") as handle:
        return handle.read()


# Tensors

def encode_tensor(tensor: np.ndarray) -> bytes:
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim == 0:
        raise ValidationError("rank 0 tensors are not allowed")
    if not np.all(np.isfinite(tensor)):
        raise ValidationError("tensor contains non-finite values")
    parts = [FileHeader(MAGIC_TENSOR).pack(), struct.pack("<I", tensor.ndim)]
    parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
    parts.append(np.ascontiguousarray(tensor).astype("<f8").tobytes())
    return b"".join(parts)


def decode_tensor(buf: bytes, path=None) -> np.ndarray:
    read_header(buf, MAGIC_TENSOR, path)
    require(buf, HEADER_SIZE + 4, path)
    (rank,) = struct.unpack_from("<I", buf, HEADER_SIZE)
    if rank == 0:
        raise ValidationError("rank 0 tensors are not allowed", path)
    dims_end = HEADER_SIZE + 4 + 4 * rank
    require(buf, dims_end, path)
    shape = struct.unpack_from(f"<{rank}I", buf, HEADER_SIZE + 4)
    count = int(np.prod(shape, dtype=np.int64))
    expected = dims_end + 8 * count
    require(buf, expected, path)
    if len(buf) > expected:
        raise ValidationError(
            f"trailing bytes: expected {expected} bytes, got {len(buf)}", path)
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=dims_end)
    return data.astype(np.float64).reshape(shape)


def write_tensor(path, tensor: np.ndarray):
    payload = encode_tensor(tensor)
    with atomic_writer(path) as handle:
        handle.write(payload)


def read_tensor(path) -> np.ndarray:
    return decode_tensor(read_bytes(path), path)


# Images

def to_pixels(values: np.ndarray) -> np.ndarray:
    """Map [-1, 1] to bytes with round((v + 1) * 127.5), rounding half up."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError("image contains non-finite values")
    if values.size and (values.min() < -1.0 - PIXEL_TOLERANCE or values.max() > 1.0 + PIXEL_TOLERANCE):
        raise ValidationError(
            f"pixel values must lie in [-1, 1], got [{values.min():.6g}, {values.max():.6g}]")
    scaled = np.floor((values + 1.0) * 127.5 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def encode_image(tensor: np.ndarray) -> bytes:
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim == 2:
        height, width = tensor.shape
        header = f"P5\n{width} {height}\n255\n".encode("ascii")
        return header + to_pixels(tensor).tobytes()
    if tensor.ndim == 3 and tensor.shape[0] == 3:
        _, height, width = tensor.shape
        header = f"P6\n{width} {height}\n255\n".encode("ascii")
        # channel-first in memory, interleaved RGB on disk
        return header + to_pixels(np.transpose(tensor, (1, 2, 0))).tobytes()
    raise ValidationError(f"image tensor must be HxW or 3xHxW, got shape {tensor.shape}")


def write_image_pgm(path, tensor: np.ndarray):
    payload = encode_image(tensor)
    with atomic_writer(path) as handle:
        handle.write(payload)


def read_image_pgm(path) -> np.ndarray:
    """Read a binary PGM/PPM written by `write_image_pgm` back to raw bytes (H x W [x 3])."""
    buf = read_bytes(path)
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedFileError(pos + 1, len(buf), path)
        tokens.append(buf[start:pos])
    pos += 1
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise BadMagicError(f"bad magic {magic!r}, expected P5 or P6", path)
    dims = tokens[1:]
    if not all(token.isdigit() for token in dims):
        raise ValidationError(f"non-numeric image header {dims!r}", path)
    width, height, maxval = (int(token) for token in dims)
    if maxval != 255:
        raise ValidationError(f"maxval must be 255, got {maxval}", path)
    channels = 3 if magic == b"P6" else 1
    expected = pos + width * height * channels
    require(buf, expected, path)
    pixels = np.frombuffer(buf, dtype=np.uint8, count=width * height * channels, offset=pos)
    return pixels.reshape((height, width, channels) if channels == 3 else (height, width))


# Tables and documents

def encode_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return out.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    text = encode_csv(header, rows)
    with atomic_writer(path, "w") as handle:
        handle.write(text)


def read_csv(path) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        rows = list(reader)
    if not rows:
        raise FormatError("empty CSV file", path)
    return rows[0], rows[1:]


def write_text(path, text: str):
    with atomic_writer(path, "w") as handle:
        handle.write(text)


def write_json(path, document: Any):
    text = json.dumps(document, indent=2, sort_keys=True) + "\n"
    write_text(path, text)


def read_json(path) -> Any:
    try:
        with open(path) as handle:
            return json.load(handle)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e}", path)
