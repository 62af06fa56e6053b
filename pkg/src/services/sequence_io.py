"""
SGSQ1 keypoint sequence files

Layout (little-endian): magic "SGSQ1", u32 frames, u32 joints, u32 coords, f32 frame rate,
then frames * joints * coords f32 values, frame-major and joint-minor.
"""

import math
import struct
from pathlib import Path

import numpy as np

from src.exceptions import FormatError
from src.models.sequence import SignSequence
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

MAGIC = b"SGSQ1"
HEADER = struct.Struct("<IIIf")
HEADER_SIZE = len(MAGIC) + HEADER.size
MAX_VALUES = 2**31 - 1


def encode_sequence(sequence: SignSequence) -> bytes:
    """
    Pack a sequence into SGSQ1 bytes

    Coordinates are always stored as float32, so float64 sequences lose precision here.
    """
    if sequence.frames.dtype != np.float32:
        logger.debug(f"Casting {sequence.frames.dtype} coordinates to float32 for SGSQ1")
    frames = np.ascontiguousarray(sequence.frames, dtype="<f4")
    t, j, c = frames.shape
    return MAGIC + HEADER.pack(t, j, c, float(sequence.frame_rate)) + frames.tobytes(order="C")


def decode_sequence(data: bytes) -> SignSequence:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise FormatError("not an SGSQ1 sequence (bad magic)", offset=0)
    if len(data) < HEADER_SIZE:
        raise FormatError("truncated header", offset=len(data))
    t, j, c, frame_rate = HEADER.unpack_from(data, len(MAGIC))
    if t == 0:
        raise FormatError("sequence has zero frames", offset=len(MAGIC))
    if j == 0 or c == 0:
        raise FormatError("sequence has an empty joint or coordinate axis", offset=len(MAGIC) + 4)
    count = t * j * c
    if count > MAX_VALUES:
        raise FormatError(f"dimensions {t}x{j}x{c} overflow the value limit", offset=len(MAGIC))
    if not math.isfinite(frame_rate) or frame_rate <= 0:
        raise FormatError(f"invalid frame rate {frame_rate}", offset=len(MAGIC) + 12)
    expected = HEADER_SIZE + 4 * count
    if len(data) < expected:
        raise FormatError(f"truncated payload (expected {expected} bytes, found {len(data)})", offset=len(data))
    if len(data) > expected:
        raise FormatError("trailing bytes after payload", offset=expected)
    frames = np.frombuffer(data, dtype="<f4", count=count, offset=HEADER_SIZE).reshape(t, j, c)
    bad = np.flatnonzero(~np.isfinite(frames.reshape(-1)))
    if bad.size:
        raise FormatError("non-finite coordinate", offset=HEADER_SIZE + 4 * int(bad[0]))
    return SignSequence(frames=frames.astype(np.float32), frame_rate=frame_rate)


def serialize_sequence(sequence: SignSequence, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_sequence(sequence))
    return path


def deserialize_sequence(path: str | Path) -> SignSequence:
    return decode_sequence(Path(path).read_bytes())
