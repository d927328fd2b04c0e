"""Byte-exact message layout and CRC-framed streaming.

Message layout (little-endian), 60 + 12 M bytes total:

    offset  size  field
    0       4     magic "SGPC"
    4       1     version (1)
    5       1     flags (bit 0: wrapped-azimuth kernel mode)
    6       2     reserved (0)
    8       4     u32 M
    12      24    pose: 6 x f32 (x, y, z, roll, pitch, yaw)
    36      4     f32 r_oc
    40      20    hyperparams: 5 x f32 (sf2, l_theta, l_alpha, rq, sn2)
    60      12M   M triples: 3 x f32 (azimuth, inclination, occupancy)

A stream frame is u32 payload length + payload + u32 CRC-32 over the
payload, adding 8 bytes per message.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .encoder import CompressedObservation
from .geometry import Pose
from .kernel import RQHyperparams

MAGIC = b"SGPC"
VERSION = 1
HEADER_SIZE = 60
TRIPLE_SIZE = 12
FRAME_OVERHEAD = 8
FLAG_WRAP_AZIMUTH = 0x01

_HEADER = struct.Struct("<4sBBHI6ff5f")


class WireFormatError(ValueError):
    """Buffer violates the message layout (magic, version, field values)."""


class WireLengthError(WireFormatError):
    """Buffer shorter or longer than the layout demands."""


def message_size(m: int) -> int:
    return HEADER_SIZE + TRIPLE_SIZE * m


def serialize(obs: CompressedObservation) -> bytes:
    """Pack an observation into its 60 + 12M byte wire form."""
    flags = FLAG_WRAP_AZIMUTH if obs.wrap_azimuth else 0
    header = _HEADER.pack(
        MAGIC, VERSION, flags, 0, obs.m,
        *np.asarray(obs.pose.as_array(), dtype=np.float32),
        np.float32(obs.r_oc),
        *np.asarray(obs.hyperparams.as_array(), dtype=np.float32),
    )
    triples = np.ascontiguousarray(obs.triples, dtype="<f4")
    return header + triples.tobytes()


def deserialize(buffer: bytes) -> CompressedObservation:
    """Exact inverse of :func:`serialize`; f32 values survive bit-for-bit."""
    buffer = bytes(buffer)
    if len(buffer) < HEADER_SIZE:
        raise WireLengthError(
            f"buffer of {len(buffer)} bytes shorter than the {HEADER_SIZE}-byte header"
        )
    magic, version, flags, _, m, *scalars = _HEADER.unpack(buffer[:HEADER_SIZE])
    if magic != MAGIC:
        raise WireFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise WireFormatError(f"unsupported version {version}")
    expected = message_size(m)
    if len(buffer) != expected:
        raise WireLengthError(
            f"expected {expected} bytes for M={m}, got {len(buffer)}"
        )
    pose = Pose.from_array(scalars[0:6])
    r_oc = scalars[6]
    hyperparams = RQHyperparams.from_array(scalars[7:12])
    triples = np.frombuffer(buffer[HEADER_SIZE:], dtype="<f4").reshape(m, 3)
    return CompressedObservation(
        pose=pose,
        r_oc=r_oc,
        hyperparams=hyperparams,
        triples=triples.copy(),
        wrap_azimuth=bool(flags & FLAG_WRAP_AZIMUTH),
    )


def encode_frame(payload: bytes) -> bytes:
    """Length-prefix the payload and append its CRC-32."""
    return (
        struct.pack("<I", len(payload))
        + payload
        + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    )


def decode_frame(frame: bytes) -> bytes:
    """Strip framing, verifying length and CRC; returns the payload."""
    if len(frame) < FRAME_OVERHEAD:
        raise WireLengthError(f"frame of {len(frame)} bytes shorter than framing")
    (length,) = struct.unpack("<I", frame[:4])
    if len(frame) != length + FRAME_OVERHEAD:
        raise WireLengthError(
            f"expected {length + FRAME_OVERHEAD} framed bytes, got {len(frame)}"
        )
    payload = frame[4:4 + length]
    (crc,) = struct.unpack("<I", frame[4 + length:])
    if crc != zlib.crc32(payload) & 0xFFFFFFFF:
        raise WireFormatError("CRC mismatch")
    return payload


def save_observation(path, obs: CompressedObservation) -> None:
    """Write a single unframed message to a .sgpc file."""
    with open(path, "wb") as fh:
        fh.write(serialize(obs))


def load_observation(path) -> CompressedObservation:
    """Read a single unframed message from a .sgpc file."""
    with open(path, "rb") as fh:
        return deserialize(fh.read())
