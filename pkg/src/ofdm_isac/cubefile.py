"""Binary radar-cube file format for exchanging receptions with external
measurement setups.

Layout (little-endian):

    offset  field
    0       magic ``OFDMCUBE`` (8 bytes)
    8       version, u16
    10      NR, u32
    14      N, u32
    18      M, u32
    22      subcarrier spacing df (Hz), f64
    30      carrier frequency fc (Hz), f64
    38      payload: NR * N * M samples as interleaved float32
            (real, imag) pairs, antenna-major C order (antenna,
            subcarrier, symbol)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import RadarCube

MAGIC = b"OFDMCUBE"
VERSION = 1
_HEADER = struct.Struct("<8sHIIIdd")
HEADER_SIZE = _HEADER.size  # 38 bytes

# refuse cubes whose payload would exceed 8 GiB; catches corrupt headers
_MAX_SAMPLES = 1 << 30


class CubeFormatError(IOError):
    """Raised for malformed cube files; messages name the bad offset."""


@dataclass(frozen=True)
class CubeMeta:
    version: int
    nr: int
    n_subcarriers: int
    n_symbols: int
    df: float
    fc: float


def export_cube(samples: np.ndarray, df: float, fc: float,
                path: str | Path) -> None:
    """Write an (NR, N, M) complex tensor to a cube file.

    Samples are stored as float32 pairs, so float64 cubes are rounded.
    """
    if samples.ndim != 3:
        raise ValueError(f"expected an (NR, N, M) tensor, got shape "
                         f"{samples.shape}")
    nr, n, m = samples.shape
    header = _HEADER.pack(MAGIC, VERSION, nr, n, m, float(df), float(fc))
    payload = np.ascontiguousarray(samples, dtype=np.complex64)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def ingest_cube(path: str | Path) -> tuple[RadarCube, CubeMeta]:
    """Read and validate a cube file.

    The returned cube carries the file's samples as complex64; the noise
    variance is not part of the format and is reported as NaN.
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise CubeFormatError(
            f"{path}: truncated header at offset {len(raw)} "
            f"(need {HEADER_SIZE} bytes)")
    magic, version, nr, n, m, df, fc = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CubeFormatError(f"{path}: not a cube file (bad magic at "
                              f"offset 0: {magic!r})")
    if version != VERSION:
        raise CubeFormatError(f"{path}: unsupported version {version} at "
                              f"offset 8")
    count = nr * n * m
    if min(nr, n, m) < 1 or count > _MAX_SAMPLES:
        raise CubeFormatError(
            f"{path}: implausible dimensions NR={nr} N={n} M={m} at "
            f"offset 10")
    expected = HEADER_SIZE + 8 * count
    if len(raw) < expected:
        raise CubeFormatError(
            f"{path}: truncated payload at offset {len(raw)} "
            f"(expected {expected} bytes)")
    if len(raw) > expected:
        raise CubeFormatError(
            f"{path}: {len(raw) - expected} trailing bytes at offset "
            f"{expected}")
    flat = np.frombuffer(raw, dtype="<c8", count=count, offset=HEADER_SIZE)
    samples = flat.reshape(nr, n, m)
    samples.setflags(write=False)
    meta = CubeMeta(version=version, nr=nr, n_subcarriers=n, n_symbols=m,
                    df=df, fc=fc)
    return RadarCube(samples=samples, noise_var=float("nan")), meta
