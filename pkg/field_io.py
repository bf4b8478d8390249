"""
Field and raster serialization
Binary container, CSV (x, y, re, im) and binary PGM (P5)
"""
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from fields import FIELD_KINDS, Field, Grid, RasterSet, Square

logger = logging.getLogger(__name__)

MAGIC = b'HWF1'
# center re, center im, half_edge, n, kind code
HEADER = struct.Struct('<4sdddq8s')

PathLike = Union[str, Path]


def write_field(path: PathLike, f: Field) -> Path:
    """Write a field to the binary container; complex payloads interleave re/im"""
    path = Path(path)
    sq = f.grid.square
    kind = f.kind.encode('ascii').ljust(8, b'\0')
    header = HEADER.pack(MAGIC, sq.center.real, sq.center.imag, sq.half_edge, f.grid.n, kind)
    if np.iscomplexobj(f.values):
        payload = np.stack([f.values.real, f.values.imag], axis=-1)
    else:
        payload = f.values
    with open(path, 'wb') as handle:
        handle.write(header)
        handle.write(np.ascontiguousarray(payload, dtype='<f8').tobytes())
    logger.debug(f"Wrote {f.kind} field ({f.grid.n}^2) to {path}")
    return path


def read_field(path: PathLike) -> Field:
    """Read a field written by write_field"""
    data = Path(path).read_bytes()
    magic, cre, cim, half_edge, n, kind = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path} is not a field container")
    kind = kind.rstrip(b'\0').decode('ascii')
    if kind not in FIELD_KINDS:
        raise ValueError(f"unknown field kind {kind!r} in {path}")
    grid = Grid(Square(complex(cre, cim), half_edge), int(n))
    payload = np.frombuffer(data, dtype='<f8', offset=HEADER.size)
    if kind == 'complex':
        pairs = payload.reshape(grid.n, grid.n, 2)
        values = pairs[..., 0] + 1j * pairs[..., 1]
    else:
        values = payload.reshape(grid.n, grid.n)
    return FIELD_KINDS[kind](grid, values)


def field_to_frame(f: Field) -> pd.DataFrame:
    Z = f.grid.Z
    values = np.asarray(f.values)
    return pd.DataFrame({
        'x': Z.real.ravel(),
        'y': Z.imag.ravel(),
        're': np.real(values).ravel(),
        'im': np.imag(values).ravel() if np.iscomplexobj(values) else np.zeros(values.size),
    })


def write_field_csv(path: PathLike, f: Field) -> Path:
    path = Path(path)
    field_to_frame(f).to_csv(path, index=False)
    return path


def _write_pgm(path: Path, pixels: np.ndarray) -> Path:
    # rows are written top to bottom, so flip y
    image = np.ascontiguousarray(pixels[::-1, :], dtype=np.uint8)
    with open(path, 'wb') as handle:
        handle.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode('ascii'))
        handle.write(image.tobytes())
    return path


def write_raster_pgm(path: PathLike, s: RasterSet) -> Path:
    """Raster set as P5 image, 255 = member"""
    return _write_pgm(Path(path), np.where(s.mask, 255, 0))


def write_heatmap_pgm(path: PathLike, f: Field) -> Path:
    """Finite range of |f| (or of the log values of a log field) scaled to 0..255"""
    values = np.asarray(f.values) if f.kind == 'logreal' else np.abs(f.values)
    finite = np.isfinite(values)
    pixels = np.zeros(values.shape)
    if finite.any():
        lo, hi = values[finite].min(), values[finite].max()
        span = hi - lo if hi > lo else 1.0
        pixels[finite] = np.round(255.0 * (values[finite] - lo) / span)
    pixels[np.isposinf(values)] = 255
    return _write_pgm(Path(path), pixels)


def read_pgm(path: PathLike) -> np.ndarray:
    """Pixels of a P5 file written by this module, y axis pointing up"""
    data = Path(path).read_bytes()
    parts = data.split(b'\n', 3)
    if parts[0] != b'P5':
        raise ValueError(f"{path} is not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width)
    return pixels[::-1, :]
