"""
Tests for field and raster serialization
"""
import numpy as np
import pandas as pd
import pytest

from field_io import (field_to_frame, read_field, read_pgm, write_field, write_field_csv, write_heatmap_pgm,
                      write_raster_pgm)
from fields import Grid, LogField, RasterSet, Square, sample


def test_complex_field_roundtrip(tmp_path):
    """Test that a complex field survives the binary container bit for bit"""
    f = sample(Square(0.5 - 1j, 2.0), 9, lambda z: z * z + 1j)
    back = read_field(write_field(tmp_path / 'f.bin', f))
    assert back.kind == 'complex'
    assert back.grid == f.grid
    assert np.array_equal(back.values, f.values)


def test_log_field_keeps_zeros(tmp_path):
    """Test that -inf entries of a log field are preserved"""
    grid = Grid(Square(0j, 1.0), 5)
    values = np.zeros(grid.shape)
    values[2, 2] = -np.inf
    back = read_field(write_field(tmp_path / 'u.bin', LogField(grid, values)))
    assert back.kind == 'logreal'
    assert back.zero_set().count == 1


def test_read_field_rejects_other_files(tmp_path):
    """Test that a file without the container magic is refused"""
    path = tmp_path / 'junk.bin'
    path.write_bytes(b'\0' * 64)
    with pytest.raises(ValueError):
        read_field(path)


def test_field_csv_columns(tmp_path):
    """Test the x, y, re, im layout of the CSV export"""
    f = sample(Square(0j, 1.0), 3, lambda z: z)
    frame = field_to_frame(f)
    assert list(frame.columns) == ['x', 'y', 're', 'im']
    assert len(frame) == 9
    assert np.allclose(frame['re'], frame['x'])
    assert np.allclose(frame['im'], frame['y'])
    written = pd.read_csv(write_field_csv(tmp_path / 'f.csv', f))
    assert np.allclose(written.values, frame.values)


def test_raster_pgm_orientation(tmp_path):
    """Test that member nodes are white and that y points up after reading"""
    grid = Grid(Square(0j, 1.0), 4)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[0, 0] = True  # bottom left
    path = write_raster_pgm(tmp_path / 's.pgm', RasterSet(grid, mask))
    raw = path.read_bytes()
    assert raw.startswith(b'P5\n4 4\n255\n')
    pixels = read_pgm(path)
    assert pixels[0, 0] == 255
    assert pixels.sum() == 255
    # file rows run top to bottom
    assert raw[-4] == 255


def test_heatmap_pgm_range(tmp_path):
    """Test that the heatmap spans 0..255 over the finite values"""
    f = sample(Square(0j, 1.0), 5, lambda z: np.real(z) + 1.0)
    pixels = read_pgm(write_heatmap_pgm(tmp_path / 'h.pgm', f))
    assert pixels.min() == 0
    assert pixels.max() == 255
    assert pixels[0, 0] == 0 and pixels[0, -1] == 255
