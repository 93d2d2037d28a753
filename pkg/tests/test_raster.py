import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gridpop.raster import (
    AsciiGridError, NoOverlapError, Raster, TileGrid, raster_from_tiles, read_ascii_grid,
    read_ascii_header, resample_any, resample_average, resample_nearest, sidecar_path,
    write_ascii_grid,
)


def write(tmp_path, text, name="g.asc"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_read_single_cell(tmp_path):
    p = write(tmp_path, "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 100\nNODATA_value -9999\n5\n")
    r = read_ascii_grid(p)
    assert (r.width, r.height, r.cell_size) == (1, 1, 100)
    assert r.values.tolist() == [[5.0]]
    assert r.origin_y == 100.0


def test_read_marks_nodata(tmp_path):
    p = write(tmp_path, "NCOLS 2\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\nnodata_value -9999\n1 -9999\n")
    r = read_ascii_grid(p)
    assert r.nodata_mask.tolist() == [[False, True]]
    assert np.isnan(r.masked()[0, 1])


def test_short_row_names_line(tmp_path):
    p = write(tmp_path, "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n4 5\n")
    with pytest.raises(AsciiGridError) as err:
        read_ascii_grid(p)
    assert err.value.line == 7
    assert "data row 2" in str(err.value)


@pytest.mark.parametrize("text,line", [
    ("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize x\n1\n", 5),
    ("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nabc\n", 6),
    ("ncols 1\nnrows 1\nwhat 0\nyllcorner 0\ncellsize 1\n1\n", 3),
    ("ncols 1\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1\n", 6),
])
def test_malformed_files_report_line(tmp_path, text, line):
    with pytest.raises(AsciiGridError) as err:
        read_ascii_grid(write(tmp_path, text))
    assert err.value.line == line


def test_non_numeric_token(tmp_path):
    p = write(tmp_path, "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 zz\n")
    with pytest.raises(AsciiGridError, match="zz"):
        read_ascii_grid(p)


def test_cell_center_header(tmp_path):
    p = write(tmp_path, "ncols 1\nnrows 1\nxllcenter 5\nyllcenter 5\ncellsize 10\n1\n")
    r = read_ascii_grid(p)
    assert (r.origin_x, r.origin_y) == (0.0, 10.0)


def test_roundtrip_with_sidecar(tmp_path, rng):
    vals = rng.standard_normal((4, 3)) * 1e3
    vals[1, 2] = -9999
    r = Raster(vals, 500000.123, 8000000.7, 30.0, band_name="b1", frame="EPSG:32736", kind="continuous")
    p = tmp_path / "b1.asc"
    write_ascii_grid(r, p)
    assert "-9999" in p.read_text().splitlines()[7]
    back = read_ascii_grid(p)
    np.testing.assert_array_equal(back.values, r.values)
    assert (back.origin_x, back.origin_y, back.cell_size) == (r.origin_x, r.origin_y, r.cell_size)
    assert (back.band_name, back.frame, back.kind) == ("b1", "EPSG:32736", "continuous")
    assert json.loads(sidecar_path(p).read_text())["frame"] == "EPSG:32736"
    head = read_ascii_header(p)
    assert head["bounds"] == back.bounds


def test_empty_raster_rejected():
    with pytest.raises(ValueError):
        Raster(np.empty((0, 3)), 0.0, 0.0, 1.0)


def test_non_finite_values_rejected():
    with pytest.raises(ValueError):
        Raster(np.array([[np.inf]]), 0.0, 0.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
           elements=st.floats(-1e6, 1e6, allow_nan=False)),
    st.floats(-1e7, 1e7, allow_nan=False),
    st.floats(-1e7, 1e7, allow_nan=False),
    st.sampled_from([0.25, 0.5, 1.0, 30.0, 100.0, 750.0, 0.1]),
)
def test_roundtrip_property(tmp_path_factory, values, ox, oy, cs):
    p = tmp_path_factory.mktemp("rt") / "r.asc"
    values = np.where(values == -9999, 0.0, values)
    r = Raster(values, ox, oy, cs)
    write_ascii_grid(r, p)
    back = read_ascii_grid(p)
    np.testing.assert_array_equal(back.values, values)
    assert back.origin_x == ox and back.origin_y == oy and back.cell_size == cs


def test_tile_grid_mapping():
    g = TileGrid(0.0, 300.0, 4, 3, 100.0, "A")
    ids = np.arange(g.n_tiles)
    row, col = g.row_col(ids)
    np.testing.assert_array_equal(g.tile_id(row, col), ids)
    # half-open: the west and north edges belong to the tile
    r, c, inside = g.locate([100.0, 99.999, 0.0, 400.0], [200.0, 200.0, 0.0, 300.0])
    assert list(zip(r, c)) == [(1, 1), (1, 0), (3, 0), (0, 4)]
    assert inside.tolist() == [True, True, False, False]
    assert TileGrid.from_dict(g.to_dict()) == g


def test_average_hand_mean():
    r = Raster(np.array([[1.0, 2.0], [3.0, 4.0]]), 0.0, 100.0, 50.0)
    g = TileGrid(0.0, 100.0, 1, 1)
    assert resample_average(r, g)[0, 0] == 2.5


def test_average_nodata_and_constant():
    r = Raster(np.full((4, 4), -9999.0), 0.0, 200.0, 50.0)
    r.values[2:, 2:] = 7.0
    out = resample_average(r, TileGrid(0.0, 200.0, 2, 2))
    assert np.isnan(out[0, 0]) and np.isnan(out[0, 1]) and np.isnan(out[1, 0])
    assert out[1, 1] == 7.0


def test_no_overlap_error():
    r = Raster(np.ones((2, 2)), 1e6, 1e6, 10.0)
    for fn in (resample_average, resample_nearest):
        with pytest.raises(NoOverlapError):
            fn(r, TileGrid(0.0, 100.0, 1, 1))


def test_nearest_coarse_cell():
    r = Raster(np.array([[3.2]]), -100.0, 700.0, 750.0)
    g = TileGrid(0.0, 600.0, 6, 6)
    assert (resample_nearest(r, g) == 3.2).all()


def test_nearest_outside_is_nodata():
    r = Raster(np.array([[1.0]]), 0.0, 100.0, 100.0)
    out = resample_nearest(r, TileGrid(0.0, 100.0, 2, 1))
    assert out[0, 0] == 1.0 and np.isnan(out[0, 1])


def test_nearest_boundary_uses_half_open_box():
    # tile center x=50 is the edge between cell 0 [0,50) and cell 1 [50,100)
    r = Raster(np.array([[1.0, 2.0]]), 0.0, 100.0, 50.0)
    assert resample_nearest(r, TileGrid(0.0, 125.0, 1, 1))[0, 0] == 2.0
    # center y=50 is the edge between row 0 (50,100] and row 1 (0,50]
    r = Raster(np.array([[1.0], [2.0]]), 0.0, 100.0, 50.0)
    assert resample_nearest(r, TileGrid(-25.0, 100.0, 1, 1))[0, 0] == 2.0


def test_nearest_exact_tiling_block_values(rng):
    vals = rng.integers(0, 9, size=(3, 5)).astype(float)
    r = Raster(vals, 10.0, 20.0, 100.0)
    np.testing.assert_array_equal(resample_nearest(r, TileGrid(10.0, 20.0, 5, 3)), vals)


def test_any_examples():
    g = TileGrid(0.0, 100.0, 1, 1)
    r = Raster(np.array([[0.0, 0.0], [1.0, 0.0]]), 0.0, 100.0, 50.0)
    assert resample_any(r, g)[0, 0] == 1.0
    r.values[:] = 0
    assert resample_any(r, g)[0, 0] == 0.0
    r.values[:] = -9999
    assert resample_any(r, g)[0, 0] == 0.0  # nodata counts as 0
    # a tile with no cell centers at all is nodata
    out = resample_any(Raster(np.ones((2, 2)), 0.0, 100.0, 50.0), TileGrid(0.0, 100.0, 2, 1))
    assert np.isnan(out[0, 1])


def test_any_rejects_non_binary():
    with pytest.raises(ValueError):
        resample_any(Raster(np.array([[2.0]]), 0.0, 100.0, 50.0), TileGrid(0.0, 100.0, 1, 1))


def test_average_permutation_invariant(rng):
    vals = rng.random((4, 4))
    g = TileGrid(0.0, 100.0, 1, 1)
    a = resample_average(Raster(vals, 0.0, 100.0, 25.0), g)
    b = resample_average(Raster(rng.permutation(vals.ravel()).reshape(4, 4), 0.0, 100.0, 25.0), g)
    assert abs(a[0, 0] - b[0, 0]) < 1e-15


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.sampled_from([0.0, 1.0, -9999.0])))
def test_any_depends_only_on_ones(vals):
    g = TileGrid(0.0, 60.0, 2, 2, 30.0)
    other = np.where(vals == 1.0, 1.0, np.where(vals == 0.0, -9999.0, 0.0))
    a = resample_any(Raster(vals, 0.0, 60.0, 10.0), g)
    b = resample_any(Raster(other, 0.0, 60.0, 10.0), g)
    np.testing.assert_array_equal(a, b)


def test_raster_from_tiles_nodata():
    g = TileGrid(0.0, 200.0, 2, 2)
    r = raster_from_tiles([1.0, np.nan, 3.0, 4.0], g)
    assert r.nodata_mask.tolist() == [[False, True], [False, False]]
