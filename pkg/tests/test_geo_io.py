import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridpop.geo_io import (
    PolylineSet, VectorFormatError, parse_lines_geojson, parse_points_csv, rasterize_lines,
)
from gridpop.raster import TileGrid


def test_points_with_attribute(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,y,persons\n100,200,3\n")
    recs = parse_points_csv(p)
    assert len(recs) == 1
    assert (recs[0].x, recs[0].y, recs[0].attributes["persons"]) == (100.0, 200.0, 3)


def test_points_header_only(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,y\n")
    assert parse_points_csv(p) == []


def test_points_bad_coordinate_row(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,y\nabc,2\n")
    with pytest.raises(VectorFormatError, match="row 1"):
        parse_points_csv(p)


def test_points_missing_column(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,z\n1,2\n")
    with pytest.raises(VectorFormatError, match="'y'"):
        parse_points_csv(p)


def test_points_text_attribute_kept(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,y,psu,w\n1,2,A-7,0.5\n")
    assert parse_points_csv(p)[0].attributes == {"psu": "A-7", "w": 0.5}


def geojson(tmp_path, doc):
    p = tmp_path / "roads.geojson"
    p.write_text(json.dumps(doc))
    return p


def test_linestring(tmp_path):
    doc = {"type": "FeatureCollection", "features": [{"type": "Feature", "properties": {"highway": "primary"},
           "geometry": {"type": "LineString", "coordinates": [[0, 0], [1, 1], [2, 0]]}}]}
    lines = parse_lines_geojson(geojson(tmp_path, doc))
    assert len(lines) == 1 and lines.lines[0].shape == (3, 2)
    assert lines.tags == ["primary"]


def test_multilinestring_flattened(tmp_path):
    doc = {"type": "Feature", "properties": {}, "geometry": {
        "type": "MultiLineString", "coordinates": [[[0, 0], [1, 0]], [[2, 2], [3, 3]]]}}
    assert len(parse_lines_geojson(geojson(tmp_path, doc))) == 2


def test_polygon_rejected(tmp_path):
    doc = {"type": "FeatureCollection", "features": [{"type": "Feature", "properties": {},
           "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 0]]]}}]}
    with pytest.raises(VectorFormatError, match="Polygon"):
        parse_lines_geojson(geojson(tmp_path, doc))


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.geojson"
    p.write_text("{not json")
    with pytest.raises(VectorFormatError, match="malformed JSON"):
        parse_lines_geojson(p)


GRID = TileGrid(0.0, 500.0, 5, 5, 100.0)


def test_horizontal_segment_three_tiles():
    out = rasterize_lines(PolylineSet([[(20.0, 250.0), (280.0, 250.0)]]), GRID)
    assert out.sum() == 3
    assert out[2, :3].tolist() == [1.0, 1.0, 1.0]


def test_segment_inside_one_tile():
    out = rasterize_lines(PolylineSet([[(110.0, 390.0), (150.0, 320.0)]]), GRID)
    assert out.sum() == 1 and out[1, 1] == 1


def test_empty_polyline_set():
    assert not rasterize_lines(PolylineSet([]), GRID).any()


def test_polyline_needs_two_vertices():
    with pytest.raises(ValueError):
        PolylineSet([[(0.0, 0.0)]])


coord = st.floats(-50, 550, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(coord, coord, coord, coord), min_size=1, max_size=4), st.tuples(coord, coord, coord, coord))
def test_adding_a_line_never_unsets(segs, extra):
    lines = [[(a, b), (c, d)] for a, b, c, d in segs]
    before = rasterize_lines(PolylineSet(lines), GRID)
    after = rasterize_lines(PolylineSet(lines + [[extra[:2], extra[2:]]]), GRID)
    assert (after >= before).all()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(coord, coord), min_size=2, max_size=6))
def test_reversed_polyline_identical(pts):
    a = rasterize_lines(PolylineSet([pts]), GRID)
    b = rasterize_lines(PolylineSet([pts[::-1]]), GRID)
    np.testing.assert_array_equal(a, b)
