import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwplan.scenario import (Role, ScenarioError, dist2d, dist3d, generate_building_surface_grid,
                              generate_gnb_candidates, generate_service_grid, load_scenario,
                              points_in_polygon, reference_scenario, scenario_from_dict,
                              scenario_to_dict)


def box(bid, x0, y0, x1, y1, h):
    return {"id": bid, "height_m": h, "footprint": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]}


def test_reference_heights_and_counts():
    s = reference_scenario()
    assert [b.height for b in s.buildings] == [25, 20, 25, 35, 25, 20]
    assert len(generate_service_grid(s)) == 3704
    assert len(generate_gnb_candidates(s)) == 418


def test_open_field():
    s = scenario_from_dict({"bounds": [0, 0, 100, 100], "buildings": []})
    assert s.buildings == ()
    g = generate_service_grid(scenario_from_dict({"bounds": [0, 0, 10, 10]}))
    assert len(g) == 100 and np.all(g.points[:, 2] == 1.5)
    assert g.role == Role.SERVICE_AREA


def test_fully_covered_bounds():
    s = scenario_from_dict({"bounds": [0, 0, 10, 10], "buildings": [box("A", 0, 0, 10, 10, 5)]})
    assert len(generate_service_grid(s)) == 0


@pytest.mark.parametrize("bad,needle", [
    ({"buildings": [box("tall", 1, 1, 3, 3, -1)]}, "tall"),
    ({"buildings": [box("A", 1, 1, 5, 5, 5), box("B", 4, 4, 8, 8, 5)]}, "overlap"),
    ({"buildings": [box("far", 8, 8, 12, 12, 5)]}, "far"),
])
def test_validation_names_offender(bad, needle):
    d = {"bounds": [0, 0, 10, 10], **bad}
    with pytest.raises(ScenarioError, match=needle):
        scenario_from_dict(d)


def test_load_errors(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError, match="parse"):
        load_scenario(p)
    p.write_text(json.dumps({"bounds": [0, 0, 5, 5], "buildings": [box("A", 1, 1, 2, 2, 3)]}))
    assert load_scenario(p).buildings[0].id == "A"


def test_round_trip_dict():
    s = reference_scenario()
    t = scenario_from_dict(json.loads(json.dumps(scenario_to_dict(s))))
    assert t.bounds == s.bounds
    for a, b in zip(s.buildings, t.buildings):
        assert a.id == b.id and a.height == b.height and np.array_equal(a.footprint, b.footprint)


def test_candidates_perimeter_count():
    s = scenario_from_dict({"bounds": [0, 0, 30, 30], "buildings": [box("A", 5, 5, 15, 15, 25)]})
    c = generate_gnb_candidates(s)
    assert len(c) == 40 and np.all(c.points[:, 2] == 25)
    with pytest.raises(ScenarioError, match="no mounting surfaces"):
        generate_gnb_candidates(scenario_from_dict({"bounds": [0, 0, 5, 5]}))


def test_surface_grid_box_counts_and_normals():
    s = scenario_from_dict({"bounds": [0, 0, 30, 30], "buildings": [box("A", 5, 5, 15, 15, 10)]})
    g = generate_building_surface_grid(s, 1.0)
    assert len(g) == 500
    east = g.points[:, 0] == 15
    assert east.sum() == 100
    assert np.allclose(g.normals[east], [1, 0, 0])
    roof = g.points[:, 2] == 10
    assert roof.sum() == 100 and np.allclose(g.normals[roof], [0, 0, 1])


def test_surface_grid_reference_closed_form():
    s = reference_scenario()
    g = generate_building_surface_grid(s, 1.0)
    for bi, b in enumerate(s.buildings):
        expected = b.perimeter * b.height + b.area
        assert np.sum(g.building == bi) == pytest.approx(expected)


def test_surface_points_lie_on_faces():
    s = reference_scenario()
    g = generate_building_surface_grid(s, 1.0)
    faces = s.faces()
    for p, n, f in zip(g.points, g.normals, g.face):
        assert faces[f].normal @ p == pytest.approx(faces[f].offset, abs=1e-9)
        assert np.allclose(faces[f].normal, n)


def test_distances():
    assert dist3d((0, 0, 0), (3, 4, 0)) == 5 and dist2d((0, 0, 0), (3, 4, 0)) == 5
    assert dist3d((0, 0, 0), (0, 0, 10)) == 10 and dist2d((0, 0, 0), (0, 0, 10)) == 0
    assert dist3d((0, 0, 25), (30, 40, 1.5)) == pytest.approx(math.sqrt(2500 + 23.5 ** 2))


def test_service_grid_outside_footprints_and_brute_count():
    s = reference_scenario()
    g = generate_service_grid(s)
    for b in s.buildings:
        assert not points_in_polygon(g.points[:, :2], b.footprint, tol=1e-9).any()
    # brute-force cell scan
    count = 0
    xmin, ymin, xmax, ymax = s.bounds
    for y in np.arange(ymin + 0.5, ymax, 1.0):
        for x in np.arange(xmin + 0.5, xmax, 1.0):
            inside = any(b.footprint[:, 0].min() < x < b.footprint[:, 0].max()
                         and b.footprint[:, 1].min() < y < b.footprint[:, 1].max()
                         for b in s.buildings)
            count += not inside
    assert count == len(g)
    # row-major (y, x) order
    key = g.points[:, 1] * 1e4 + g.points[:, 0]
    assert np.all(np.diff(key) > 0)


def test_deterministic_generation():
    s = reference_scenario()
    for f in (generate_service_grid, generate_gnb_candidates,
              lambda s: generate_building_surface_grid(s, 1.0)):
        assert np.array_equal(f(s).points, f(s).points)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 5), st.integers(0, 5),
       st.floats(1, 30))
def test_service_count_property(w, d, x0, y0, h):
    s = scenario_from_dict({"bounds": [0, 0, 12, 12],
                            "buildings": [box("A", x0, y0, x0 + w, y0 + d, h)]})
    assert len(generate_service_grid(s)) == 144 - w * d
    assert len(generate_gnb_candidates(s)) == 2 * (w + d)
