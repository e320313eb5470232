import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwplan.scenario import (GridSet, Role, generate_building_surface_grid,
                              generate_gnb_candidates, generate_service_grid,
                              reference_scenario, scenario_from_dict)
from mmwplan.visibility import (OcclusionIndex, VisibilityEngine, diffuse_visibility,
                                face_geometry, specular_visibility, visibility_raster,
                                write_pgm, write_visibility_csv)
from oracles import boxes_of, brute_visibility, random_box_scenario, slab_blocked


def box(bid, x0, y0, x1, y1, h):
    return {"id": bid, "height_m": h, "footprint": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]}


def one_wall():
    return scenario_from_dict({"bounds": [0, 0, 40, 40], "buildings": [box("W", 10, 20, 30, 22, 10)]})


def test_empty_scenario_all_clear():
    s = scenario_from_dict({"bounds": [0, 0, 10, 10]})
    occ = OcclusionIndex.from_scenario(s)
    assert occ.segment_clear([0, 0, 0], [5, 5, 5])
    sa = generate_service_grid(s)
    v = VisibilityEngine(s, sa).index([5.0, 5.0, 20.0])
    assert v.direct.all() and not v.specular.any() and not v.diffuse.any()


def test_segment_through_building_blocked():
    occ = OcclusionIndex.from_scenario(one_wall())
    assert not occ.segment_clear([20, 10, 1.5], [20, 30, 1.5])
    assert occ.segment_clear([20, 10, 1.5], [20, 30, 31.0])  # passes over the roof
    assert not occ.segment_clear([20, 10, 1.5], [20, 30, 15.0])


def test_mounted_endpoints_do_not_self_block():
    occ = OcclusionIndex.from_scenario(one_wall())
    assert occ.segment_clear([10, 20, 10], [0, 0, 1.5])  # roof corner outward
    assert occ.segment_clear([20, 20, 5], [20, 0, 1.5])  # wall point outward
    assert not occ.segment_clear([20, 20, 5], [20, 30, 1.5])  # wall point through the slab


def test_shadow_target_clear_bit():
    s = one_wall()
    v = VisibilityEngine(s, generate_service_grid(s)).index([20.0, 5.0, 5.0])
    sa = generate_service_grid(s).points
    behind = np.flatnonzero((sa[:, 0] == 20.5) & (sa[:, 1] == 25.5))[0]
    assert not v.direct[behind]


def test_mirror_symmetry_witness():
    # mirror wall y = 20 (south face), source and target symmetric about x = 20
    s = one_wall()
    T = GridSet(Role.SERVICE_AREA, np.array([[26.0, 10.0, 5.0]]), 1.0)
    occ = OcclusionIndex.from_scenario(s)
    src = np.array([14.0, 10.0, 5.0])
    bits, wf, wp = specular_visibility(src, T, face_geometry(s), occ, direct=np.array([False]))
    assert bits[0]
    assert np.allclose(wp[0], [20.0, 20.0, 5.0])
    assert s.faces()[wf[0]].normal @ [0, 1, 0] == -1.0


def test_direct_excludes_indirect():
    s = one_wall()
    sa = generate_service_grid(s)
    v = VisibilityEngine(s, sa, generate_building_surface_grid(s, 1.0)).index([15.0, 5.0, 6.0])
    assert not (v.direct & v.specular).any()
    assert not (v.direct & v.diffuse).any()
    assert (v.specular <= v.diffuse).all()


def test_empty_surface_gives_no_diffuse():
    s = one_wall()
    sa = generate_service_grid(s)
    empty = GridSet(Role.BUILDING_SURFACE, np.zeros((0, 3)), 1.0)
    occ = OcclusionIndex.from_scenario(s)
    assert not diffuse_visibility([20.0, 5.0, 5.0], sa, empty, occ).any()


@pytest.mark.parametrize("seed", range(6))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(100 + seed)
    s = random_box_scenario(rng)
    sa = generate_service_grid(s)
    surf = generate_building_surface_grid(s, 1.0)
    eng = VisibilityEngine(s, sa, surf)
    boxes = boxes_of(s)
    cand = generate_gnb_candidates(s).points
    for src in cand[rng.choice(len(cand), 3, replace=False)]:
        v = eng.index(src)
        d, sp, df = brute_visibility(src, sa.points, boxes, surf.points)
        assert np.array_equal(v.direct, d)
        assert np.array_equal(v.specular, sp)
        assert np.array_equal(v.diffuse, df)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_specular_subset_of_diffuse_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    s = random_box_scenario(rng)
    sa = generate_service_grid(s)
    eng = VisibilityEngine(s, sa, generate_building_surface_grid(s, 1.0))
    cand = generate_gnb_candidates(s).points
    src = cand[rng.integers(len(cand))]
    v = eng.index(src)
    assert (v.specular <= v.diffuse).all()
    # t in V(s) iff s in V(t)
    back = eng.occ.clear_pairs(sa.points, np.broadcast_to(src, sa.points.shape))
    assert np.array_equal(back, v.direct)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_removing_building_never_shrinks_direct(seed):
    rng = np.random.default_rng(seed)
    s = random_box_scenario(rng)
    if len(s.buildings) < 2:
        return
    sa = generate_service_grid(s)
    src = generate_gnb_candidates(s).points[0]  # on building 0, which stays
    full = VisibilityEngine(s, sa).index(src, diffuse=False).direct
    less = VisibilityEngine(s.without_building(len(s.buildings) - 1), sa).index(
        src, diffuse=False).direct
    assert (full <= less).all()


def test_slab_oracle_self_check():
    boxes = np.array([[0.0, 0.0, 1.0, 1.0, 1.0]])
    assert slab_blocked(np.array([[-1, 0.5, 0.5]]), np.array([[2, 0.5, 0.5]]), boxes)[0]
    assert not slab_blocked(np.array([[-1, 0.5, 1.5]]), np.array([[2, 0.5, 1.5]]), boxes)[0]
    # touching the top edge counts as blocked
    assert slab_blocked(np.array([[-1, 0.5, 0.0]]), np.array([[1, 0.5, 2.0]]), boxes)[0]


@pytest.fixture(scope="module")
def ref_engine():
    s = reference_scenario()
    sa = generate_service_grid(s)
    return s, sa, VisibilityEngine(s, sa, generate_building_surface_grid(s, 1.0))


def test_raster_and_exports(tmp_path, ref_engine):
    s, sa, eng = ref_engine
    v = eng.index(generate_gnb_candidates(s).points[0])
    img = visibility_raster(s, sa, v, "diffuse")
    assert img.shape == s.shape
    assert set(np.unique(img)) <= {0, 64, 128, 255}
    assert (img == 255).sum() == v.direct.sum()
    assert (img == 128).sum() == v.diffuse.sum()
    assert (img == 64).sum() == img.size - len(sa)
    write_pgm(tmp_path / "v.pgm", img)
    lines = (tmp_path / "v.pgm").read_text().splitlines()
    assert lines[0] == "P2" and lines[1] == f"{s.shape[1]} {s.shape[0]}"
    # first raster line is the northmost row
    assert lines[3].split() == [str(x) for x in img[-1]]
    write_visibility_csv(tmp_path / "v.csv", sa, v)
    rows = (tmp_path / "v.csv").read_text().splitlines()
    assert rows[0] == "index,x,y,z,class" and len(rows) == len(sa) + 1


def test_reference_diffuse_strictly_larger(ref_engine):
    s, sa, eng = ref_engine
    cand = generate_gnb_candidates(s).points
    v = eng.index(cand[len(cand) // 2])
    assert v.specular.any()
    assert (v.specular <= v.diffuse).all() and v.diffuse.sum() > v.specular.sum()
