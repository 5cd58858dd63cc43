import math

import numpy as np
import pytest

from nhbloch.errors import AmbiguousWrap, NonPeriodicAxis
from nhbloch.geometry import (LoopPath, ParamPoint, SpaceTopology,
                              canonicalize, coordinate_loop, homology_class,
                              point_distance, unwrap_polyline)

T = SpaceTopology.TORUS
PI = math.pi


def test_canonicalize_wraps_mod_two_pi():
    p = canonicalize(ParamPoint(3 * PI / 2, 0.0), T)
    assert p.kx == pytest.approx(-PI / 2)
    assert p.ky == 0.0


def test_canonicalize_identity_on_plane():
    p = canonicalize(ParamPoint(0.3, -0.3), SpaceTopology.PLANE)
    assert (p.kx, p.ky) == (0.3, -0.3)


def test_canonicalize_half_open_interval():
    p = canonicalize(ParamPoint(-PI, PI), T)
    assert (p.kx, p.ky) == (-PI, -PI)


def test_canonicalize_idempotent_and_isometric(rng):
    for _ in range(200):
        p = ParamPoint(*rng.uniform(-10, 10, size=2))
        q = ParamPoint(*rng.uniform(-10, 10, size=2))
        cp = canonicalize(p, T)
        assert canonicalize(cp, T) == cp
        assert -PI <= cp.kx < PI and -PI <= cp.ky < PI
        d1 = point_distance(p, q, T)
        d2 = point_distance(cp, canonicalize(q, T), T)
        assert d1 == pytest.approx(d2, abs=1e-12)


def test_coordinate_loop_y():
    loop = coordinate_loop("y", 0.0, 100, T)
    assert loop.wraps == (0, 1)
    assert loop.closed
    assert loop.vertices[0] == ParamPoint(0.0, -PI)
    assert loop.vertices[-1] == ParamPoint(0.0, PI)
    assert canonicalize(loop.vertices[-1], T) == loop.vertices[0]


def test_coordinate_loop_x_vertex_count():
    loop = coordinate_loop("x", PI / 2, 8, T)
    assert len(loop.vertices) == 9
    assert loop.wraps == (1, 0)


def test_coordinate_loop_nonperiodic_axis():
    with pytest.raises(NonPeriodicAxis):
        coordinate_loop("x", 0.0, 100, SpaceTopology.CYLINDER_Y)


def test_coordinate_loop_min_steps():
    with pytest.raises(ValueError):
        coordinate_loop("x", 0.0, 4, T)


def test_homology_single_wrap():
    pts = [(x, 0.0) for x in np.linspace(-PI, PI, 50)]
    assert homology_class(pts, T) == (1, 0)


def test_homology_contractible_circle():
    th = np.linspace(0, 2 * PI, 64)
    pts = np.stack([0.1 * np.cos(th), 0.1 * np.sin(th)], axis=1)
    assert homology_class(pts, T) == (0, 0)


def test_homology_concatenation_additive():
    a = [(x, 0.0) for x in np.linspace(-PI, PI, 40)]
    b = [(PI, y) for y in np.linspace(0.0, 2 * PI, 40)]
    both = a + b[1:]
    wa = homology_class(a, T)
    wb = homology_class(b, T)
    wc = homology_class(both, T)
    assert wc == (wa[0] + wb[0], wa[1] + wb[1])


def test_homology_rotation_and_refinement_invariant():
    th = np.linspace(0, 2 * PI, 80, endpoint=False)
    pts = np.stack([th - PI, 0.5 * np.sin(3 * th)], axis=1)
    pts = np.vstack([pts, pts[:1] + [2 * PI, 0.0]])
    base = homology_class(pts, T)
    rotated = np.vstack([pts[21:-1], pts[:22]])
    assert homology_class(rotated, T) == base
    fine = []
    for p, q in zip(pts[:-1], pts[1:]):
        fine.append(p)
        fine.append(0.5 * (p + q))
    fine.append(pts[-1])
    assert homology_class(np.array(fine), T) == base


def test_homology_ambiguous_wrap():
    pts = [(0.0, 0.0), (PI, 0.0), (0.0, 0.0)]
    with pytest.raises(AmbiguousWrap):
        homology_class(pts, T)


def test_homology_requires_closure():
    pts = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]
    with pytest.raises(ValueError):
        homology_class(pts, T)


def test_unwrap_polyline_continuous():
    pts = [(PI - 0.1, 0.0), (-PI + 0.1, 0.0)]
    un = unwrap_polyline(pts, T)
    assert un[1, 0] == pytest.approx(PI + 0.1)


def test_loop_path_array_roundtrip():
    loop = coordinate_loop("x", 0.3, 16, T)
    arr = loop.as_array()
    assert arr.shape == (17, 2)
    assert arr[0, 1] == 0.3
    assert isinstance(loop, LoopPath)
