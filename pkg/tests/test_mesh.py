import math

import numpy as np
import pytest

from enspod.errors import InvalidGeometry, ParseError
from enspod.mesh import (
    INNER,
    OUTER,
    Mesh,
    boundary_dofs,
    circle_nodes,
    delaunay,
    generate_offset_annulus,
    load_mesh,
    save_mesh,
    validate,
)

TOL = 1e-10


def _euler(m):
    return m.n_vertices - m.n_edges + m.n_triangles


@pytest.mark.parametrize("h", [0.3, 0.2, 0.1])
def test_offset_annulus_inside_domain(h):
    m = generate_offset_annulus(1.0, 0.1, (0.5, 0.0), h)
    x, y = m.vertices[:, 0], m.vertices[:, 1]
    assert np.all(x * x + y * y <= 1.0 + TOL)
    assert np.all((x - 0.5) ** 2 + y * y >= 0.01 - TOL)
    assert set(m.boundary_tags) == {OUTER, INNER}
    assert validate(m)


def test_invariants_on_generated_mesh(coarse_mesh):
    m = coarse_mesh
    assert np.all(m.signed_areas() > 0)
    counts = m.edge_triangle_count
    assert set(np.unique(counts)) <= {1, 2}
    assert np.count_nonzero(counts == 1) == len(m.boundary_edges)
    assert _euler(m) == 0


def test_concentric_thin_annulus():
    m = generate_offset_annulus(1.0, 0.9, (0.0, 0.0), 0.1)
    assert validate(m)
    assert _euler(m) == 0


@pytest.mark.parametrize(
    "r1,r2,center,h",
    [
        (1.0, 0.5, (0.8, 0.0), 0.1),
        (1.0, 1.2, (0.0, 0.0), 0.1),
        (1.0, 0.1, (0.5, 0.0), 0.0),
        (1.0, 0.0, (0.5, 0.0), 0.1),
    ],
)
def test_invalid_geometry(r1, r2, center, h):
    with pytest.raises(InvalidGeometry):
        generate_offset_annulus(r1, r2, center, h)


def test_mesh_size_respected():
    for h in (0.2, 0.1):
        m = generate_offset_annulus(h_target=h)
        assert m.diameters().max() <= 2 * h


def test_refinement_doubles_boundary_nodes():
    assert circle_nodes(0.2, 1.0) * 2 == circle_nodes(0.1, 1.0)
    assert circle_nodes(0.1, 0.1) == 8
    assert 2 * math.sin(math.pi / circle_nodes(0.05, 1.0)) <= 0.05


def test_desk_mesh_size():
    m = generate_offset_annulus(h_target=0.1)
    assert 2 * (m.n_vertices + m.n_edges) == 2880


def test_round_trip(coarse_mesh):
    text = save_mesh(coarse_mesh)
    again = load_mesh(text)
    assert again == coarse_mesh
    assert save_mesh(again) == text
    validate(again)


def test_single_triangle_file():
    m = load_mesh("mesh2d 3 1 3\nv 0 0\nv 1 0\nv 0 1\nt 0 1 2\nb 0 1 outer\nb 1 2 outer\nb 2 0 outer\n")
    assert m.n_vertices == 3 and m.n_triangles == 1
    assert validate(m)


@pytest.mark.parametrize(
    "text,line",
    [
        ("mesh2d 3 1 0\nv 0 0\nv 0 1\nv 1 0\nt 0 1 2\n", 5),  # clockwise
        ("mesh 3 1 0\n", 1),
        ("mesh2d 3 1 0\nv 0 0\nv 1 0\nv 0 1\nt 0 1 3\n", 5),
        ("mesh2d 3 1 0\nv 0 0\nv 1 0\nv 0 x\nt 0 1 2\n", 4),
        ("mesh2d 3 2 0\nv 0 0\nv 1 0\nv 0 1\nt 0 1 2\n", 5),
        ("mesh2d 3 1 0\nv 0 0\nv 1 0\nv 0 1\nq 0 1 2\n", 5),
        ("mesh2d 4 2 1\nv 0 0\nv 1 0\nv 0 1\nv 1 1\nt 0 1 2\nt 1 3 2\nb 1 2 outer\n", 8),
    ],
)
def test_parse_errors(text, line):
    with pytest.raises(ParseError) as err:
        load_mesh(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def _square():
    return Mesh(
        vertices=[[0, 0], [1, 0], [0, 1], [1, 1]],
        triangles=[[0, 1, 2], [1, 3, 2]],
        boundary_edges=[[0, 1]],
        boundary_tags=[OUTER],
    )


def test_boundary_dofs_small_cases():
    m = Mesh(vertices=[[0, 0], [1, 0], [0, 1]], triangles=[[0, 1, 2]],
             boundary_edges=np.zeros((0, 2)), boundary_tags=())
    assert len(boundary_dofs(m)) == 0
    sq = _square()
    ids = boundary_dofs(sq)
    assert list(ids) == [0, 1, sq.n_vertices + sq.edge_index(0, 1)]


def test_boundary_dof_count(coarse_mesh):
    # closed boundary loops: one vertex and one midpoint per boundary edge
    nb = len(coarse_mesh.boundary_edges)
    assert len(boundary_dofs(coarse_mesh)) == 2 * nb


def test_validate_rejects_bad_meshes():
    flipped = Mesh(vertices=[[0, 0], [0, 1], [1, 0]], triangles=[[0, 1, 2]],
                   boundary_edges=np.zeros((0, 2)), boundary_tags=())
    with pytest.raises(InvalidGeometry):
        validate(flipped)
    interior_tag = Mesh(
        vertices=[[0, 0], [1, 0], [0, 1], [1, 1]],
        triangles=[[0, 1, 2], [1, 3, 2]],
        boundary_edges=[[1, 2]],
        boundary_tags=[OUTER],
    )
    with pytest.raises(InvalidGeometry):
        validate(interior_tag)


def test_validate_checks_circles(coarse_mesh):
    moved = coarse_mesh.vertices.copy()
    v = int(coarse_mesh.boundary_edges[0, 0])
    moved[v] *= 0.99
    bad = Mesh(moved, coarse_mesh.triangles, coarse_mesh.boundary_edges,
               coarse_mesh.boundary_tags, coarse_mesh.circles)
    with pytest.raises(InvalidGeometry):
        validate(bad)


def test_delaunay_empty_circumcircles(rng):
    pts = rng.random((60, 2))
    tris = np.asarray(delaunay(pts))
    assert len(tris) > 0
    p = pts[tris]
    ax, ay = p[:, 0, 0], p[:, 0, 1]
    bx, by = p[:, 1, 0], p[:, 1, 1]
    cx, cy = p[:, 2, 0], p[:, 2, 1]
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
    uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
    r2 = (ax - ux) ** 2 + (ay - uy) ** 2
    dist = (pts[None, :, 0] - ux[:, None]) ** 2 + (pts[None, :, 1] - uy[:, None]) ** 2
    assert np.all(dist >= r2[:, None] * (1 - 1e-9))
    # triangulation of the convex hull: total area equals hull area
    from scipy.spatial import ConvexHull

    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]).sum()
    assert area == pytest.approx(ConvexHull(pts).volume, rel=1e-12)


def test_mesh_is_immutable(coarse_mesh):
    with pytest.raises(ValueError):
        coarse_mesh.vertices[0, 0] = 5.0
