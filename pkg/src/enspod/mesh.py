"""Triangulations of the offset-annulus domain.

The generator places equally spaced nodes on both circles and a triangular
lattice in the interior, builds their Delaunay triangulation (Qhull),
recovers any missing boundary segment by edge flips and
finally carves away the hole. Boundary edges are straight chords.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .errors import InvalidGeometry, ParseError

OUTER = "outer"
INNER = "inner"
TAGS = (OUTER, INNER)


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh.

    ``edges`` is the global edge table (sorted vertex pairs) and
    ``tri_edges[t, k]`` is the index of local edge k of triangle t, where
    local edges are (0, 1), (1, 2), (2, 0). Quadratic midpoint nodes are
    numbered ``n_vertices + edge_index``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple
    circles: dict | None = None
    edges: np.ndarray = field(init=False, repr=False)
    tri_edges: np.ndarray = field(init=False, repr=False)
    edge_triangle_count: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        bedges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "vertices", _readonly(verts))
        object.__setattr__(self, "triangles", _readonly(tris))
        object.__setattr__(self, "boundary_edges", _readonly(bedges))
        object.__setattr__(self, "boundary_tags", tuple(self.boundary_tags))
        local = tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        local = np.sort(local, axis=1)
        if len(local):
            edges, inverse, counts = np.unique(
                local, axis=0, return_inverse=True, return_counts=True
            )
        else:
            edges = np.zeros((0, 2), dtype=np.int64)
            inverse = np.zeros(0, dtype=np.int64)
            counts = np.zeros(0, dtype=np.int64)
        object.__setattr__(self, "edges", _readonly(edges.astype(np.int64)))
        object.__setattr__(
            self, "tri_edges", _readonly(inverse.reshape(-1, 3).astype(np.int64))
        )
        object.__setattr__(self, "edge_triangle_count", _readonly(counts))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self):
        p = self.vertices[self.triangles]
        lens = [np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in ((0, 1), (1, 2), (2, 0))]
        return np.max(lens, axis=0)

    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def edge_index(self, a, b):
        """Global index of the edge joining vertices a and b."""
        key = (min(a, b), max(a, b))
        lo = np.searchsorted(self.edges[:, 0], key[0], side="left")
        hi = np.searchsorted(self.edges[:, 0], key[0], side="right")
        for k in range(lo, hi):
            if self.edges[k, 1] == key[1]:
                return int(k)
        raise KeyError(f"no edge ({a}, {b})")

    def boundary_edge_indices(self):
        return np.array(
            [self.edge_index(int(a), int(b)) for a, b in self.boundary_edges],
            dtype=np.int64,
        )

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and self.boundary_tags == other.boundary_tags
        )

    __hash__ = None


def validate(mesh: Mesh, geom_tol=None):
    """Check the mesh invariants, raising ``InvalidGeometry`` on failure.

    Checked: positive triangle areas, every edge used by one or two
    triangles, tagged edges lie on the topological boundary, tagged vertices
    lie on their circle (when the circles are known) and the Euler relation
    V - E + F = 2 - (number of boundary loops).
    """
    if mesh.n_triangles == 0:
        raise InvalidGeometry("mesh has no triangles")
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise InvalidGeometry(f"triangle {bad} has non-positive area {areas[bad]:g}")
    counts = mesh.edge_triangle_count
    if np.any(counts > 2):
        raise InvalidGeometry("edge shared by more than two triangles")
    boundary = {tuple(e) for e in mesh.edges[counts == 1].tolist()}
    for (a, b), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags):
        if tag not in TAGS:
            raise InvalidGeometry(f"unknown boundary tag {tag!r}")
        if (min(a, b), max(a, b)) not in boundary:
            raise InvalidGeometry(f"tagged edge ({a}, {b}) is not a boundary edge")
    if mesh.circles is not None:
        for tag, (cx, cy, r) in mesh.circles.items():
            tol = geom_tol if geom_tol is not None else 1e-10 * mesh.circles[OUTER][2]
            ids = {v for e, t in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags)
                   if t == tag for v in e}
            if not ids:
                continue
            p = mesh.vertices[sorted(ids)]
            dist = np.hypot(p[:, 0] - cx, p[:, 1] - cy)
            if np.max(np.abs(dist - r)) > tol:
                raise InvalidGeometry(f"{tag} boundary vertex off its circle")
        tagged = {(min(a, b), max(a, b)) for a, b in mesh.boundary_edges.tolist()}
        if tagged != boundary:
            raise InvalidGeometry("untagged boundary edges on a generated mesh")
    loops = _count_loops(mesh.edges[counts == 1])
    euler = mesh.n_vertices - mesh.n_edges + mesh.n_triangles
    if euler != 2 - loops:
        raise InvalidGeometry(f"Euler characteristic {euler} != {2 - loops}")
    return True


def _count_loops(edges):
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges.tolist():
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return len({find(x) for x in parent})


def boundary_dofs(mesh: Mesh):
    """Quadratic nodes (vertices and edge midpoints) on tagged boundary edges.

    Returns a sorted array of scalar node ids; midpoint ids are offset by
    ``mesh.n_vertices``.
    """
    if len(mesh.boundary_edges) == 0:
        return np.zeros(0, dtype=np.int64)
    verts = np.unique(mesh.boundary_edges)
    mids = mesh.n_vertices + mesh.boundary_edge_indices()
    return np.unique(np.concatenate([verts, mids]))


# --------------------------------------------------------------------------
# geometry predicates


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_cross(p, q, r, s):
    """Proper intersection of segments pq and rs (shared endpoints excluded)."""
    d1 = _orient(*p, *q, *r)
    d2 = _orient(*p, *q, *s)
    d3 = _orient(*r, *s, *p)
    d4 = _orient(*r, *s, *q)
    return d1 * d2 < 0 and d3 * d4 < 0


# --------------------------------------------------------------------------
# triangulation


def delaunay(points):
    """Delaunay triangulation of a point set (Qhull).

    Returns an (F, 3) array of counterclockwise vertex triples covering the
    convex hull.
    """
    pts = np.asarray(points, dtype=np.float64)
    tris = np.array(Delaunay(pts).simplices, dtype=np.int64)
    p = pts[tris]
    cw = _orient(p[:, 0, 0], p[:, 0, 1], p[:, 1, 0], p[:, 1, 1], p[:, 2, 0], p[:, 2, 1]) < 0
    tris[cw] = tris[cw][:, [0, 2, 1]]
    return tris


def _recover_segments(pts, tris, segments):
    """Force every segment (a, b) to be a triangle edge by Lawson flips."""
    tris = [list(t) for t in tris]
    edge_map = {}

    def add(ti):
        a, b, c = tris[ti]
        for u, v in ((a, b), (b, c), (c, a)):
            edge_map[(u, v)] = ti

    def remove(ti):
        a, b, c = tris[ti]
        for u, v in ((a, b), (b, c), (c, a)):
            edge_map.pop((u, v), None)

    for ti in range(len(tris)):
        add(ti)
    P = [tuple(map(float, q)) for q in pts]
    n_flips = 0
    for a, b in segments:
        if (a, b) in edge_map or (b, a) in edge_map:
            continue
        crossing = sorted(
            (u, v) for (u, v) in edge_map
            if u < v and (v, u) in edge_map
            and len({u, v, a, b}) == 4
            and _segments_cross(P[a], P[b], P[u], P[v])
        )
        guard = 0
        while crossing:
            guard += 1
            if guard > 100000:
                raise InvalidGeometry(f"could not recover boundary segment ({a}, {b})")
            u, v = crossing.pop(0)
            t1 = edge_map.get((u, v))
            t2 = edge_map.get((v, u))
            if t1 is None or t2 is None:
                continue
            w1 = [x for x in tris[t1] if x not in (u, v)][0]
            w2 = [x for x in tris[t2] if x not in (u, v)][0]
            # quad u, w2, v, w1 is convex iff w1w2 crosses uv
            if not _segments_cross(P[w1], P[w2], P[u], P[v]):
                crossing.append((u, v))
                continue
            remove(t1)
            remove(t2)
            # t1 = (u, v, w1) ccw, t2 = (v, u, w2) ccw
            tris[t1] = [w1, u, w2]
            tris[t2] = [w2, v, w1]
            add(t1)
            add(t2)
            n_flips += 1
            if len({w1, w2, a, b}) == 4 and _segments_cross(P[a], P[b], P[w1], P[w2]):
                crossing.append((min(w1, w2), max(w1, w2)))
    return np.array(tris, dtype=np.int64), n_flips


def _point_in_polygon(x, y, poly):
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xi > x:
                inside = not inside
    return inside


def circle_nodes(h, r):
    """Node count on a circle of radius r: the smallest power of two >= 8
    whose chord spacing does not exceed h."""
    n = 8
    while 2.0 * r * math.sin(math.pi / n) > h:
        n *= 2
    return n


def generate_offset_annulus(r1=1.0, r2=0.1, center=(0.5, 0.0), h_target=0.1):
    """Mesh the disk of radius r1 at the origin minus the disk of radius r2
    centred at ``center``.

    Raises
    ------
    InvalidGeometry
        If the inner disk is not strictly inside the outer one or h_target
        is not positive.
    """
    cx, cy = float(center[0]), float(center[1])
    if not (h_target > 0):
        raise InvalidGeometry("h_target must be positive")
    if not (0 < r2 < r1):
        raise InvalidGeometry("radii must satisfy 0 < r2 < r1")
    if math.hypot(cx, cy) + r2 >= r1:
        raise InvalidGeometry("inner circle is not strictly inside the outer circle")
    h = float(h_target)

    n_out = circle_nodes(h, r1)
    n_in = circle_nodes(h, r2)
    th_out = 2 * np.pi * np.arange(n_out) / n_out
    th_in = 2 * np.pi * np.arange(n_in) / n_in
    outer = np.column_stack([r1 * np.cos(th_out), r1 * np.sin(th_out)])
    inner = np.column_stack([cx + r2 * np.cos(th_in), cy + r2 * np.sin(th_in)])

    # hexagonal lattice, kept clear of both circles
    dy = h * math.sqrt(3) / 2
    ny = int(math.ceil(r1 / dy)) + 1
    lattice = []
    for j in range(-ny, ny + 1):
        y = j * dy
        shift = 0.5 * h if j % 2 else 0.0
        nx = int(math.ceil(r1 / h)) + 1
        for i in range(-nx, nx + 1):
            lattice.append((i * h + shift, y))
    lattice = np.array(lattice)
    clear = 0.6 * h
    keep = (np.hypot(lattice[:, 0], lattice[:, 1]) <= r1 - clear) & (
        np.hypot(lattice[:, 0] - cx, lattice[:, 1] - cy) >= r2 + clear
    )
    interior = lattice[keep]

    pts = np.vstack([outer, inner, interior])
    i_out = np.arange(n_out)
    i_in = n_out + np.arange(n_in)
    segments = [(int(i_out[k]), int(i_out[(k + 1) % n_out])) for k in range(n_out)]
    segments += [(int(i_in[(k + 1) % n_in]), int(i_in[k])) for k in range(n_in)]
    tags = [OUTER] * n_out + [INNER] * n_in
    poly_in = [tuple(q) for q in inner]

    for _ in range(20):
        tris = delaunay(pts)
        tris, _flips = _recover_segments(pts, tris, segments)
        cen = pts[tris].mean(axis=1)
        hole = np.array([_point_in_polygon(x, y, poly_in) for x, y in cen], dtype=bool)
        tris = tris[~hole]
        # drop slivers that can only arise from collinear hull points
        p = pts[tris]
        area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
        tris = tris[area > 1e-14 * r1 * r1]
        diam = np.max([np.linalg.norm(p[:, a] - p[:, b], axis=1)
                       for a, b in ((0, 1), (1, 2), (2, 0))], axis=0)[area > 1e-14 * r1 * r1]
        big = diam > 2.0 * h
        if not np.any(big):
            break
        pts = np.vstack([pts, pts[tris[big]].mean(axis=1)])
    else:  # pragma: no cover
        raise InvalidGeometry("mesh refinement did not converge")

    tris = _drop_unused(pts, tris, segments)
    mesh = Mesh(
        vertices=tris[0],
        triangles=tris[1],
        boundary_edges=np.array(tris[2], dtype=np.int64),
        boundary_tags=tags,
        circles={OUTER: (0.0, 0.0, float(r1)), INNER: (cx, cy, float(r2))},
    )
    return mesh


def _drop_unused(pts, tris, segments):
    used = np.unique(tris)
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    seg = [(int(remap[a]), int(remap[b])) for a, b in segments]
    return pts[used], remap[tris], seg


# --------------------------------------------------------------------------
# text format


def save_mesh(mesh: Mesh) -> str:
    lines = [f"mesh2d {mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}"]
    for x, y in mesh.vertices.tolist():
        lines.append(f"v {x!r} {y!r}")
    for a, b, c in mesh.triangles.tolist():
        lines.append(f"t {a} {b} {c}")
    for (a, b), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags):
        lines.append(f"b {a} {b} {tag}")
    return "\n".join(lines) + "\n"


def load_mesh(text: str) -> Mesh:
    """Parse the plain-text mesh format.

    Raises ``ParseError`` (with a 1-based line number) on malformed lines,
    inconsistent counts, out-of-range indices or clockwise triangles.
    """
    rows = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    rows = [(i, toks) for i, toks in rows if toks and not toks[0].startswith("#")]
    if not rows or rows[0][1][0] != "mesh2d" or len(rows[0][1]) != 4:
        raise ParseError("expected header 'mesh2d <nv> <nt> <nb>'", rows[0][0] if rows else 1)
    try:
        nv, nt, nb = (int(x) for x in rows[0][1][1:])
    except ValueError:
        raise ParseError("non-integer count in header", rows[0][0]) from None
    verts, tris, bedges, tags = [], [], [], []
    for lineno, toks in rows[1:]:
        kind = toks[0]
        try:
            if kind == "v" and len(toks) == 3:
                verts.append((float(toks[1]), float(toks[2])))
            elif kind == "t" and len(toks) == 4:
                tri = tuple(int(x) for x in toks[1:])
                tris.append((lineno, tri))
            elif kind == "b" and len(toks) == 4:
                if toks[3] not in TAGS:
                    raise ParseError(f"unknown boundary tag {toks[3]!r}", lineno)
                bedges.append((lineno, (int(toks[1]), int(toks[2]))))
                tags.append(toks[3])
            else:
                raise ParseError(f"malformed line {' '.join(toks)!r}", lineno)
        except ValueError:
            raise ParseError(f"bad number in {' '.join(toks)!r}", lineno) from None
    last = rows[-1][0]
    if (len(verts), len(tris), len(bedges)) != (nv, nt, nb):
        raise ParseError(
            f"counts {len(verts)}/{len(tris)}/{len(bedges)} do not match header {nv}/{nt}/{nb}",
            last,
        )
    V = np.array(verts, dtype=np.float64).reshape(-1, 2)
    for lineno, idx in tris + bedges:
        if min(idx) < 0 or max(idx) >= nv:
            raise ParseError("vertex index out of range", lineno)
    for lineno, (a, b, c) in tris:
        if _orient(*V[a], *V[b], *V[c]) <= 0:
            raise ParseError("triangle is not counterclockwise", lineno)
    mesh = Mesh(
        vertices=V,
        triangles=np.array([t for _, t in tris], dtype=np.int64),
        boundary_edges=np.array([e for _, e in bedges], dtype=np.int64),
        boundary_tags=tags,
    )
    counts = mesh.edge_triangle_count
    bset = {tuple(e) for e in mesh.edges[counts == 1].tolist()}
    for lineno, (a, b) in bedges:
        if (min(a, b), max(a, b)) not in bset:
            raise ParseError("boundary line is not a mesh boundary edge", lineno)
    return mesh
