"""Procedural primitive meshes used for datasets, demos and tests."""
from __future__ import annotations

import numpy as np

from .mesh import Mesh


def make_uv_sphere(segments: int = 25, rings: int = 11, radius: float = 1.0,
                   with_uv: bool = True) -> Mesh:
    """Longitude/latitude sphere; 2*segments*(rings-2) + 2*segments faces.

    The default (25, 11) gives exactly 500 faces.
    """
    if segments < 3 or rings < 3:
        raise ValueError("need segments >= 3 and rings >= 3")
    verts = [(0.0, 0.0, radius)]
    uvs = []
    # interior rings exclude the poles
    for r in range(1, rings - 1):
        phi = np.pi * r / (rings - 1)
        for s in range(segments):
            theta = 2 * np.pi * s / segments
            verts.append((radius * np.sin(phi) * np.cos(theta),
                          radius * np.sin(phi) * np.sin(theta),
                          radius * np.cos(phi)))
    verts.append((0.0, 0.0, -radius))
    verts = np.asarray(verts)
    north, south = 0, len(verts) - 1

    def ring_vertex(r, s):
        return 1 + (r - 1) * segments + (s % segments)

    faces = []
    for s in range(segments):
        faces.append((north, ring_vertex(1, s), ring_vertex(1, s + 1)))
    for r in range(1, rings - 2):
        for s in range(segments):
            a, b = ring_vertex(r, s), ring_vertex(r, s + 1)
            c, d = ring_vertex(r + 1, s), ring_vertex(r + 1, s + 1)
            faces.append((a, c, b))
            faces.append((b, c, d))
    for s in range(segments):
        faces.append((south, ring_vertex(rings - 2, s + 1), ring_vertex(rings - 2, s)))
    faces = np.asarray(faces, dtype=np.int64)

    uvc = uvi = None
    if with_uv:
        # simple spherical unwrap, one uv per vertex
        xyz = verts / radius
        u = (np.arctan2(xyz[:, 1], xyz[:, 0]) / (2 * np.pi)) % 1.0
        v = np.arccos(np.clip(xyz[:, 2], -1, 1)) / np.pi
        uvc = np.stack([u, v], axis=1)
        uvi = faces.copy()
    return Mesh(verts, faces, uvc, uvi)


def make_icosphere(subdivisions: int = 2, radius: float = 1.0) -> Mesh:
    """Subdivided icosahedron; 20 * 4**subdivisions faces."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = np.asarray(verts[a]) + np.asarray(verts[b])
                p /= np.linalg.norm(p)
                verts.append(tuple(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.asarray(verts) * radius
    return Mesh(v, np.asarray(faces, dtype=np.int64))


def make_box(size=(1.2, 1.2, 1.2)) -> Mesh:
    sx, sy, sz = np.asarray(size) / 2.0
    verts = np.array([
        (-sx, -sy, -sz), (sx, -sy, -sz), (sx, sy, -sz), (-sx, sy, -sz),
        (-sx, -sy, sz), (sx, -sy, sz), (sx, sy, sz), (-sx, sy, sz),
    ])
    quads = [
        (0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4),
        (2, 3, 7, 6), (1, 2, 6, 5), (3, 0, 4, 7),
    ]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return Mesh(verts, np.asarray(faces, dtype=np.int64))


def make_cone(segments: int = 24, radius: float = 0.9, height: float = 1.8) -> Mesh:
    apex = (0.0, 0.0, height / 2)
    base_c = (0.0, 0.0, -height / 2)
    ring = [(radius * np.cos(2 * np.pi * s / segments),
             radius * np.sin(2 * np.pi * s / segments), -height / 2)
            for s in range(segments)]
    verts = np.asarray([apex, base_c] + ring)
    faces = []
    for s in range(segments):
        a, b = 2 + s, 2 + (s + 1) % segments
        faces.append((0, a, b))       # side
        faces.append((1, b, a))       # base cap
    return Mesh(verts, np.asarray(faces, dtype=np.int64))


def make_ellipsoid(radii=(1.2, 0.8, 0.6), segments: int = 20, rings: int = 11) -> Mesh:
    sphere = make_uv_sphere(segments, rings, radius=1.0, with_uv=False)
    return sphere.with_vertices(sphere.vertices * np.asarray(radii))


def make_tetrahedron(scale: float = 1.0) -> Mesh:
    """Regular tetrahedron with edge length ``scale``."""
    verts = np.array([(1, 0, -1 / np.sqrt(2)), (-1, 0, -1 / np.sqrt(2)),
                      (0, 1, 1 / np.sqrt(2)), (0, -1, 1 / np.sqrt(2))]) * (scale / 2)
    faces = np.array([(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)], dtype=np.int64)
    return Mesh(verts, faces)


def make_octahedron(scale: float = 1.0) -> Mesh:
    verts = np.array([(1, 0, 0), (-1, 0, 0), (0, 1, 0),
                      (0, -1, 0), (0, 0, 1), (0, 0, -1)], dtype=np.float64) * scale
    faces = np.array([
        (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
        (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
    ], dtype=np.int64)
    return Mesh(verts, faces)


PRIMITIVES = {
    "sphere": lambda: make_uv_sphere(),
    "box": lambda: make_box(),
    "cone": lambda: make_cone(),
    "ellipsoid": lambda: make_ellipsoid(),
}
