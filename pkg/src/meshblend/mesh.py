"""Triangle mesh container and OBJ I/O.

A :class:`Mesh` is immutable after construction: vertices, faces and the
derived per-face quantities (areas, frames) are computed once and shared.
Deformations never touch the face list or the UV layout, only produce new
vertex arrays, so UVs and tessellation transfer to every output unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import MeshError

# Faces with area below this fraction of the bounding-box diagonal (squared
# scale) are rejected at load time.
DEGENERATE_AREA_REL = 1e-12


def _float_repr(x: float) -> str:
    # repr() of a Python float is the shortest string that round-trips the
    # exact binary value, which is what makes save->load bit-identical.
    return repr(float(x))


@dataclass(frozen=True)
class Mesh:
    """Triangulated surface with optional per-corner UVs.

    Attributes:
        vertices: (V, 3) float64 positions in model units.
        faces: (F, 3) int vertex indices.
        uv_coords: optional (T, 2) UV table (``vt`` records).
        uv_indices: optional (F, 3) indices into ``uv_coords``, one per corner.
        face_areas: (F,) triangle areas.
        face_e1, face_e2: (F, 3) the two edge vectors v1-v0, v2-v0 per face.
        face_normals: (F, 3) unit normals.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uv_coords: Optional[np.ndarray] = None
    uv_indices: Optional[np.ndarray] = None
    face_areas: np.ndarray = field(init=False)
    face_e1: np.ndarray = field(init=False)
    face_e2: np.ndarray = field(init=False)
    face_normals: np.ndarray = field(init=False)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {v.shape}")
        if f.size and (f.ndim != 2 or f.shape[1] != 3):
            raise MeshError(f"faces must be (F, 3), got {f.shape}")
        f = f.reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        e1, e2, normals, areas = face_frames(v, f)
        object.__setattr__(self, "face_e1", e1)
        object.__setattr__(self, "face_e2", e2)
        object.__setattr__(self, "face_normals", normals)
        object.__setattr__(self, "face_areas", areas)
        if (self.uv_coords is None) != (self.uv_indices is None):
            raise MeshError("uv_coords and uv_indices must be given together")
        if self.uv_indices is not None:
            uvi = np.ascontiguousarray(np.asarray(self.uv_indices, dtype=np.int64))
            uvc = np.ascontiguousarray(np.asarray(self.uv_coords, dtype=np.float64))
            if uvi.shape != f.shape:
                raise MeshError(
                    f"uv_indices must have one entry per face corner, "
                    f"got {uvi.shape} for {f.shape[0]} faces"
                )
            if uvi.size and (uvi.min() < 0 or uvi.max() >= len(uvc)):
                raise MeshError("uv index out of range")
            object.__setattr__(self, "uv_coords", uvc)
            object.__setattr__(self, "uv_indices", uvi)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def has_uv(self) -> bool:
        return self.uv_coords is not None

    def corner_uv(self) -> Optional[np.ndarray]:
        """Per-corner UVs as (F, 3, 2), or None."""
        if self.uv_coords is None:
            return None
        return self.uv_coords[self.uv_indices]

    def bbox_diagonal(self) -> float:
        if not len(self.vertices):
            return 0.0
        ext = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(ext))

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def anchor_vertex(self) -> int:
        """Index of the vertex nearest the centroid (default solve anchor)."""
        d = np.linalg.norm(self.vertices - self.centroid(), axis=1)
        return int(np.argmin(d))

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        """Same topology and UVs over a new vertex embedding."""
        return Mesh(vertices, self.faces, self.uv_coords, self.uv_indices)


def face_frames(vertices: np.ndarray, faces: np.ndarray):
    """Edge vectors, unit normals and areas for every face.

    Returns (e1, e2, normals, areas) where e1 = v1 - v0, e2 = v2 - v0 and
    normals are unit length. Degenerate faces get a zero normal.
    """
    if not len(faces):
        z = np.zeros((0, 3))
        return z, z, z, np.zeros(0)
    tri = vertices[faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    cr = np.cross(e1, e2)
    dbl = np.linalg.norm(cr, axis=1)
    safe = np.where(dbl > 0, dbl, 1.0)
    normals = cr / safe[:, None]
    normals[dbl == 0] = 0.0
    return e1, e2, normals, 0.5 * dbl


def _check_degenerate(mesh_scale: float, areas: np.ndarray) -> None:
    threshold = DEGENERATE_AREA_REL * max(mesh_scale, 1e-300) ** 2
    bad = np.nonzero(areas <= threshold)[0]
    if len(bad):
        i = int(bad[0])
        raise MeshError(f"degenerate face {i}: area {areas[i]:.3e}")


def load_mesh(path) -> Mesh:
    """Load a triangulated OBJ (``v``/``vt``/``f`` records; UVs optional).

    Rejects non-triangle faces (by face index) and degenerate faces (by
    area). Vertex order and float values are preserved bit-exactly through
    a save/load round trip.
    """
    path = Path(path)
    verts: list[list[float]] = []
    uvs: list[list[float]] = []
    face_v: list[list[int]] = []
    face_t: list[list[int]] = []
    with open(path, "r") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif tag == "f":
                corners = parts[1:]
                if len(corners) != 3:
                    raise MeshError(
                        f"face {len(face_v)} has {len(corners)} corners; "
                        f"only triangles are supported"
                    )
                vi, ti = [], []
                for c in corners:
                    fields = c.split("/")
                    vi.append(int(fields[0]) - 1)
                    if len(fields) > 1 and fields[1]:
                        ti.append(int(fields[1]) - 1)
                face_v.append(vi)
                if ti:
                    if len(ti) != 3:
                        raise MeshError(f"face {len(face_v) - 1} has partial UVs")
                    face_t.append(ti)
    if face_t and len(face_t) != len(face_v):
        raise MeshError("some faces have UVs and some do not")
    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(face_v, dtype=np.int64).reshape(-1, 3)
    ext = v.max(axis=0) - v.min(axis=0) if len(v) else np.zeros(3)
    _, _, _, areas = face_frames(v, f)
    _check_degenerate(float(np.linalg.norm(ext)), areas)
    uvc = np.asarray(uvs, dtype=np.float64).reshape(-1, 2) if face_t else None
    uvi = np.asarray(face_t, dtype=np.int64).reshape(-1, 3) if face_t else None
    return Mesh(v, f, uvc, uvi)


def save_mesh(mesh: Mesh, path) -> None:
    """Write OBJ with exact float round-tripping; UV indices preserved."""
    path = Path(path)
    lines = []
    for p in mesh.vertices:
        lines.append(f"v {_float_repr(p[0])} {_float_repr(p[1])} {_float_repr(p[2])}")
    if mesh.has_uv:
        for t in mesh.uv_coords:
            lines.append(f"vt {_float_repr(t[0])} {_float_repr(t[1])}")
        for fv, ft in zip(mesh.faces, mesh.uv_indices):
            lines.append(
                f"f {fv[0] + 1}/{ft[0] + 1} {fv[1] + 1}/{ft[1] + 1} "
                f"{fv[2] + 1}/{ft[2] + 1}"
            )
    else:
        for fv in mesh.faces:
            lines.append(f"f {fv[0] + 1} {fv[1] + 1} {fv[2] + 1}")
    path.write_text("\n".join(lines) + "\n")
