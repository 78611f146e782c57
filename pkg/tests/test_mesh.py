import numpy as np
import pytest

from meshblend import Mesh, load_mesh, save_mesh
from meshblend.errors import MeshError
from meshblend.primitives import (
    make_box,
    make_cone,
    make_icosphere,
    make_tetrahedron,
    make_uv_sphere,
)


def test_tetrahedron_areas(tmp_path):
    mesh = make_tetrahedron()
    path = tmp_path / "tet.obj"
    save_mesh(mesh, path)
    loaded = load_mesh(path)
    assert loaded.n_vertices == 4
    assert loaded.n_faces == 4
    # regular tetrahedron with unit edges: each face area = sqrt(3)/4
    assert np.allclose(loaded.face_areas, np.sqrt(3) / 4, rtol=1e-12)


def test_quad_face_rejected(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshError, match="face 0"):
        load_mesh(path)


def test_degenerate_face_rejected(tmp_path):
    path = tmp_path / "degen.obj"
    path.write_text(
        "v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\n"
    )
    with pytest.raises(MeshError, match="area"):
        load_mesh(path)


def test_roundtrip_bit_identical(tmp_path):
    mesh = make_uv_sphere(segments=7, rings=5)
    # scramble vertices with awkward floats to exercise repr round-tripping
    rng = np.random.default_rng(3)
    mesh = mesh.with_vertices(mesh.vertices + rng.standard_normal(mesh.vertices.shape) * 0.01)
    p1, p2 = tmp_path / "a.obj", tmp_path / "b.obj"
    save_mesh(mesh, p1)
    m1 = load_mesh(p1)
    save_mesh(m1, p2)
    m2 = load_mesh(p2)
    assert np.array_equal(m1.vertices, mesh.vertices)
    assert np.array_equal(m2.vertices, m1.vertices)
    assert np.array_equal(m2.uv_coords, m1.uv_coords)
    assert np.array_equal(m2.uv_indices, m1.uv_indices)
    assert p1.read_bytes() == p2.read_bytes()


def test_face_areas_consistency():
    for mesh in (make_box(), make_cone(), make_icosphere(1)):
        from meshblend.mesh import face_frames

        _, _, _, areas = face_frames(mesh.vertices, mesh.faces)
        assert np.allclose(areas, mesh.face_areas, rtol=1e-9)
        assert (mesh.face_areas > 0).all()


def test_uv_shape_enforced():
    mesh = make_uv_sphere(segments=5, rings=4)
    assert mesh.corner_uv().shape == (mesh.n_faces, 3, 2)
    with pytest.raises(MeshError, match="corner"):
        Mesh(mesh.vertices, mesh.faces, mesh.uv_coords, mesh.uv_indices[:-1])


def test_face_index_out_of_range():
    with pytest.raises(MeshError):
        Mesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))
