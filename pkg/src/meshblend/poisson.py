"""Per-face Jacobian fields and the area-weighted Poisson solve.

A deformation is parameterized by one 3x3 matrix per face. Vertex positions
are recovered as the least-squares minimizer of

    sum_i  t_i * || grad_i(gamma) - J_i ||_F^2

over vertex embeddings gamma, where grad_i is the per-face map gradient and
t_i the face area. The translation null-space is removed by pinning a single
anchor vertex, which keeps the normal-equation matrix symmetric positive
definite and the anchor explicit in run manifests.

Jacobian convention: the full 3x3 matrix maps the source frame [e1, e2, n]
to [e1', e2', n'], where e1', e2' are deformed edge vectors and n' is the
deformed *unit* normal, so the normal column carries no stretch and the
identity deformation is exactly J = I. The tangential part (the action on
e1, e2) is the true map gradient; the solve only sees that part, obtained by
right-multiplying targets with (I - n n^T).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .errors import MeshError, SolverError
from .mesh import Mesh, face_frames

SOLVE_RESIDUAL_TOL = 1e-10


@dataclass
class JacobianField:
    """One 3x3 matrix per face; the parameters of a deformation."""

    per_face: np.ndarray  # (F, 3, 3)

    def __post_init__(self):
        j = np.asarray(self.per_face, dtype=np.float64)
        if j.ndim != 3 or j.shape[1:] != (3, 3):
            raise ValueError(f"per_face must be (F, 3, 3), got {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("jacobian entries must be finite")
        self.per_face = j

    @property
    def face_count(self) -> int:
        return len(self.per_face)

    @classmethod
    def identity(cls, n_faces: int) -> "JacobianField":
        return cls(np.broadcast_to(np.eye(3), (n_faces, 3, 3)).copy())

    def copy(self) -> "JacobianField":
        return JacobianField(self.per_face.copy())


def _hat_gradients(mesh: Mesh) -> np.ndarray:
    """Barycentric hat-function gradients, (F, 3 corners, 3 coords).

    grad phi_a = (N x e_a) / |N|^2 with e_a the edge opposite corner a.
    """
    v, f = mesh.vertices, mesh.faces
    vi, vj, vk = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    n = np.cross(vj - vi, vk - vi)
    inv_n2 = 1.0 / np.einsum("ij,ij->i", n, n)
    g0 = np.cross(n, vk - vj) * inv_n2[:, None]
    g1 = np.cross(n, vi - vk) * inv_n2[:, None]
    g2 = np.cross(n, vj - vi) * inv_n2[:, None]
    return np.stack([g0, g1, g2], axis=1)


class GradientOperator:
    """Sparse map from vertex positions to per-face Jacobians, plus the
    prefactorized anchored normal equations for the Poisson solve.

    The matrix depends only on the source mesh and anchor index, so one
    factorization serves every solve in an optimization run.
    """

    def __init__(self, mesh: Mesh, anchor_index: Optional[int] = None):
        if mesh.n_faces == 0:
            raise MeshError("cannot build a gradient operator on an empty mesh")
        self.mesh = mesh
        self.anchor_index = mesh.anchor_vertex() if anchor_index is None else int(anchor_index)
        if not (0 <= self.anchor_index < mesh.n_vertices):
            raise SolverError(f"anchor index {self.anchor_index} out of range")
        self._check_connected(mesh)

        grads = _hat_gradients(mesh)  # (F, 3, 3)
        nf, nv = mesh.n_faces, mesh.n_vertices
        # rows: 3 spatial axes per face; cols: the face's 3 vertices
        rows = (3 * np.repeat(np.arange(nf), 9)
                + np.tile(np.repeat(np.arange(3), 3), nf))
        cols = np.repeat(mesh.faces, 3, axis=0).reshape(-1)
        vals = grads.transpose(0, 2, 1).reshape(-1)
        self.G = sp.csr_matrix((vals, (rows, cols)), shape=(3 * nf, nv))
        self.area_weights = np.repeat(mesh.face_areas, 3)

        GtA = self.G.T.multiply(self.area_weights)
        L = (GtA @ self.G).tocsc()
        self._L_cols_anchor = L[:, self.anchor_index].toarray().ravel()
        k = self.anchor_index
        keep = np.ones(nv)
        keep[k] = 0.0
        mask = sp.diags(keep)
        L_anchored = mask @ L @ mask + sp.csr_matrix(([1.0], ([k], [k])), shape=(nv, nv))
        self._L_anchored = L_anchored.tocsc()
        self._factor = splu(self._L_anchored)
        self._GtA = GtA.tocsr()
        # projection I - n n^T per face strips the normal-convention column
        n = mesh.face_normals
        self._tangent_proj = np.eye(3) - np.einsum("fi,fj->fij", n, n)

    @staticmethod
    def _check_connected(mesh: Mesh) -> None:
        nv = mesh.n_vertices
        f = mesh.faces
        i = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
        j = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
        adj = sp.csr_matrix((np.ones(len(i)), (i, j)), shape=(nv, nv))
        n_comp, labels = connected_components(adj, directed=False)
        if n_comp > 1:
            sizes = np.bincount(labels)
            detail = ", ".join(f"component {c}: {s} vertices" for c, s in enumerate(sizes))
            raise SolverError(
                f"mesh is disconnected ({n_comp} components: {detail}); "
                f"the anchored Poisson system would be singular"
            )

    def apply(self, vertices: np.ndarray) -> JacobianField:
        """Jacobians of the embedding, full convention (normal column unit).

        Applying this to the source vertices yields the identity on every
        face.
        """
        return jacobians_of_map(self.mesh, vertices)

    def tangential_jacobians(self, vertices: np.ndarray) -> np.ndarray:
        """Linear part: (F, 3, 3) with J n = 0 per face."""
        jt = (self.G @ np.asarray(vertices, dtype=np.float64)).reshape(-1, 3, 3)
        return jt.transpose(0, 2, 1)

    def _rhs(self, field: JacobianField) -> np.ndarray:
        # targets projected to the tangential subspace; stacked like G output
        t = np.einsum("fij,fkj->fik", self._tangent_proj, field.per_face)
        return self._GtA @ t.reshape(-1, 3)

    def solve(self, field: JacobianField, anchor_target: Optional[np.ndarray] = None
              ) -> np.ndarray:
        """Anchored least-squares vertex embedding for a Jacobian field."""
        if field.face_count != self.mesh.n_faces:
            raise SolverError(
                f"field has {field.face_count} faces, mesh has {self.mesh.n_faces}")
        k = self.anchor_index
        p = self.mesh.vertices[k] if anchor_target is None else np.asarray(
            anchor_target, dtype=np.float64)
        rhs = self._rhs(field)
        rhs = rhs - np.outer(self._L_cols_anchor, p)
        rhs[k] = p
        x = self._factor.solve(rhs)
        denom = np.linalg.norm(rhs)
        resid = np.linalg.norm(self._L_anchored @ x - rhs) / max(denom, 1e-300)
        if resid > SOLVE_RESIDUAL_TOL:
            raise SolverError(f"solver residual {resid:.3e} exceeds {SOLVE_RESIDUAL_TOL}")
        return x

    def solve_adjoint(self, upstream: np.ndarray) -> np.ndarray:
        """Gradient of a scalar through the solve, w.r.t. each J_i.

        ``upstream`` is d(scalar)/d(vertices), (V, 3). Returns (F, 3, 3).
        One adjoint solve against the cached factorization; the system is
        symmetric so the same factor is reused.
        """
        g = np.asarray(upstream, dtype=np.float64)
        if g.shape != (self.mesh.n_vertices, 3):
            raise SolverError(f"upstream gradient must be (V, 3), got {g.shape}")
        mu = self._factor.solve(g)
        mu[self.anchor_index] = 0.0  # pinned vertex: rhs row is constant
        dT = (self._GtA.T @ mu).reshape(-1, 3, 3)
        # chain through target projection: T_f = P_f J_f^T
        return np.einsum("fbj,fbc->fjc", dT, self._tangent_proj)


def jacobians_of_map(source: Mesh, deformed_vertices: np.ndarray) -> JacobianField:
    """Per-face 3x3 matrices mapping [e1, e2, n] to [e1', e2', n'].

    The tangential action is the true map gradient; the third column maps
    the source unit normal to the deformed unit normal (no stretch).
    """
    dv = np.asarray(deformed_vertices, dtype=np.float64)
    if dv.shape != source.vertices.shape:
        raise MeshError(
            f"deformed vertices shape {dv.shape} != source {source.vertices.shape}")
    e1p, e2p, np_, areas = face_frames(dv, source.faces)
    bad = np.nonzero(areas <= 0)[0]
    if len(bad):
        raise MeshError(f"deformed face {int(bad[0])} is degenerate")
    src_frames = np.stack([source.face_e1, source.face_e2, source.face_normals], axis=2)
    dst_frames = np.stack([e1p, e2p, np_], axis=2)
    jac = dst_frames @ np.linalg.inv(src_frames)
    return JacobianField(jac)


def poisson_solve(op: GradientOperator, field: JacobianField,
                  anchor_target: Optional[np.ndarray] = None) -> np.ndarray:
    """Minimize sum_i t_i ||grad_i(gamma) - J_i||^2 with the anchor pinned."""
    return op.solve(field, anchor_target)


def poisson_solve_adjoint(op: GradientOperator, upstream: np.ndarray) -> np.ndarray:
    """Exact d(scalar)/dJ_i for any scalar of the solve output."""
    return op.solve_adjoint(upstream)


def identity_mask_assign(field: JacobianField, vertex_mask: np.ndarray,
                         faces: np.ndarray) -> JacobianField:
    """Set J_i = I on every face whose three vertices all fall outside the
    mask; faces touching the masked region keep their Jacobians, which lets
    the subsequent solve blend the boundary smoothly."""
    mask = np.asarray(vertex_mask, dtype=bool)
    f = np.asarray(faces)
    if f.ndim != 2 or f.shape[1] != 3:
        raise ValueError("faces must be (F, 3)")
    if len(field.per_face) != len(f):
        raise ValueError("field/faces length mismatch")
    out = field.per_face.copy()
    outside = ~mask[f].any(axis=1)
    out[outside] = np.eye(3)
    return JacobianField(out)
