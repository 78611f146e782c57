"""Deterministic multi-view software rasterizer with interior gradients.

Shading is a grey headlight model: albedo 0.5 times the Lambert term
against a light placed at the camera, plus 0.2 ambient, clamped to [0, 1].
With the light at the camera the light direction at a pixel equals the
pixel's ray direction, so a pixel's value depends on vertex positions only
through its covering face's unit normal. Gradients are exact under the
interior model (coverage and visibility held fixed); silhouette-edge terms
are deliberately dropped — score distillation over many random views
averages them out, and the interior model keeps gradients testable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, face_frames

ALBEDO = 0.5
AMBIENT = 0.2
NEAR_CLIP = 1e-6


@dataclass(frozen=True)
class Camera:
    """Perspective pinhole camera with square aspect."""

    position: np.ndarray
    target: np.ndarray
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    fov: float = np.deg2rad(45.0)
    resolution: int = 128

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=np.float64))
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64))
        view = self.target - self.position
        if np.linalg.norm(view) == 0:
            raise ValueError("camera position and target coincide")
        if not 0 < self.fov < np.pi:
            raise ValueError(f"fov must be in (0, pi), got {self.fov}")

    def axes(self):
        """Right-handed (right, up, forward) orthonormal frame."""
        fwd = self.target - self.position
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, self.up)
        nr = np.linalg.norm(right)
        if nr < 1e-12:  # looking straight along up: pick any perpendicular
            right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
            nr = np.linalg.norm(right)
            if nr < 1e-12:
                right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
                nr = np.linalg.norm(right)
        right = right / nr
        up = np.cross(right, fwd)
        return right, up, fwd


@dataclass
class PixelMap:
    """Pixel-to-face and vertex-to-pixel relations for one view.

    ``face_index`` is -1 on background pixels. ``bary`` holds
    perspective-correct barycentric coordinates of each covered pixel's
    center with respect to its dominant face. ``vertex_pixel`` maps each
    visible vertex to its nearest pixel (row, col) and is (-1, -1) for
    vertices that are occluded, off-screen, or whose pixel's front-most
    face does not contain them.
    """

    face_index: np.ndarray  # (H, W) int
    bary: np.ndarray        # (H, W, 3) float
    vertex_pixel: np.ndarray  # (V, 2) int

    def visible_vertices(self) -> np.ndarray:
        return np.nonzero(self.vertex_pixel[:, 0] >= 0)[0]


@dataclass
class RenderBatch:
    """Per-view images and pixel maps, in camera order."""

    images: list
    pixel_maps: list
    cameras: list


def sample_cameras(count: int, seed: int, center=(0.0, 0.0, 0.0),
                   radius: float = 2.8, elevation_range=(-30.0, 45.0),
                   fov: float = np.deg2rad(45.0), resolution: int = 128) -> list:
    """Deterministic view ring: azimuths stratified over [0, 2pi), elevations
    uniform in ``elevation_range`` (degrees)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=np.float64)
    lo, hi = np.deg2rad(elevation_range[0]), np.deg2rad(elevation_range[1])
    cams = []
    for i in range(count):
        az = 2 * np.pi * (i + rng.uniform()) / count
        el = rng.uniform(lo, hi) if hi > lo else lo
        pos = center + radius * np.array(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        cams.append(Camera(pos, center, fov=fov, resolution=resolution))
    return cams


def _project(vertices: np.ndarray, camera: Camera, res: int):
    """Continuous pixel coordinates (col, row), forward depth, tan(fov/2)."""
    right, up, fwd = camera.axes()
    d = vertices - camera.position
    x = d @ right
    y = d @ up
    z = d @ fwd
    t = np.tan(camera.fov / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ndc_x = x / (z * t)
        ndc_y = y / (z * t)
    col = (ndc_x + 1) / 2 * res - 0.5
    row = (1 - ndc_y) / 2 * res - 0.5
    return col, row, z, t


def _pixel_rays(camera: Camera, res: int, cols: np.ndarray, rows: np.ndarray):
    """Unit ray directions through the given pixel centers."""
    right, up, fwd = camera.axes()
    t = np.tan(camera.fov / 2)
    ndc_x = (cols + 0.5) / res * 2 - 1
    ndc_y = 1 - (rows + 0.5) / res * 2
    d = (fwd[None, :] + t * (ndc_x[:, None] * right[None, :]
                             + ndc_y[:, None] * up[None, :]))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _gather_fragments(vertices: np.ndarray, faces: np.ndarray, camera: Camera,
                      res: int):
    """All candidate (pixel, face) covers with depth and screen barycentrics.

    Returns flat arrays (pix, face, depth, bary) for pixel centers inside
    their candidate triangle, z-ordering unresolved. Fully vectorized: one
    flat candidate list built from per-face bounding boxes.
    """
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
             np.zeros(0), np.zeros((0, 3)))  # pix, face, zinv, li
    if not len(faces) or not len(vertices):
        return empty
    col, row, z, _ = _project(vertices, camera, res)
    xs, ys, zs = col[faces], row[faces], z[faces]
    area2 = ((xs[:, 1] - xs[:, 0]) * (ys[:, 2] - ys[:, 0])
             - (xs[:, 2] - xs[:, 0]) * (ys[:, 1] - ys[:, 0]))
    ok = (zs > NEAR_CLIP).all(axis=1) & (area2 != 0.0)
    c0 = np.maximum(np.ceil(xs.min(axis=1)), 0).astype(np.int64)
    c1 = np.minimum(np.floor(xs.max(axis=1)), res - 1).astype(np.int64)
    r0 = np.maximum(np.ceil(ys.min(axis=1)), 0).astype(np.int64)
    r1 = np.minimum(np.floor(ys.max(axis=1)), res - 1).astype(np.int64)
    w = np.where(ok, c1 - c0 + 1, 0).clip(min=0)
    h = np.where(ok, r1 - r0 + 1, 0).clip(min=0)
    counts = w * h
    total = int(counts.sum())
    if total == 0:
        return empty
    face = np.repeat(np.arange(len(faces)), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    within = np.arange(total) - np.repeat(offsets, counts)
    wf = w[face]
    cc = (c0[face] + within % wf).astype(np.float64)
    rr = (r0[face] + within // wf).astype(np.float64)
    fx, fy = xs[face], ys[face]
    w0 = (fx[:, 2] - fx[:, 1]) * (rr - fy[:, 1]) - (fy[:, 2] - fy[:, 1]) * (cc - fx[:, 1])
    w1 = (fx[:, 0] - fx[:, 2]) * (rr - fy[:, 2]) - (fy[:, 0] - fy[:, 2]) * (cc - fx[:, 2])
    w2 = (fx[:, 1] - fx[:, 0]) * (rr - fy[:, 0]) - (fy[:, 1] - fy[:, 0]) * (cc - fx[:, 0])
    sgn = np.sign(area2)[face]
    inside = (sgn * w0 >= 0) & (sgn * w1 >= 0) & (sgn * w2 >= 0)
    if not inside.any():
        return empty
    face = face[inside]
    lam = np.stack([w0[inside], w1[inside], w2[inside]], axis=1) / area2[face, None]
    # perspective-correct interpolation through 1/z; zinv orders depth and
    # normalizing li gives the perspective-correct barycentrics
    li = lam / zs[face]
    zinv = li.sum(axis=1)
    pix = rr[inside].astype(np.int64) * res + cc[inside].astype(np.int64)
    return pix, face, zinv, li


def _resolve_depth(pix, face, zinv, li):
    """Front-most fragment per pixel; ties broken by smaller face index."""
    if not len(pix):
        return pix, face, zinv, li
    order = np.lexsort((face, -zinv, pix))
    pix, face, zinv, li = pix[order], face[order], zinv[order], li[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    return pix[first], face[first], zinv[first], li[first]


def _shade(normals_unit, rays):
    """Headlight Lambert: 0.5 * |n . ray| + 0.2, clamped to [0, 1]."""
    lam = np.abs(np.einsum("ij,ij->i", normals_unit, rays))
    return np.clip(ALBEDO * lam + AMBIENT, 0.0, 1.0)


def rasterize(mesh: Mesh, vertices: np.ndarray, camera: Camera,
              supersample: int = 1, build_map: bool = True
              ) -> tuple[np.ndarray, PixelMap]:
    """Z-buffered perspective render plus the vertex-to-pixel map.

    The image is rasterized at ``supersample`` times the camera resolution
    and box-downsampled. The pixel map is built at the camera resolution
    from the dominant covering face per pixel (the face covering the most
    subsamples, ties to the smaller index). Behind-camera geometry yields a
    background image and an empty map. ``build_map=False`` skips the map
    (returned empty) when only the image is needed.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    res = camera.resolution
    ss = int(supersample)
    if ss < 1:
        raise ValueError("supersample must be >= 1")
    rs = res * ss
    pix, face, zinv, li = _gather_fragments(vertices, mesh.faces, camera, rs)
    pix, face, zinv, li = _resolve_depth(pix, face, zinv, li)

    img_hi = np.zeros(rs * rs)
    if len(pix):
        _, _, normals, _ = face_frames(vertices, mesh.faces)
        rays = _pixel_rays(camera, rs, (pix % rs).astype(np.float64),
                           (pix // rs).astype(np.float64))
        img_hi[pix] = _shade(normals[face], rays)
    image = img_hi.reshape(res, ss, res, ss).mean(axis=(1, 3))

    face_map = np.full((res, res), -1, dtype=np.int64)
    bary_map = np.zeros((res, res, 3))
    if not build_map:
        return image, PixelMap(face_map, bary_map,
                               np.full((len(vertices), 2), -1, dtype=np.int64))
    if len(pix):
        tgt = (pix // rs // ss) * res + (pix % rs) // ss
        # dominant face per target pixel: most subsample wins, tie -> min face
        order = np.lexsort((face, tgt))
        t_s, f_s = tgt[order], face[order]
        group = np.ones(len(t_s), dtype=bool)
        group[1:] = (t_s[1:] != t_s[:-1]) | (f_s[1:] != f_s[:-1])
        starts = np.nonzero(group)[0]
        counts = np.diff(np.append(starts, len(t_s)))
        gt, gf = t_s[starts], f_s[starts]
        pick = np.lexsort((gf, -counts, gt))
        keep = np.ones(len(pick), dtype=bool)
        keep[1:] = gt[pick][1:] != gt[pick][:-1]
        win_t, win_f = gt[pick[keep]], gf[pick[keep]]
        face_map.reshape(-1)[win_t] = win_f
        # barycentrics of the pixel center w.r.t. the dominant face
        ctr_cols, ctr_rows = (win_t % res).astype(np.float64), (win_t // res).astype(np.float64)
        col, row, z, _ = _project(vertices, camera, res)
        tri = mesh.faces[win_f]
        xs, ys = col[tri], row[tri]
        area2 = ((xs[:, 1] - xs[:, 0]) * (ys[:, 2] - ys[:, 0])
                 - (xs[:, 2] - xs[:, 0]) * (ys[:, 1] - ys[:, 0]))
        w0 = ((xs[:, 2] - xs[:, 1]) * (ctr_rows - ys[:, 1])
              - (ys[:, 2] - ys[:, 1]) * (ctr_cols - xs[:, 1]))
        w1 = ((xs[:, 0] - xs[:, 2]) * (ctr_rows - ys[:, 2])
              - (ys[:, 0] - ys[:, 2]) * (ctr_cols - xs[:, 2]))
        w2 = ((xs[:, 1] - xs[:, 0]) * (ctr_rows - ys[:, 0])
              - (ys[:, 1] - ys[:, 0]) * (ctr_cols - xs[:, 0]))
        lam = np.stack([w0, w1, w2], axis=1) / area2[:, None]
        li = lam / z[tri]
        b = li / li.sum(axis=1)[:, None]
        bary_map.reshape(-1, 3)[win_t] = b

    vertex_pixel = _vertex_pixels(mesh, vertices, camera, res, face_map)
    return image, PixelMap(face_map, bary_map, vertex_pixel)


def _vertex_pixels(mesh: Mesh, vertices, camera, res, face_map) -> np.ndarray:
    """Nearest pixel center per vertex where the front-most face contains it."""
    col, row, z, _ = _project(vertices, camera, res)
    out = np.full((len(vertices), 2), -1, dtype=np.int64)
    c = np.round(col).astype(np.int64)
    r = np.round(row).astype(np.int64)
    ok = (z > NEAR_CLIP) & (c >= 0) & (c < res) & (r >= 0) & (r < res)
    idx = np.nonzero(ok)[0]
    fm = face_map[r[idx], c[idx]]
    covered = fm >= 0
    idx, fm = idx[covered], fm[covered]
    owns = (mesh.faces[fm] == idx[:, None]).any(axis=1)
    out[idx[owns], 0] = r[idx[owns]]
    out[idx[owns], 1] = c[idx[owns]]
    return out


def _bilinear_1d(n_out: int, n_in: int) -> sp.csr_matrix:
    """1D bilinear sampling matrix at output pixel centers (cv-style)."""
    k = n_in / n_out
    y = (np.arange(n_out) + 0.5) * k - 0.5
    y0 = np.floor(y).astype(np.int64)
    wy = y - y0
    rows = np.repeat(np.arange(n_out), 2)
    cols = np.stack([np.clip(y0, 0, n_in - 1), np.clip(y0 + 1, 0, n_in - 1)],
                    axis=1).ravel()
    vals = np.stack([1 - wy, wy], axis=1).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_out, n_in))


class Downsampler:
    """Bilinear downsampling as an explicit sparse linear map with adjoint."""

    def __init__(self, in_shape: tuple[int, int], out_shape: tuple[int, int]):
        hi, wi = in_shape
        ho, wo = out_shape
        if hi % ho or wi % wo:
            raise ValueError(f"{in_shape} not divisible by {out_shape}")
        self.in_shape, self.out_shape = (hi, wi), (ho, wo)
        self._dr = _bilinear_1d(ho, hi)
        self._dc = _bilinear_1d(wo, wi)

    def apply(self, image: np.ndarray) -> np.ndarray:
        if image.shape != self.in_shape:
            raise ValueError(f"expected {self.in_shape}, got {image.shape}")
        return np.asarray(self._dr @ image @ self._dc.T)

    def adjoint(self, upstream: np.ndarray) -> np.ndarray:
        if upstream.shape != self.out_shape:
            raise ValueError(f"expected {self.out_shape}, got {upstream.shape}")
        return np.asarray(self._dr.T @ upstream @ self._dc)


def downsample(image: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear downsample; shapes must divide evenly (e.g. 128 -> 32)."""
    return Downsampler(image.shape, out_shape).apply(np.asarray(image, dtype=np.float64))


def render_gradient(mesh: Mesh, vertices: np.ndarray, camera: Camera,
                    upstream: np.ndarray, supersample: int = 1) -> np.ndarray:
    """Exact per-vertex gradient of ``sum(upstream * image)`` under the
    interior model (coverage fixed). ``upstream`` is at camera resolution."""
    vertices = np.asarray(vertices, dtype=np.float64)
    res = camera.resolution
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (res, res):
        raise ValueError(f"upstream must be {(res, res)}, got {upstream.shape}")
    ss = int(supersample)
    rs = res * ss
    pix, face, zinv, li = _gather_fragments(vertices, mesh.faces, camera, rs)
    pix, face, zinv, li = _resolve_depth(pix, face, zinv, li)
    grad = np.zeros_like(vertices)
    if not len(pix):
        return grad
    e1, e2, normals, _ = face_frames(vertices, mesh.faces)
    rays = _pixel_rays(camera, rs, (pix % rs).astype(np.float64),
                       (pix // rs).astype(np.float64))
    n = normals[face]
    dot = np.einsum("ij,ij->i", n, rays)
    val = ALBEDO * np.abs(dot) + AMBIENT
    active = (val > 0.0) & (val < 1.0) & (dot != 0.0)
    up_sub = upstream[pix // rs // ss, (pix % rs) // ss] / (ss * ss)
    # d(value)/d(n_hat) accumulated per face, then chained through the
    # normalization and the cross product
    coeff = np.where(active, up_sub * ALBEDO * np.sign(dot), 0.0)
    g_n = np.zeros((mesh.n_faces, 3))
    np.add.at(g_n, face, coeff[:, None] * rays)
    cr = np.cross(e1, e2)
    nrm = np.linalg.norm(cr, axis=1)
    used = nrm > 0
    q = np.zeros_like(g_n)
    nu = normals[used]
    q[used] = (g_n[used] - nu * np.einsum("ij,ij->i", nu, g_n[used])[:, None]) \
        / nrm[used][:, None]
    gv1 = np.cross(e2, q)
    gv2 = np.cross(q, e1)
    gv0 = -gv1 - gv2
    np.add.at(grad, mesh.faces[:, 0], gv0)
    np.add.at(grad, mesh.faces[:, 1], gv1)
    np.add.at(grad, mesh.faces[:, 2], gv2)
    return grad


def rasterize_vertex_mask(mesh: Mesh, vertices: np.ndarray,
                          vertex_mask: np.ndarray, camera: Camera,
                          resolution: Optional[int] = None) -> np.ndarray:
    """Binary view mask: pixel is 1 iff its front-most face has at least one
    masked vertex. Rendered at the attention-patch resolution by default."""
    mask = np.asarray(vertex_mask, dtype=bool)
    if mask.shape != (mesh.n_vertices,):
        raise ValueError("vertex_mask must have one entry per vertex")
    res = camera.resolution if resolution is None else int(resolution)
    cam = Camera(camera.position, camera.target, camera.up, camera.fov, res)
    pix, face, zinv, li = _gather_fragments(
        np.asarray(vertices, dtype=np.float64), mesh.faces, cam, res)
    pix, face, zinv, li = _resolve_depth(pix, face, zinv, li)
    out = np.zeros((res, res), dtype=bool)
    if len(pix):
        out.reshape(-1)[pix] = mask[mesh.faces[face]].any(axis=1)
    return out


def face_map_at(mesh: Mesh, vertices: np.ndarray, camera: Camera,
                resolution: int) -> np.ndarray:
    """Front-most face per pixel at an arbitrary resolution (-1 = none)."""
    cam = Camera(camera.position, camera.target, camera.up, camera.fov, int(resolution))
    pix, face, zinv, li = _gather_fragments(
        np.asarray(vertices, dtype=np.float64), mesh.faces, cam, int(resolution))
    pix, face, zinv, li = _resolve_depth(pix, face, zinv, li)
    out = np.full((resolution, resolution), -1, dtype=np.int64)
    if len(pix):
        out.reshape(-1)[pix] = face
    return out


def save_png(image: np.ndarray, path) -> None:
    """Write a [0,1] float image as 8-bit grayscale PNG."""
    from PIL import Image

    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def load_png(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG back to [0,1] floats."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
