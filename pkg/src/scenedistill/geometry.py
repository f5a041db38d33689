"""Pinhole projection, rigid flow and bilinear sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import DepthMap, FlowField, as_image, check_same_shape
from .errors import InvalidBuffer, NonOrthonormalRotation, NonPositiveDepth

ROTATION_TOL = 1e-9
# slack on the in-frame test so coordinates landing exactly on the border survive roundoff
BOUNDS_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise InvalidBuffer(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidBuffer("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def inverse(self) -> np.ndarray:
        return np.array([
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0],
        ])


@dataclass(frozen=True)
class RelativePose:
    """Rigid transform mapping target-camera coordinates into the source camera."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise InvalidBuffer("pose needs a 3x3 rotation and a 3-vector translation")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvalidBuffer("pose contains NaN or Inf")
        if np.abs(R.T @ R - np.eye(3)).max() > ROTATION_TOL or abs(np.linalg.det(R) - 1.0) > ROTATION_TOL:
            raise NonOrthonormalRotation("rotation is not a proper orthonormal matrix")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RelativePose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "RelativePose":
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, Rt) -> "RelativePose":
        Rt = np.asarray(Rt, dtype=np.float64)
        return cls(Rt[:3, :3], Rt[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        """3x4 ``[R|t]``."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def inverse(self) -> "RelativePose":
        return RelativePose(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, first: "RelativePose") -> "RelativePose":
        """Return ``self o first`` (apply ``first``, then ``self``)."""
        return RelativePose(self.rotation @ first.rotation,
                            self.rotation @ first.translation + self.translation)


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    kx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


class Reprojection(NamedTuple):
    x: float
    y: float
    z: float
    behind_camera: bool


def reproject(p_t, depth: float, K: CameraIntrinsics, T: RelativePose) -> Reprojection:
    """Map target pixel ``p_t`` with depth ``depth`` into the source image.

    ``x``/``y`` are NaN when the point lands behind the source camera.
    """
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be > 0, got {depth}")
    ray = K.inverse @ np.array([p_t[0], p_t[1], 1.0])
    X = T.rotation @ (depth * ray) + T.translation
    if X[2] <= 0:
        return Reprojection(float("nan"), float("nan"), float(X[2]), True)
    p = K.matrix @ X
    return Reprojection(float(p[0] / p[2]), float(p[1] / p[2]), float(X[2]), False)


def pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def _project_depth(D: DepthMap, K: CameraIntrinsics, T: RelativePose):
    xs, ys = pixel_grid(D.height, D.width)
    d = D.values
    Kinv = K.inverse
    pix = np.stack([xs, ys, np.ones_like(xs)], axis=-1)
    cam = d[..., None] * (pix @ Kinv.T)
    src = cam @ T.rotation.T + T.translation
    z = src[..., 2]
    front = D.valid & (z > 0)
    zsafe = np.where(front, z, 1.0)
    proj = src @ K.matrix.T
    px = np.where(front, proj[..., 0] / zsafe, 0.0)
    py = np.where(front, proj[..., 1] / zsafe, 0.0)
    return xs, ys, px, py, front


def rigid_flow(D: DepthMap, K: CameraIntrinsics, T: RelativePose) -> FlowField:
    """Flow induced by camera motion alone: reprojected minus original coordinates."""
    xs, ys, px, py, front = _project_depth(D, K, T)
    return FlowField.from_components(px - xs, py - ys, front)


def in_frame(px, py, height: int, width: int):
    return ((px >= -BOUNDS_TOL) & (px <= width - 1 + BOUNDS_TOL)
            & (py >= -BOUNDS_TOL) & (py <= height - 1 + BOUNDS_TOL))


def boundary_mask(D: DepthMap, K: CameraIntrinsics, T: RelativePose) -> np.ndarray:
    """1 where the reprojected pixel stays inside the source frame, 0 otherwise."""
    _, _, px, py, front = _project_depth(D, K, T)
    inside = in_frame(px, py, D.height, D.width)
    return (front & inside).astype(np.uint8)


def _axis_cell(coord, size):
    """Clamp sample coordinates and split them into a lattice cell plus weight."""
    c = np.clip(coord, 0.0, size - 1)
    if size == 1:
        zero = np.zeros(c.shape, dtype=np.intp)
        return zero, zero, np.zeros_like(c), np.zeros(c.shape, dtype=bool)
    i0 = np.minimum(np.floor(c).astype(np.intp), size - 2)
    w = c - i0
    # right-hand derivative: zero once clamped or sitting on the last sample
    live = (coord >= 0) & (coord < size - 1)
    return i0, i0 + 1, w, live


def sample_cells(flow: FlowField):
    xs, ys = pixel_grid(flow.height, flow.width)
    x0, x1, wx, live_x = _axis_cell(xs + flow.u, flow.width)
    y0, y1, wy, live_y = _axis_cell(ys + flow.v, flow.height)
    return (x0, x1, wx, live_x), (y0, y1, wy, live_y)


def _corners(src, cells):
    (x0, x1, _, _), (y0, y1, _, _) = cells
    return src[y0, x0], src[y0, x1], src[y1, x0], src[y1, x1]


def _weights(src, cells):
    (_, _, wx, _), (_, _, wy, _) = cells
    if src.ndim == 3:
        return wx[..., None], wy[..., None]
    return wx, wy


def bilinear_warp(src, flow: FlowField) -> np.ndarray:
    """Sample ``src`` at ``p + flow(p)`` with clamp-to-edge borders."""
    src = as_image(src)
    check_same_shape(src, flow.uv, names=("src", "flow"))
    cells = sample_cells(flow)
    i00, i01, i10, i11 = _corners(src, cells)
    wx, wy = _weights(src, cells)
    top = i00 + wx * (i01 - i00)
    bottom = i10 + wx * (i11 - i10)
    return top + wy * (bottom - top)


def bilinear_warp_jacobian(src, flow: FlowField) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of :func:`bilinear_warp` output with respect to u and v."""
    src = as_image(src)
    check_same_shape(src, flow.uv, names=("src", "flow"))
    cells = sample_cells(flow)
    i00, i01, i10, i11 = _corners(src, cells)
    wx, wy = _weights(src, cells)
    live_x, live_y = cells[0][3], cells[1][3]
    if src.ndim == 3:
        live_x, live_y = live_x[..., None], live_y[..., None]
    du = ((1 - wy) * (i01 - i00) + wy * (i11 - i10)) * live_x
    dv = ((1 - wx) * (i10 - i00) + wx * (i11 - i01)) * live_y
    return du, dv
