"""Raster types and elementwise helpers.

Conventions used everywhere in the package:

* arrays are row-major ``(H, W[, C])``; ``x`` runs rightward along columns,
  ``y`` downward along rows, and pixel ``(x, y)`` has its center at integer
  coordinates with the origin on the top-left pixel;
* all arithmetic happens in float64;
* sparse data carries an explicit boolean ``valid`` array instead of
  sentinel values. Invalid entries hold 0 in the payload.

Images, binary masks and label maps are plain numpy arrays validated by
:func:`as_image`, :func:`as_mask` and :func:`as_labels`. Rasters with a
validity channel are small frozen dataclasses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidBuffer

IGNORE_LABEL = 255


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _validity(valid, shape) -> np.ndarray:
    if valid is None:
        return _readonly(np.ones(shape, dtype=bool))
    valid = np.array(valid, dtype=bool)
    if valid.shape != shape:
        raise DimensionMismatch(f"validity shape {valid.shape} != {shape}")
    return _readonly(valid)


def check_same_shape(*arrays, names=None) -> tuple:
    """Raise :class:`DimensionMismatch` unless all rasters share ``(H, W)``."""
    shapes = [tuple(np.shape(a))[:2] for a in arrays]
    if len(set(shapes)) > 1:
        label = ", ".join(f"{n}={s}" for n, s in zip(names or range(len(shapes)), shapes))
        raise DimensionMismatch(f"raster dimensions differ: {label}")
    return shapes[0] if shapes else ()


@dataclass(frozen=True)
class ScalarMap:
    """H x W float map with per-pixel validity."""

    values: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidBuffer(f"expected a 2-D map, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidBuffer("map contains NaN or Inf")
        valid = _validity(self.valid, values.shape)
        values = np.where(valid, values, 0.0)
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "valid", valid)
        self._check()

    def _check(self):
        pass

    @property
    def shape(self):
        return self.values.shape

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


class DepthMap(ScalarMap):
    """Depth in meters; valid entries are strictly positive."""

    def _check(self):
        if np.any(self.values[self.valid] <= 0):
            raise InvalidBuffer("valid depth entries must be > 0")

    @classmethod
    def from_array(cls, depth) -> "DepthMap":
        """Wrap an array, treating non-positive and non-finite entries as invalid."""
        depth = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(depth) & (depth > 0)
        return cls(np.where(valid, depth, 0.0), valid)


class MotionProbMap(ScalarMap):
    """Per-pixel motion probability in [0, 1]."""

    def _check(self):
        if np.any((self.values < 0) | (self.values > 1)):
            raise InvalidBuffer("motion probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class FlowField:
    """H x W x 2 displacement field (u rightward, v downward) with validity."""

    uv: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        uv = np.array(self.uv, dtype=np.float64)
        if uv.ndim != 3 or uv.shape[2] != 2:
            raise InvalidBuffer(f"flow must have shape (H, W, 2), got {uv.shape}")
        if not np.all(np.isfinite(uv)):
            raise InvalidBuffer("flow contains NaN or Inf")
        valid = _validity(self.valid, uv.shape[:2])
        uv = np.where(valid[..., None], uv, 0.0)
        object.__setattr__(self, "uv", _readonly(uv))
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_components(cls, u, v, valid=None) -> "FlowField":
        return cls(np.stack([np.asarray(u, float), np.asarray(v, float)], axis=-1), valid)

    @classmethod
    def zeros(cls, height, width) -> "FlowField":
        return cls(np.zeros((height, width, 2)))

    @property
    def u(self):
        return self.uv[..., 0]

    @property
    def v(self):
        return self.uv[..., 1]

    @property
    def shape(self):
        return self.uv.shape[:2]

    @property
    def height(self):
        return self.uv.shape[0]

    @property
    def width(self):
        return self.uv.shape[1]

    def with_uv(self, uv) -> "FlowField":
        return FlowField(uv, self.valid)


def as_image(img) -> np.ndarray:
    """Validate an image buffer and return it as float64 ``(H, W)`` or ``(H, W, C)``.

    RGB (3-channel) images must lie in [0, 1].
    """
    arr = np.array(img, dtype=np.float64)
    if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] not in (1, 2, 3)):
        raise InvalidBuffer(f"unsupported image shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidBuffer("image contains NaN or Inf")
    if arr.ndim == 3 and arr.shape[2] == 3 and (arr.min(initial=0) < 0 or arr.max(initial=0) > 1):
        raise InvalidBuffer("RGB samples must lie in [0, 1]")
    return arr


def as_mask(mask) -> np.ndarray:
    """Validate a binary mask and return it as ``uint8`` with values in {0, 1}."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InvalidBuffer(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.all((arr == 0) | (arr == 1)):
        raise InvalidBuffer("mask values must be exactly 0 or 1")
    return arr.astype(np.uint8)


def as_labels(labels) -> np.ndarray:
    """Validate a label map: integer ids in [0, 254] plus 255 = ignore."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise InvalidBuffer(f"label map must be 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
            raise InvalidBuffer("label ids must be integers")
    if arr.size and (arr.min() < 0 or arr.max() > IGNORE_LABEL):
        raise InvalidBuffer("label ids must lie in [0, 255]")
    return arr.astype(np.int64)


def flow_norm(f: FlowField) -> ScalarMap:
    """Per-pixel Euclidean norm of a flow field."""
    return ScalarMap(np.hypot(f.u, f.v), f.valid)


def mask_logic(a, b, op: str = "AND") -> np.ndarray:
    a, b = as_mask(a), as_mask(b)
    check_same_shape(a, b, names=("a", "b"))
    op = op.upper()
    if op == "AND":
        return np.minimum(a, b)
    if op == "OR":
        return np.maximum(a, b)
    raise ValueError(f"unknown mask operation {op!r}")


def image_gradients(img) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along x and y.

    Multi-channel images yield the channel mean of the absolute differences;
    single-channel images keep the sign. The last column (for x) and last row
    (for y) are zero.
    """
    img = as_image(img)
    gx = np.zeros(img.shape, dtype=np.float64)
    gy = np.zeros(img.shape, dtype=np.float64)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    if img.ndim == 3:
        if img.shape[2] == 1:
            return gx[..., 0], gy[..., 0]
        return np.abs(gx).mean(axis=2), np.abs(gy).mean(axis=2)
    return gx, gy
