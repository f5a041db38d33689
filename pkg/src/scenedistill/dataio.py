"""KITTI-style file formats and the on-disk dataset layout.

Formats (all PNG unless noted):

* depth: 16-bit single channel, ``depth = raw / 256`` meters, raw 0 = invalid
* flow: 16-bit RGB, ``u = (R - 2**15) / 64``, ``v = (G - 2**15) / 64``, valid = ``B == 1``
* labels: 8-bit single channel class ids, 255 = ignore
* masks: 8-bit single channel, 0 / 255
* motion probability: 16-bit single channel, ``p = raw / 65535``
* images: 8- or 16-bit RGB, normalized to [0, 1]
* calibration (text): first data line ``fx fy cx cy``; then one line per
  source frame with the 12 row-major entries of ``[R|t]``, optionally
  prefixed by ``<source_id>:``. ``#`` starts a comment.

Layout under a dataset root::

    image/<frame>.png       depth/<target>.png     semantic/<target>.png
    calib/<target>.txt      flow/<target>_<source>[_rigid].png
    mask/<target>_<source>_<kind>.png   mask/<target>_dynamic.png
    prob/<target>_<source>.png
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import cv2
import numpy as np

from .core import DepthMap, FlowField, MotionProbMap, as_image, as_labels, as_mask
from .errors import (
    DecodeError,
    DimensionMismatch,
    NonOrthonormalRotation,
    ParseError,
    WrongBitDepth,
)
from .geometry import CameraIntrinsics, RelativePose

FLOW_OFFSET = 2 ** 15
FLOW_SCALE = 64.0
DEPTH_SCALE = 256.0
PROB_SCALE = 65535.0
ORTHO_TOL = 1e-6


def frame_id(index: int) -> str:
    return f"{index:06d}"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _write_png(path, arr: np.ndarray) -> None:
    ok, buf = cv2.imencode(".png", arr)
    if not ok:
        raise DecodeError(f"could not encode {path}")
    atomic_write_bytes(path, buf.tobytes())


def _read_png(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DecodeError(f"no such file: {path}")
    data = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    arr = cv2.imdecode(data, cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise DecodeError(f"could not decode {path}")
    return arr


def _expect(arr, path, dtype, channels):
    if arr.dtype != dtype:
        raise WrongBitDepth(f"{path}: expected {np.dtype(dtype).itemsize * 8}-bit data, got {arr.dtype}")
    got = 1 if arr.ndim == 2 else arr.shape[2]
    if got != channels:
        raise DecodeError(f"{path}: expected {channels} channel(s), got {got}")


def read_depth_png(path) -> DepthMap:
    raw = _read_png(path)
    _expect(raw, path, np.uint16, 1)
    return DepthMap(raw / DEPTH_SCALE, raw > 0)


def write_depth_png(depth: DepthMap, path) -> None:
    raw = np.round(depth.values * DEPTH_SCALE)
    if raw[depth.valid].max(initial=1) > 65535 or raw[depth.valid].min(initial=1) < 1:
        raise ValueError("depth outside the representable range (1/256 .. 255.996 m)")
    _write_png(path, np.where(depth.valid, raw, 0).astype(np.uint16))


def read_flow_png(path) -> FlowField:
    raw = _read_png(path)
    _expect(raw, path, np.uint16, 3)
    rgb = raw[..., ::-1].astype(np.float64)
    uv = (rgb[..., :2] - FLOW_OFFSET) / FLOW_SCALE
    return FlowField(uv, rgb[..., 2] == 1)


def write_flow_png(f: FlowField, path) -> None:
    raw = np.round(f.uv * FLOW_SCALE) + FLOW_OFFSET
    if raw.min() < 0 or raw.max() > 65535:
        raise ValueError("flow outside the representable range (+-512 px)")
    rgb = np.concatenate([raw, f.valid[..., None].astype(np.float64)], axis=2).astype(np.uint16)
    _write_png(path, rgb[..., ::-1])


def read_label_png(path) -> np.ndarray:
    raw = _read_png(path)
    _expect(raw, path, np.uint8, 1)
    return raw.astype(np.int64)


def write_label_png(labels, path) -> None:
    _write_png(path, as_labels(labels).astype(np.uint8))


def read_mask_png(path) -> np.ndarray:
    raw = _read_png(path)
    _expect(raw, path, np.uint8, 1)
    if not np.all((raw == 0) | (raw == 255)):
        raise DecodeError(f"{path}: mask values must be 0 or 255")
    return (raw == 255).astype(np.uint8)


def write_mask_png(mask, path) -> None:
    _write_png(path, as_mask(mask) * np.uint8(255))


def read_prob_png(path) -> MotionProbMap:
    raw = _read_png(path)
    _expect(raw, path, np.uint16, 1)
    return MotionProbMap(raw / PROB_SCALE)


def write_prob_png(p: MotionProbMap, path) -> None:
    _write_png(path, np.round(p.values * PROB_SCALE).astype(np.uint16))


def read_image(path) -> np.ndarray:
    raw = _read_png(path) if str(path).lower().endswith(".png") else _read_any(path)
    if raw.ndim == 2:
        raw = np.repeat(raw[..., None], 3, axis=2)
    if raw.shape[2] == 4:
        raw = raw[..., :3]
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise WrongBitDepth(f"{path}: unsupported image dtype {raw.dtype}")
    return raw[..., ::-1] / scale


def _read_any(path) -> np.ndarray:
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise DecodeError(f"could not decode {path}")
    return arr


def write_image(img, path, bit_depth: int = 16) -> None:
    img = as_image(img)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if bit_depth == 8:
        raw = np.round(img * 255.0).astype(np.uint8)
    elif bit_depth == 16:
        raw = np.round(img * 65535.0).astype(np.uint16)
    else:
        raise ValueError("bit_depth must be 8 or 16")
    _write_png(path, raw[..., ::-1])


class Calibration(NamedTuple):
    intrinsics: CameraIntrinsics
    poses: list
    source_ids: list


def _orthonormalize(Rt: np.ndarray, where: str) -> RelativePose:
    R = Rt[:, :3]
    if np.linalg.det(R) <= 0:
        raise NonOrthonormalRotation(f"{where}: rotation has non-positive determinant")
    if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL:
        raise NonOrthonormalRotation(f"{where}: rotation is not orthonormal within {ORTHO_TOL}")
    U, _, Vt = np.linalg.svd(R)
    return RelativePose(U @ Vt, Rt[:, 3])


def parse_calib(text: str, name: str = "<calib>") -> Calibration:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        label = None
        if ":" in line:
            label, line = (s.strip() for s in line.split(":", 1))
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError as exc:
            raise ParseError(f"{name}:{lineno}: non-numeric entry") from exc
        if not all(np.isfinite(values)):
            raise ParseError(f"{name}:{lineno}: non-finite entry")
        rows.append((lineno, label, values))
    if not rows:
        raise ParseError(f"{name}: empty calibration")
    lineno, _, k = rows[0]
    if len(k) != 4:
        raise ParseError(f"{name}:{lineno}: intrinsics line needs 4 values (fx fy cx cy)")
    try:
        intrinsics = CameraIntrinsics(*k)
    except ValueError as exc:
        raise ParseError(f"{name}:{lineno}: {exc}") from exc
    poses, ids = [], []
    for lineno, label, values in rows[1:]:
        if len(values) != 12:
            raise ParseError(f"{name}:{lineno}: pose line needs 12 values ([R|t] row-major)")
        poses.append(_orthonormalize(np.array(values).reshape(3, 4), f"{name}:{lineno}"))
        ids.append(label)
    return Calibration(intrinsics, poses, ids)


def read_calib(path) -> Calibration:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc}") from exc
    return parse_calib(text, str(path))


def format_calib(intrinsics: CameraIntrinsics, poses, source_ids=None) -> str:
    source_ids = source_ids or [None] * len(poses)
    lines = ["# fx fy cx cy, then one [R|t] row-major line per source frame",
             " ".join(repr(v) for v in (intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy))]
    for sid, pose in zip(source_ids, poses):
        body = " ".join(repr(float(v)) for v in pose.matrix.ravel())
        lines.append(f"{sid}: {body}" if sid is not None else body)
    return "\n".join(lines) + "\n"


def write_calib(path, intrinsics: CameraIntrinsics, poses, source_ids=None) -> None:
    atomic_write_text(path, format_calib(intrinsics, poses, source_ids))


@dataclass
class Layout:
    """Path conventions for a dataset root."""

    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    def image(self, frame):
        return self.root / "image" / f"{frame}.png"

    def depth(self, target):
        return self.root / "depth" / f"{target}.png"

    def semantic(self, target):
        return self.root / "semantic" / f"{target}.png"

    def calib(self, target):
        return self.root / "calib" / f"{target}.txt"

    def flow(self, target, source, kind=None):
        suffix = f"_{kind}" if kind else ""
        return self.root / "flow" / f"{target}_{source}{suffix}.png"

    def mask(self, target, source, kind):
        name = f"{target}_{kind}" if source is None else f"{target}_{source}_{kind}"
        return self.root / "mask" / f"{name}.png"

    def prob(self, target, source):
        return self.root / "prob" / f"{target}_{source}.png"

    def targets(self) -> list:
        """Target frame ids, i.e. frames that come with a calibration file."""
        return sorted(p.stem for p in (self.root / "calib").glob("*.txt"))

    def pairs(self, subdir="flow", kind=None) -> list:
        """``(target, source)`` ids of the per-pair files present under ``subdir``."""
        out = []
        for p in sorted((self.root / subdir).glob("*.png")):
            parts = p.stem.split("_")
            if kind is None and len(parts) == 2:
                out.append((parts[0], parts[1]))
            elif kind is not None and len(parts) == 3 and parts[2] == kind:
                out.append((parts[0], parts[1]))
        return out


@dataclass
class FrameBundle:
    """Everything stored for one target frame and its source frames."""

    root: Path
    target: str
    sources: list
    intrinsics: CameraIntrinsics
    poses: dict
    target_image: np.ndarray
    source_images: dict
    depth: DepthMap | None = None
    semantic: np.ndarray | None = None
    flows: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.target_image.shape[:2]


def load_bundle(root, target: str, with_flow: bool = True) -> FrameBundle:
    """Read one target frame; dimension problems are reported together in one error."""
    layout = Layout(root)
    calib = read_calib(layout.calib(target))
    sources = [sid if sid is not None else str(i) for i, sid in enumerate(calib.source_ids)]
    target_image = read_image(layout.image(target))
    source_images = {s: read_image(layout.image(s)) for s in sources}
    depth = read_depth_png(layout.depth(target)) if layout.depth(target).exists() else None
    semantic = read_label_png(layout.semantic(target)) if layout.semantic(target).exists() else None
    flows = {}
    if with_flow:
        for s in sources:
            if layout.flow(target, s).exists():
                flows[s] = read_flow_png(layout.flow(target, s))

    shape = target_image.shape[:2]
    problems = []
    named = [(f"image/{s}", img) for s, img in source_images.items()]
    if depth is not None:
        named.append(("depth", depth.values))
    if semantic is not None:
        named.append(("semantic", semantic))
    named += [(f"flow/{target}_{s}", f.uv) for s, f in flows.items()]
    for name, arr in named:
        if arr.shape[:2] != shape:
            problems.append(f"{name} {arr.shape[:2]}")
    if problems:
        raise DimensionMismatch(f"frame {target} (image {shape}) has mismatched rasters: " + ", ".join(problems))
    return FrameBundle(Path(root), target, sources, calib.intrinsics, dict(zip(sources, calib.poses)),
                       target_image, source_images, depth, semantic, flows)
