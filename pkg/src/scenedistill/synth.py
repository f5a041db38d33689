"""Synthetic scenes with exact ground truth.

A textured fronto-parallel background plane is seen by a translating camera,
and a textured rectangle at a nearer depth moves independently in image
space. Textures are continuous sums of sinusoids evaluated analytically, so
every frame (and every sub-pixel displacement) is exact.

All geometry is expressed relative to the middle (target) frame ``t``. The
camera pose from the target to frame ``j`` is a pure translation
``(j - t) * cam_translation``; the object's region in frame ``j`` is its
target rectangle moved by the camera-induced flow at the object depth plus
``(j - t) * obj_motion`` pixels.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import DepthMap, FlowField
from .errors import SpecError
from .geometry import BOUNDS_TOL, CameraIntrinsics, RelativePose, pixel_grid
from .motion import CLASS_IDS

ROAD_ID = CLASS_IDS["road"]
CAR_ID = CLASS_IDS["car"]


@dataclass(frozen=True)
class SceneSpec:
    width: int = 64
    height: int = 48
    fx: float = 50.0
    fy: float = 50.0
    cx: float | None = None
    cy: float | None = None
    bg_depth: float = 20.0
    obj_depth: float = 10.0
    obj_rect: tuple = (24, 16, 16, 12)  # x, y, w, h in target pixels
    cam_translation: tuple = (0.8, 0.0, 0.0)  # meters, target -> next frame
    obj_motion: tuple = (-4.0, 1.0)  # pixels per frame
    seed: int = 0
    n_frames: int = 3
    n_sinusoids: int = 6
    min_wavelength: float = 6.0
    max_wavelength: float = 24.0

    def __post_init__(self):
        object.__setattr__(self, "obj_rect", tuple(int(v) for v in self.obj_rect))
        object.__setattr__(self, "cam_translation", tuple(float(v) for v in self.cam_translation))
        object.__setattr__(self, "obj_motion", tuple(float(v) for v in self.obj_motion))
        if self.cx is None:
            object.__setattr__(self, "cx", (self.width - 1) / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", (self.height - 1) / 2.0)
        self.validate()

    def validate(self):
        if self.width < 16 or self.height < 16:
            raise SpecError("scene dimensions must be >= 16")
        if not 0 < self.obj_depth < self.bg_depth:
            raise SpecError("need 0 < obj_depth < bg_depth")
        if len(self.obj_rect) != 4 or len(self.cam_translation) != 3 or len(self.obj_motion) != 2:
            raise SpecError("obj_rect needs 4 values, cam_translation 3, obj_motion 2")
        x, y, w, h = self.obj_rect
        if w < 1 or h < 1 or x < 0 or y < 0 or x + w > self.width or y + h > self.height:
            raise SpecError("object rectangle must lie inside the target frame")
        if self.n_frames < 2:
            raise SpecError("need at least two frames")
        if self.n_sinusoids < 4:
            raise SpecError("textures need at least four sinusoids per channel")
        if not 0 < self.min_wavelength <= self.max_wavelength:
            raise SpecError("invalid texture wavelength range")
        if self.fx <= 0 or self.fy <= 0:
            raise SpecError("focal lengths must be positive")
        tz = self.cam_translation[2]
        for j in range(self.n_frames):
            k = j - self.target_index
            if self.obj_depth + k * tz <= 0 or self.bg_depth + k * tz <= 0:
                raise SpecError("camera passes through the scene")

    @property
    def target_index(self) -> int:
        return self.n_frames // 2

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy)

    def pose(self, j: int) -> RelativePose:
        k = j - self.target_index
        return RelativePose.from_translation(np.array(self.cam_translation) * k)

    def to_text(self) -> str:
        lines = []
        for key, value in sorted(asdict(self).items()):
            if isinstance(value, (tuple, list)):
                value = " ".join(repr(float(v)) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SceneSpec":
        ints = {"width", "height", "seed", "n_frames", "n_sinusoids"}
        tuples = {"obj_rect", "cam_translation", "obj_motion"}
        kwargs = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                key, value = (s.strip() for s in line.split("=", 1))
                if key in tuples:
                    kwargs[key] = tuple(float(v) for v in value.split())
                elif key in ints:
                    kwargs[key] = int(value)
                else:
                    kwargs[key] = float(value)
            except ValueError as exc:
                raise SpecError(f"bad scene spec line {line!r}") from exc
        return cls(**kwargs)


class Texture:
    """Per-channel sum of random-phase sinusoids in target-pixel coordinates."""

    def __init__(self, rng: np.random.Generator, n: int, lo: float, hi: float, channels: int = 3):
        wavelength = rng.uniform(lo, hi, size=(channels, n))
        angle = rng.uniform(0, np.pi, size=(channels, n))
        self.kx = np.cos(angle) / wavelength
        self.ky = np.sin(angle) / wavelength
        self.phase = rng.uniform(0, 2 * np.pi, size=(channels, n))
        amp = rng.uniform(0.5, 1.0, size=(channels, n))
        self.amp = 0.42 * amp / amp.sum(axis=1, keepdims=True)
        self.base = rng.uniform(0.4, 0.6, size=channels)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        arg = 2 * np.pi * (x[..., None, None] * self.kx + y[..., None, None] * self.ky) + self.phase
        return self.base + (self.amp * np.sin(arg)).sum(axis=-1)


@dataclass
class PairTruth:
    """Ground truth between the target and one source frame."""

    source: int
    pose: RelativePose
    flow: FlowField
    rigid_flow: FlowField
    occlusion: np.ndarray
    boundary: np.ndarray
    consistency: np.ndarray

    @property
    def noc(self) -> np.ndarray:
        return ((1 - self.occlusion) * self.boundary).astype(np.uint8)


@dataclass
class SyntheticScene:
    spec: SceneSpec
    images: list
    depth: DepthMap
    labels: np.ndarray
    motion_mask: np.ndarray
    pairs: dict = field(default_factory=dict)

    @property
    def target(self) -> int:
        return self.spec.target_index

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.spec.intrinsics

    @property
    def target_image(self) -> np.ndarray:
        return self.images[self.target]

    def final_mask(self, source: int) -> np.ndarray:
        """Set-algebra composition of the known dynamic, consistency and boundary masks."""
        pair = self.pairs[source]
        dynamic = self.labels == CAR_ID
        return ((dynamic | (pair.consistency > 0)) & (pair.boundary > 0)).astype(np.uint8)


def _rigid_map(x, y, depth, k, spec: SceneSpec):
    """Where a target pixel at ``depth`` lands in frame ``target + k`` (camera motion only)."""
    tx, ty, tz = (k * c for c in spec.cam_translation)
    z = depth + tz
    return ((x - spec.cx) * depth + spec.fx * tx) / z + spec.cx, ((y - spec.cy) * depth + spec.fy * ty) / z + spec.cy


def _rigid_inverse(x, y, depth, k, spec: SceneSpec):
    tx, ty, tz = (k * c for c in spec.cam_translation)
    z = depth + tz
    return ((x - spec.cx) * z - spec.fx * tx) / depth + spec.cx, ((y - spec.cy) * z - spec.fy * ty) / depth + spec.cy


def _object_map(x, y, k, spec: SceneSpec):
    mx, my = spec.obj_motion
    px, py = _rigid_map(x, y, spec.obj_depth, k, spec)
    return px + k * mx, py + k * my


def _object_inverse(x, y, k, spec: SceneSpec):
    mx, my = spec.obj_motion
    return _rigid_inverse(x - k * mx, y - k * my, spec.obj_depth, k, spec)


def _in_rect(x, y, spec: SceneSpec):
    rx, ry, rw, rh = spec.obj_rect
    return (x >= rx - 0.5) & (x < rx + rw - 0.5) & (y >= ry - 0.5) & (y < ry + rh - 0.5)


def render(spec: SceneSpec) -> SyntheticScene:
    rng = np.random.default_rng(spec.seed)
    tex_bg = Texture(rng, spec.n_sinusoids, spec.min_wavelength, spec.max_wavelength)
    tex_obj = Texture(rng, spec.n_sinusoids, spec.min_wavelength, spec.max_wavelength)
    xs, ys = pixel_grid(spec.height, spec.width)
    t = spec.target_index

    images = []
    for j in range(spec.n_frames):
        k = j - t
        bx, by = _rigid_inverse(xs, ys, spec.bg_depth, k, spec)
        ox, oy = _object_inverse(xs, ys, k, spec)
        covered = _in_rect(ox, oy, spec)
        img = np.where(covered[..., None], tex_obj(ox, oy), tex_bg(bx, by))
        images.append(np.clip(img, 0.0, 1.0))

    obj = _in_rect(xs, ys, spec)
    depth = DepthMap(np.where(obj, spec.obj_depth, spec.bg_depth))
    labels = np.where(obj, CAR_ID, ROAD_ID).astype(np.int64)
    moving = any(v != 0 for v in spec.obj_motion)
    motion_mask = (obj & moving).astype(np.uint8)
    scene = SyntheticScene(spec, images, depth, labels, motion_mask)

    for j in range(spec.n_frames):
        if j == t:
            continue
        k = j - t
        rx_bg, ry_bg = _rigid_map(xs, ys, spec.bg_depth, k, spec)
        rx_obj, ry_obj = _rigid_map(xs, ys, spec.obj_depth, k, spec)
        ox, oy = _object_map(xs, ys, k, spec)
        rigid = FlowField.from_components(np.where(obj, rx_obj, rx_bg) - xs, np.where(obj, ry_obj, ry_bg) - ys)
        flow = FlowField.from_components(np.where(obj, ox, rx_bg) - xs, np.where(obj, oy, ry_bg) - ys)
        # background points hidden behind the object in frame j
        hx, hy = _object_inverse(rx_bg, ry_bg, k, spec)
        occlusion = (~obj & _in_rect(hx, hy, spec)).astype(np.uint8)
        px, py = xs + rigid.u, ys + rigid.v
        tol = BOUNDS_TOL
        boundary = ((px >= -tol) & (px <= spec.width - 1 + tol)
                    & (py >= -tol) & (py <= spec.height - 1 + tol)).astype(np.uint8)
        consistency = (~obj | (not moving)).astype(np.uint8)
        scene.pairs[j] = PairTruth(j, spec.pose(j), flow, rigid, occlusion, boundary, consistency)
    return scene


def random_spec(seed: int, **overrides) -> SceneSpec:
    """A randomized but well-posed scene, for oracle sweeps."""
    rng = np.random.default_rng(seed)
    width = int(rng.integers(24, 72))
    height = int(rng.integers(20, 56))
    w = int(rng.integers(4, width // 2))
    h = int(rng.integers(4, height // 2))
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    bg = float(rng.uniform(10, 40))
    params = dict(
        width=width, height=height,
        fx=float(rng.uniform(30, 80)), fy=float(rng.uniform(30, 80)),
        cx=float(rng.uniform(0.3, 0.7) * (width - 1)), cy=float(rng.uniform(0.3, 0.7) * (height - 1)),
        bg_depth=bg, obj_depth=float(rng.uniform(0.3, 0.8) * bg),
        obj_rect=(x, y, w, h),
        cam_translation=tuple(rng.uniform(-0.6, 0.6, size=3) * np.array([1.0, 0.5, 1.0])),
        obj_motion=tuple(rng.uniform(-5, 5, size=2)),
        seed=seed,
    )
    params.update(overrides)
    return SceneSpec(**params)


def perturb_flow(f: FlowField, sigma: float, seed: int, mask=None) -> FlowField:
    """Add seeded Gaussian noise to each flow component (only where ``mask`` is 1, if given)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return f
    noise = np.random.default_rng(seed).normal(0.0, sigma, size=f.uv.shape)
    if mask is not None:
        noise = noise * (np.asarray(mask) > 0)[..., None]
    return FlowField(f.uv + noise, f.valid)


def write_scene(scene: SyntheticScene, root) -> None:
    """Write a rendered scene in the standard dataset layout plus ``scene.spec``."""
    from . import dataio

    layout = dataio.Layout(root)
    spec = scene.spec
    dataio.atomic_write_text(layout.root / "scene.spec", spec.to_text())
    ids = [dataio.frame_id(j) for j in range(spec.n_frames)]
    for j, img in enumerate(scene.images):
        dataio.write_image(img, layout.image(ids[j]))
    t = ids[scene.target]
    sources = sorted(scene.pairs)
    dataio.write_depth_png(scene.depth, layout.depth(t))
    dataio.write_label_png(scene.labels, layout.semantic(t))
    dataio.write_calib(layout.calib(t), scene.intrinsics,
                       [scene.pairs[j].pose for j in sources], [ids[j] for j in sources])
    dataio.write_mask_png(scene.motion_mask, layout.mask(t, None, "motion"))
    for j in sources:
        pair, s = scene.pairs[j], ids[j]
        dataio.write_flow_png(pair.flow, layout.flow(t, s))
        dataio.write_flow_png(pair.rigid_flow, layout.flow(t, s, "rigid"))
        dataio.write_mask_png(pair.occlusion, layout.mask(t, s, "occlusion"))
        dataio.write_mask_png(pair.noc, layout.mask(t, s, "noc"))
        dataio.write_mask_png(pair.boundary, layout.mask(t, s, "gtboundary"))
        dataio.write_mask_png(pair.consistency, layout.mask(t, s, "gtconsistency"))
        dataio.write_mask_png(scene.final_mask(j), layout.mask(t, s, "gtfinal"))
