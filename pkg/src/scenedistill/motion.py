"""Per-pixel motion probability, supervision masks and motion segmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    IGNORE_LABEL,
    FlowField,
    MotionProbMap,
    as_labels,
    as_mask,
    check_same_shape,
)
from .errors import InvalidBuffer, UnknownClassId

# Cityscapes train ids
CITYSCAPES_CLASSES = (
    "road", "sidewalk", "building", "wall", "fence", "pole", "traffic light",
    "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
    "truck", "bus", "train", "motorcycle", "bicycle",
)
CLASS_IDS = {name: i for i, name in enumerate(CITYSCAPES_CLASSES)}
DYNAMIC_CLASS_IDS = frozenset(range(11, 19))


@dataclass(frozen=True)
class MotionConfig:
    xi: float = 0.5
    tau: float = 0.5
    eps_norm: float = 1e-3
    dynamic_class_ids: frozenset = DYNAMIC_CLASS_IDS
    class_count: int = len(CITYSCAPES_CLASSES)

    def __post_init__(self):
        object.__setattr__(self, "dynamic_class_ids", frozenset(int(c) for c in self.dynamic_class_ids))
        if not (0.0 <= self.xi <= 1.0 and 0.0 <= self.tau <= 1.0):
            raise InvalidBuffer("xi and tau must lie in [0, 1]")
        if not self.eps_norm > 0:
            raise InvalidBuffer("eps_norm must be > 0")
        bad = [c for c in self.dynamic_class_ids if not 0 <= c < self.class_count]
        if bad:
            raise UnknownClassId(f"dynamic class ids outside the class set: {sorted(bad)}")


def motion_probability(f: FlowField, fr: FlowField, cfg: MotionConfig = MotionConfig()) -> MotionProbMap:
    """P = max{(1 - cos theta) / 2, 1 - rho} between an optical and a rigid flow.

    When both vectors are shorter than ``eps_norm`` the pixel is treated as
    static (P = 0). When only one is, the direction term is dropped and the
    norm ratio alone decides, which pushes P toward 1.
    """
    check_same_shape(f.uv, fr.uv, names=("flow", "rigid"))
    n1 = np.hypot(f.u, f.v)
    n2 = np.hypot(fr.u, fr.v)
    small1, small2 = n1 < cfg.eps_norm, n2 < cfg.eps_norm
    both_small = small1 & small2
    one_small = small1 ^ small2

    lo, hi = np.minimum(n1, n2), np.maximum(n1, n2)
    rho = np.divide(lo, hi, out=np.ones_like(lo), where=~both_small)
    # (1 - cos) / 2 == |a/|a| - b/|b||^2 / 4, exact zero for parallel vectors
    unit1 = f.uv / np.where(small1, 1.0, n1)[..., None]
    unit2 = fr.uv / np.where(small2, 1.0, n2)[..., None]
    direction = ((unit1 - unit2) ** 2).sum(axis=2) / 4.0
    direction = np.where(small1 | small2, 0.0, np.clip(direction, 0.0, 1.0))

    p = np.maximum(direction, 1.0 - rho)
    p = np.where(both_small, 0.0, p)
    p = np.where(one_small, 1.0 - rho, p)
    valid = f.valid & fr.valid
    return MotionProbMap(np.clip(p, 0.0, 1.0), valid)


def consistency_mask(p: MotionProbMap, cfg: MotionConfig = MotionConfig()) -> np.ndarray:
    """1 where optical and rigid flow agree (P < xi); invalid pixels are 0."""
    return ((p.values < cfg.xi) & p.valid).astype(np.uint8)


def dynamic_prior_mask(s, cfg: MotionConfig = MotionConfig()) -> np.ndarray:
    """1 for pixels whose semantic class may move; ignore-label pixels are 0."""
    s = as_labels(s)
    known = (s < cfg.class_count) | (s == IGNORE_LABEL)
    if not np.all(known):
        raise UnknownClassId(f"label ids outside the class set: {sorted(np.unique(s[~known]).tolist())}")
    ids = np.array(sorted(cfg.dynamic_class_ids), dtype=np.int64)
    return np.isin(s, ids).astype(np.uint8)


def final_mask(md, mc, mb) -> np.ndarray:
    """min{max{M_d, M_c}, M_b}."""
    md, mc, mb = as_mask(md), as_mask(mc), as_mask(mb)
    check_same_shape(md, mc, mb, names=("dynamic", "consistency", "boundary"))
    return np.minimum(np.maximum(md, mc), mb)


def motion_segmentation(sf: FlowField, fr: FlowField, s=None,
                        cfg: MotionConfig = MotionConfig()) -> np.ndarray:
    """M_mot = M_d * [P > tau], with P between the student flow and rigid flow.

    Passing ``s=None`` disables the semantic veto (M_d = 1 everywhere).
    """
    p = motion_probability(sf, fr, cfg)
    moving = ((p.values > cfg.tau) & p.valid).astype(np.uint8)
    if s is None:
        return moving
    md = dynamic_prior_mask(s, cfg)
    check_same_shape(md, moving, names=("semantics", "flow"))
    return md * moving
