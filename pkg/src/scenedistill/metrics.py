"""Depth, flow, motion-segmentation and semantic-segmentation metrics.

Flow and segmentation statistics are accumulated as sums (error sums,
confusion matrices) so several frames can be pooled in any order. Depth
metrics follow the usual per-frame protocol and are averaged over frames.
"""
from __future__ import annotations

from dataclasses import asdict, astuple, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import IGNORE_LABEL, DepthMap, FlowField, as_labels, as_mask, check_same_shape
from .errors import InvalidBuffer, NoValidPixels, UnknownClassId
from .motion import CITYSCAPES_CLASSES

# Cityscapes categories over the 19 train ids
CITYSCAPES_CATEGORIES = {
    "flat": (0, 1),
    "construction": (2, 3, 4),
    "object": (5, 6, 7),
    "nature": (8, 9),
    "sky": (10,),
    "human": (11, 12),
    "vehicle": (13, 14, 15, 16, 17, 18),
}

KITTI_OUTLIER_PX = 3.0
KITTI_OUTLIER_REL = 0.05


@dataclass(frozen=True)
class DepthEvalConfig:
    min_depth: float = 1e-3
    max_depth: float = 80.0
    median_scaling: bool = True
    range_caps: tuple = ()

    def __post_init__(self):
        if not 0 <= self.min_depth < self.max_depth:
            raise InvalidBuffer("need 0 <= min_depth < max_depth")


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    def as_dict(self) -> dict:
        return asdict(self)


def eval_depth(pred: DepthMap, gt: DepthMap, cfg: DepthEvalConfig = DepthEvalConfig()) -> DepthMetrics:
    check_same_shape(pred.values, gt.values, names=("pred", "gt"))
    mask = gt.valid & pred.valid & (gt.values > cfg.min_depth) & (gt.values <= cfg.max_depth)
    if not mask.any():
        raise NoValidPixels("no ground-truth depth inside the evaluation range")
    g = gt.values[mask]
    p = pred.values[mask]
    if cfg.median_scaling:
        p = p * (np.median(g) / np.median(p))
    p = np.clip(p, cfg.min_depth, cfg.max_depth)

    ratio = np.maximum(p / g, g / p)
    diff = p - g
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
    )


def eval_depth_by_range(pred: DepthMap, gt: DepthMap, cfg: DepthEvalConfig = DepthEvalConfig()) -> dict:
    """Metrics for the full range plus one entry per cap in ``cfg.range_caps``."""
    out = {f"cap_{cfg.max_depth:g}": eval_depth(pred, gt, cfg)}
    for cap in cfg.range_caps:
        sub = DepthEvalConfig(cfg.min_depth, float(cap), cfg.median_scaling)
        out[f"cap_{float(cap):g}"] = eval_depth(pred, gt, sub)
    return out


def mean_depth_metrics(per_frame: Sequence[DepthMetrics]) -> DepthMetrics:
    if not per_frame:
        raise NoValidPixels("no frames to aggregate")
    keys = DepthMetrics.__dataclass_fields__
    return DepthMetrics(**{k: float(np.mean([getattr(m, k) for m in per_frame])) for k in keys})


@dataclass(frozen=True)
class FlowMetrics:
    epe_noc: float
    epe_all: float
    f1: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FlowStats:
    """Summed flow errors, poolable across frames."""

    epe_sum_all: float = 0.0
    count_all: int = 0
    epe_sum_noc: float = 0.0
    count_noc: int = 0
    outliers: int = 0

    def __add__(self, other: "FlowStats") -> "FlowStats":
        return FlowStats(*(a + b for a, b in zip(astuple(self), astuple(other))))

    def metrics(self) -> FlowMetrics:
        if self.count_all == 0:
            raise NoValidPixels("no valid ground-truth flow")
        epe_noc = self.epe_sum_noc / self.count_noc if self.count_noc else 0.0
        return FlowMetrics(epe_noc=float(epe_noc),
                           epe_all=float(self.epe_sum_all / self.count_all),
                           f1=float(self.outliers / self.count_all))


def flow_stats(pred: FlowField, gt: FlowField, noc_mask=None) -> FlowStats:
    check_same_shape(pred.uv, gt.uv, names=("pred", "gt"))
    valid = gt.valid
    noc = valid if noc_mask is None else valid & (as_mask(noc_mask) > 0)
    epe = np.hypot(*(pred.uv - gt.uv).transpose(2, 0, 1))
    mag = np.hypot(gt.u, gt.v)
    outlier = (epe > KITTI_OUTLIER_PX) & (epe > KITTI_OUTLIER_REL * mag)
    return FlowStats(
        epe_sum_all=float(epe[valid].sum()),
        count_all=int(valid.sum()),
        epe_sum_noc=float(epe[noc].sum()),
        count_noc=int(noc.sum()),
        outliers=int((outlier & valid).sum()),
    )


def eval_flow(pred: FlowField, gt: FlowField, noc_mask=None) -> FlowMetrics:
    """KITTI-style endpoint error and F1 outlier fraction.

    A pixel is an outlier when its endpoint error exceeds both 3 px and 5%
    of the ground-truth magnitude.
    """
    return flow_stats(pred, gt, noc_mask).metrics()


def confusion_matrix(pred, gt, n_classes: int) -> np.ndarray:
    """Rows index ground truth, columns prediction. Both inputs are flat ids."""
    idx = np.asarray(gt, dtype=np.int64) * n_classes + np.asarray(pred, dtype=np.int64)
    return np.bincount(idx.ravel(), minlength=n_classes * n_classes).reshape(n_classes, n_classes)


@dataclass(frozen=True)
class SegMetrics:
    pixel_acc: float
    mean_acc: float
    mean_iou: float
    fw_iou: float
    per_class_iou: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def seg_metrics_from_confusion(conf: np.ndarray, names: Sequence[str] | None = None) -> SegMetrics:
    """Pixel accuracy, mean class accuracy, mean IoU and frequency-weighted IoU.

    Classes with no ground-truth pixels are left out of the mean accuracy;
    classes absent from both prediction and ground truth are left out of
    the IoU averages. Extra columns beyond the square part count as misses.
    """
    conf = np.asarray(conf, dtype=np.float64)
    n = conf.shape[0]
    total = conf.sum()
    if total == 0:
        raise NoValidPixels("no evaluated pixels")
    tp = np.diag(conf[:, :n])
    gt_count = conf.sum(axis=1)
    pred_count = conf[:, :n].sum(axis=0)
    union = gt_count + pred_count - tp
    has_gt = gt_count > 0
    has_union = union > 0
    acc = np.divide(tp, gt_count, out=np.zeros(n), where=has_gt)
    iou = np.divide(tp, union, out=np.zeros(n), where=has_union)
    freq = gt_count / total
    names = names or [str(i) for i in range(n)]
    return SegMetrics(
        pixel_acc=float(tp.sum() / total),
        mean_acc=float(acc[has_gt].mean()) if has_gt.any() else 0.0,
        mean_iou=float(iou[has_union].mean()) if has_union.any() else 0.0,
        fw_iou=float((freq * iou)[has_union].sum()),
        per_class_iou={names[i]: float(iou[i]) for i in range(n) if has_union[i]},
    )


def motion_confusion(pred, gt) -> np.ndarray:
    pred, gt = as_mask(pred), as_mask(gt)
    check_same_shape(pred, gt, names=("pred", "gt"))
    return confusion_matrix(pred, gt, 2)


def eval_motion_seg(pred, gt) -> SegMetrics:
    """Two-class (static / moving) segmentation metrics."""
    return seg_metrics_from_confusion(motion_confusion(pred, gt), ("static", "moving"))


@dataclass(frozen=True)
class SemanticMetrics:
    miou_class: float
    miou_category: float
    pixel_acc: float
    per_class_iou: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def semantic_confusion(pred, gt, class_count: int = 19) -> np.ndarray:
    """``class_count x (class_count + 1)`` confusion; the extra column collects
    ignore-labelled predictions on evaluated pixels."""
    pred, gt = as_labels(pred), as_labels(gt)
    check_same_shape(pred, gt, names=("pred", "gt"))
    for name, arr in (("pred", pred), ("gt", gt)):
        bad = (arr >= class_count) & (arr != IGNORE_LABEL)
        if bad.any():
            raise UnknownClassId(f"{name} has ids outside [0, {class_count}): "
                                 f"{sorted(np.unique(arr[bad]).tolist())}")
    keep = gt != IGNORE_LABEL
    p = np.where(pred[keep] == IGNORE_LABEL, class_count, pred[keep])
    g = gt[keep]
    width = class_count + 1
    conf = np.bincount(g * width + p, minlength=class_count * width)
    return conf.reshape(class_count, width)


def _category_confusion(conf: np.ndarray, category_map: Mapping[str, Iterable[int]]) -> np.ndarray:
    n = conf.shape[0]
    lookup = np.full(n, -1)
    for ci, ids in enumerate(category_map.values()):
        lookup[list(ids)] = ci
    if (lookup < 0).any():
        raise UnknownClassId(f"classes without a category: {np.flatnonzero(lookup < 0).tolist()}")
    k = len(category_map)
    out = np.zeros((k, k + 1))
    for g in range(n):
        for p in range(conf.shape[1]):
            col = lookup[p] if p < n else k
            out[lookup[g], col] += conf[g, p]
    return out


def semantic_metrics_from_confusion(conf: np.ndarray, category_map=None, names=None) -> SemanticMetrics:
    n = conf.shape[0]
    cityscapes = n == len(CITYSCAPES_CLASSES)
    if category_map is None:
        category_map = CITYSCAPES_CATEGORIES if cityscapes else {str(i): (i,) for i in range(n)}
    if names is None and cityscapes:
        names = CITYSCAPES_CLASSES
    cls = seg_metrics_from_confusion(conf, names)
    cat = seg_metrics_from_confusion(_category_confusion(conf, category_map), list(category_map))
    return SemanticMetrics(miou_class=cls.mean_iou, miou_category=cat.mean_iou,
                           pixel_acc=cls.pixel_acc, per_class_iou=cls.per_class_iou)


def eval_semantic(pred, gt, class_count: int = 19, category_map=None) -> SemanticMetrics:
    """Class mIoU, category mIoU and pixel accuracy; ignore-label gt pixels are skipped."""
    return semantic_metrics_from_confusion(semantic_confusion(pred, gt, class_count), category_map)
