"""Photometric error and the depth-stage loss components."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import cv2
import numpy as np

from .core import DepthMap, ScalarMap, as_image, check_same_shape, image_gradients
from .errors import DimensionMismatch, InvalidBuffer, NoValidPixels


@dataclass(frozen=True)
class PhotometricConfig:
    alpha_ssim: float = 0.85
    ssim_window: int = 3
    c1: float = 0.01 ** 2
    c2: float = 0.03 ** 2

    def __post_init__(self):
        if not 0.0 <= self.alpha_ssim <= 1.0:
            raise InvalidBuffer("alpha_ssim must lie in [0, 1]")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise InvalidBuffer("ssim_window must be odd and >= 1")


def _channels(img: np.ndarray) -> np.ndarray:
    return img if img.ndim == 3 else img[..., None]


def box_mean(x: np.ndarray, window: int) -> np.ndarray:
    """Mean over a ``window x window`` neighbourhood, reflection padded, per channel."""
    # BORDER_REFLECT_101 is numpy's "reflect" padding
    out = cv2.blur(np.ascontiguousarray(x, dtype=np.float64), (window, window),
                   borderType=cv2.BORDER_REFLECT_101)
    return out.reshape(x.shape)


def ssim(a, b, cfg: PhotometricConfig = PhotometricConfig()) -> np.ndarray:
    """Per-channel SSIM map, shape ``(H, W, C)``."""
    a, b = _channels(as_image(a)), _channels(as_image(b))
    w = cfg.ssim_window
    mu_a, mu_b = box_mean(a, w), box_mean(b, w)
    var_a = box_mean(a * a, w) - mu_a ** 2
    var_b = box_mean(b * b, w) - mu_b ** 2
    cov = box_mean(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + cfg.c1) * (2 * cov + cfg.c2)
    den = (mu_a ** 2 + mu_b ** 2 + cfg.c1) * (var_a + var_b + cfg.c2)
    return num / den


def ssim_dissimilarity(a, b, cfg: PhotometricConfig = PhotometricConfig()) -> np.ndarray:
    """Channel mean of ``(1 - SSIM) / 2``."""
    return np.clip((1.0 - ssim(a, b, cfg)) / 2.0, 0.0, 1.0).mean(axis=2)


def l1_error(a, b) -> np.ndarray:
    a, b = _channels(as_image(a)), _channels(as_image(b))
    return np.abs(a - b).mean(axis=2)


def photometric_error(a, b, cfg: PhotometricConfig = PhotometricConfig()) -> np.ndarray:
    """Weighted SSIM + L1 appearance error, one value per pixel."""
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    err = (1.0 - cfg.alpha_ssim) * l1_error(a, b)
    if cfg.alpha_ssim > 0:
        err = err + cfg.alpha_ssim * ssim_dissimilarity(a, b, cfg)
    return err


def _as_scalar_map(m) -> ScalarMap:
    return m if isinstance(m, ScalarMap) else ScalarMap(m)


def min_reprojection(err_maps: Sequence) -> ScalarMap:
    """Per-pixel minimum over source views, ignoring invalid entries."""
    if len(err_maps) == 0:
        raise ValueError("min_reprojection needs at least one error map")
    maps = [_as_scalar_map(m) for m in err_maps]
    check_same_shape(*[m.values for m in maps])
    vals = np.stack([np.where(m.valid, m.values, np.inf) for m in maps])
    best = vals.min(axis=0)
    valid = np.isfinite(best)
    return ScalarMap(np.where(valid, best, 0.0), valid)


def automask(warped_err, identity_err) -> np.ndarray:
    """1 where warping explains the target better than the unwarped source."""
    w, i = _as_scalar_map(warped_err), _as_scalar_map(identity_err)
    check_same_shape(w.values, i.values, names=("warped", "identity"))
    return ((w.values < i.values) & w.valid & i.valid).astype(np.uint8)


def depth_normalize(d: DepthMap) -> DepthMap:
    """Divide valid depths by their mean."""
    if not d.valid.any():
        raise NoValidPixels("depth map has no valid pixels")
    mean = d.values[d.valid].mean()
    return DepthMap(d.values / mean, d.valid)


def smoothness_loss(d: DepthMap, img) -> float:
    """Edge-aware first-order smoothness of the mean-normalized depth.

    Each direction is averaged over the neighbour pairs where both depths
    are valid; the two directional means are summed.
    """
    img = as_image(img)
    check_same_shape(d.values, img, names=("depth", "image"))
    dn = depth_normalize(d)
    gx_img, gy_img = image_gradients(img)
    total = 0.0
    for axis, g_img in ((1, gx_img), (0, gy_img)):
        grad = np.abs(np.diff(dn.values, axis=axis))
        pair_valid = dn.valid[:, 1:] & dn.valid[:, :-1] if axis == 1 else dn.valid[1:] & dn.valid[:-1]
        weight = np.exp(-np.abs(g_img[:, :-1] if axis == 1 else g_img[:-1]))
        if pair_valid.any():
            total += float((grad * weight)[pair_valid].mean())
    return total
