"""Self-distillation loss for a student flow, its gradient and a descent loop.

Per pixel, for a student flow ``sf`` warping the source toward the target::

    L = a_r * |sf - rigid|_1 * (1 - M) + a_d * |sf - teacher|_1 * M + psi(I_t, warp(I_s, sf)) * M

and the total is the mean over pixels. The flow distance is the sum of
absolute component differences. Flow terms only count where the reference
flow is valid.

Several source frames may be passed as equal-length sequences. The flow
terms are then averaged over sources, and the photometric term takes the
per-pixel minimum over the sources whose mask is 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FlowField, as_image, as_mask, check_same_shape
from .errors import DimensionMismatch, InvalidBuffer
from .geometry import bilinear_warp, bilinear_warp_jacobian
from .photometric import PhotometricConfig, l1_error, ssim_dissimilarity

SSIM_FD_STEP = 1e-3


@dataclass(frozen=True)
class DistillConfig:
    alpha_r: float = 0.025
    alpha_d: float = 0.2
    smoothness_weight: float = 0.0

    def __post_init__(self):
        if min(self.alpha_r, self.alpha_d, self.smoothness_weight) < 0:
            raise InvalidBuffer("loss weights must be >= 0")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    rigid_term: float
    teacher_term: float
    photo_term: float
    rigid_map: np.ndarray = field(repr=False)
    teacher_map: np.ndarray = field(repr=False)
    photo_map: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {"total": self.total, "rigid_term": self.rigid_term,
                "teacher_term": self.teacher_term, "photo_term": self.photo_term}


def _seq(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


class _Problem:
    """Normalized inputs shared by the loss and its gradient."""

    def __init__(self, sf, f_teacher, f_rigid, m, it, is_, cfg, pcfg):
        self.multi = isinstance(sf, (list, tuple))
        self.sf = _seq(sf)
        self.teacher = _seq(f_teacher)
        self.rigid = _seq(f_rigid)
        self.masks = [as_mask(x).astype(np.float64) for x in _seq(m)]
        self.sources = [as_image(x) for x in _seq(is_)]
        self.target = as_image(it)
        k = len(self.sf)
        if not all(len(x) == k for x in (self.teacher, self.rigid, self.masks, self.sources)):
            raise DimensionMismatch("per-source inputs must have equal lengths")
        check_same_shape(self.target, *[f.uv for f in self.sf + self.teacher + self.rigid],
                         *self.masks, *self.sources)
        for src in self.sources:
            if src.shape != self.target.shape:
                raise DimensionMismatch(f"source shape {src.shape} != target {self.target.shape}")
        self.cfg, self.pcfg = cfg, pcfg
        self.n_pixels = self.target.shape[0] * self.target.shape[1]

    def flow_weights(self, k):
        m = self.masks[k]
        w_r = self.cfg.alpha_r * (1.0 - m) * self.rigid[k].valid
        w_d = self.cfg.alpha_d * m * self.teacher[k].valid
        return w_r, w_d

    def photo_errors(self, flows=None):
        flows = flows or self.sf
        return [_psi(self.target, bilinear_warp(src, f), self.pcfg)
                for src, f in zip(self.sources, flows)]

    def selection(self, psis):
        """One-hot weights picking, per pixel, the best trusted source."""
        stacked = np.stack([np.where(m > 0, p, np.inf) for m, p in zip(self.masks, psis)])
        best = np.argmin(stacked, axis=0)
        any_trusted = np.isfinite(stacked.min(axis=0))
        return [((best == k) & any_trusted).astype(np.float64) for k in range(len(psis))]


def _psi(target, warped, pcfg):
    err = (1.0 - pcfg.alpha_ssim) * l1_error(target, warped)
    if pcfg.alpha_ssim > 0:
        err = err + pcfg.alpha_ssim * ssim_dissimilarity(target, warped, pcfg)
    return err


def _loss(prob: _Problem) -> LossBreakdown:
    k = len(prob.sf)
    rigid_map = np.zeros(prob.target.shape[:2])
    teacher_map = np.zeros_like(rigid_map)
    for i in range(k):
        w_r, w_d = prob.flow_weights(i)
        rigid_map += w_r * np.abs(prob.sf[i].uv - prob.rigid[i].uv).sum(axis=2)
        teacher_map += w_d * np.abs(prob.sf[i].uv - prob.teacher[i].uv).sum(axis=2)
    rigid_map /= k
    teacher_map /= k
    psis = prob.photo_errors()
    sel = prob.selection(psis)
    photo_map = sum(s * p for s, p in zip(sel, psis))
    total_map = rigid_map + teacher_map + photo_map
    return LossBreakdown(
        total=float(total_map.mean()),
        rigid_term=float(rigid_map.mean()),
        teacher_term=float(teacher_map.mean()),
        photo_term=float(photo_map.mean()),
        rigid_map=rigid_map,
        teacher_map=teacher_map,
        photo_map=photo_map,
    )


def self_distillation_loss(sf, f_teacher, f_rigid, m, it, is_,
                           cfg: DistillConfig = DistillConfig(),
                           pcfg: PhotometricConfig = PhotometricConfig()) -> LossBreakdown:
    return _loss(_Problem(sf, f_teacher, f_rigid, m, it, is_, cfg, pcfg))


def _box_sum(x: np.ndarray, r: int) -> np.ndarray:
    """Sum over a (2r+1)^2 neighbourhood with zero padding."""
    if r == 0:
        return x.copy()
    padded = np.pad(x, r)
    c = padded.cumsum(0).cumsum(1)
    c = np.pad(c, ((1, 0), (1, 0)))
    n = 2 * r + 1
    return c[n:, n:] - c[:-n, n:] - c[n:, :-n] + c[:-n, :-n]


def _ssim_gradient(target, source, flow: FlowField, weight, pcfg, h=SSIM_FD_STEP) -> np.ndarray:
    """d/d(u, v) of sum_p weight(p) * ssim_dissimilarity(p), by central differences.

    A flow change at pixel q only moves the warped sample at q, which in
    turn only reaches SSIM windows within ``r`` pixels of q. Pixels spaced
    ``2r + 1`` apart therefore have disjoint footprints and can be
    perturbed together.
    """
    height, width = flow.shape
    r = pcfg.ssim_window // 2
    stride = 2 * r + 1
    grad = np.zeros((height, width, 2))
    for comp in range(2):
        for oy in range(stride):
            for ox in range(stride):
                sel = np.zeros((height, width), dtype=bool)
                sel[oy::stride, ox::stride] = True
                if not sel.any():
                    continue
                vals = []
                for sign in (1.0, -1.0):
                    uv = flow.uv.copy()
                    uv[..., comp] += sign * h * sel
                    warped = bilinear_warp(source, FlowField(uv))
                    vals.append(weight * ssim_dissimilarity(target, warped, pcfg))
                diff = (vals[0] - vals[1]) / (2.0 * h)
                grad[..., comp][sel] = _box_sum(diff, r)[sel]
    return grad


def _gradient(prob: _Problem) -> list[np.ndarray]:
    k = len(prob.sf)
    n = prob.n_pixels
    a = prob.pcfg.alpha_ssim
    psis = prob.photo_errors()
    sel = prob.selection(psis)
    grads = []
    for i in range(k):
        sf = prob.sf[i]
        w_r, w_d = prob.flow_weights(i)
        g = (w_r[..., None] * np.sign(sf.uv - prob.rigid[i].uv)
             + w_d[..., None] * np.sign(sf.uv - prob.teacher[i].uv)) / (k * n)
        weight = sel[i] / n
        if a < 1.0:
            warped = bilinear_warp(prob.sources[i], sf)
            du, dv = bilinear_warp_jacobian(prob.sources[i], sf)
            s = np.sign(warped - prob.target)
            if s.ndim == 2:
                s, du, dv = s[..., None], du[..., None], dv[..., None]
            g[..., 0] += (1.0 - a) * weight * (s * du).mean(axis=2)
            g[..., 1] += (1.0 - a) * weight * (s * dv).mean(axis=2)
        if a > 0.0:
            g += a * _ssim_gradient(prob.target, prob.sources[i], sf, weight, prob.pcfg)
        grads.append(g)
    return grads


def self_distillation_gradient(sf, f_teacher, f_rigid, m, it, is_,
                               cfg: DistillConfig = DistillConfig(),
                               pcfg: PhotometricConfig = PhotometricConfig()):
    """Gradient of the total loss with respect to the student flow.

    L1 terms use the subgradient with sign(0) = 0. Returns a FlowField (or
    a list of them when several sources are given) holding dL/du, dL/dv.
    """
    prob = _Problem(sf, f_teacher, f_rigid, m, it, is_, cfg, pcfg)
    grads = [FlowField(g) for g in _gradient(prob)]
    return grads if prob.multi else grads[0]


def _smoothness(uv: np.ndarray, n: int) -> tuple[float, np.ndarray]:
    """Quadratic first-order smoothness of a flow: value and gradient."""
    dx = np.diff(uv, axis=1)
    dy = np.diff(uv, axis=0)
    value = float(((dx ** 2).sum() + (dy ** 2).sum()) / n)
    grad = np.zeros_like(uv)
    grad[:, 1:] += 2 * dx
    grad[:, :-1] -= 2 * dx
    grad[1:] += 2 * dy
    grad[:-1] -= 2 * dy
    return value, grad / n


@dataclass
class RefineResult:
    flow: object
    history: list
    breakdown: LossBreakdown


def refine_flow(init, f_teacher, f_rigid, m, it, is_, steps: int = 500, lr: float = 0.5,
                cfg: DistillConfig = DistillConfig(),
                pcfg: PhotometricConfig = PhotometricConfig()) -> RefineResult:
    """Plain gradient descent on the self-distillation loss.

    ``lr`` is a per-pixel step: each update is ``lr * H * W * grad`` of the
    mean loss, i.e. the gradient of the summed per-pixel loss. ``history``
    holds the objective before every step and after the last one; it is not
    guaranteed to decrease.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if not lr > 0:
        raise ValueError("lr must be > 0")
    flows = [f for f in _seq(init)]
    multi = isinstance(init, (list, tuple))
    history = []

    def objective(prob):
        loss = _loss(prob)
        value = loss.total
        if cfg.smoothness_weight > 0:
            value += cfg.smoothness_weight * sum(
                _smoothness(f.uv, prob.n_pixels)[0] for f in prob.sf) / len(prob.sf)
        return value, loss

    for _ in range(steps):
        prob = _Problem(flows if multi else flows[0], f_teacher, f_rigid, m, it, is_, cfg, pcfg)
        history.append(objective(prob)[0])
        grads = _gradient(prob)
        updated = []
        for f, g in zip(flows, grads):
            if cfg.smoothness_weight > 0:
                g = g + cfg.smoothness_weight * _smoothness(f.uv, prob.n_pixels)[1] / len(flows)
            updated.append(FlowField(f.uv - lr * prob.n_pixels * g, f.valid))
        flows = updated
    prob = _Problem(flows if multi else flows[0], f_teacher, f_rigid, m, it, is_, cfg, pcfg)
    value, loss = objective(prob)
    history.append(value)
    return RefineResult(flows if multi else flows[0], history, loss)
