"""Command-line entry point.

Every command reads and writes the dataset layout described in
:mod:`scenedistill.dataio`. Evaluation and loss commands write a JSON report
(``<out>/report_<command>.json``) that echoes the resolved configuration and
holds per-frame and aggregate numbers, plus figures under ``<out>/figures``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import dataio, plotting
from .core import FlowField
from .distill import DistillConfig, refine_flow, self_distillation_loss
from .errors import (
    DecodeError,
    DimensionMismatch,
    InvalidBuffer,
    NonOrthonormalRotation,
    NonPositiveDepth,
    NoValidPixels,
    ParseError,
    SpecError,
    UnknownClassId,
)
from .geometry import boundary_mask, rigid_flow
from .metrics import (
    DepthEvalConfig,
    FlowStats,
    eval_depth_by_range,
    flow_stats,
    mean_depth_metrics,
    motion_confusion,
    seg_metrics_from_confusion,
    semantic_confusion,
    semantic_metrics_from_confusion,
)
from .motion import (
    CITYSCAPES_CLASSES,
    DYNAMIC_CLASS_IDS,
    MotionConfig,
    consistency_mask,
    dynamic_prior_mask,
    final_mask,
    motion_probability,
    motion_segmentation,
)
from .photometric import PhotometricConfig
from .synth import SceneSpec, perturb_flow, render, write_scene

JOBS_ENV = "SCENEDISTILL_JOBS"
REPORT_DIGITS = 10

DATA_ERRORS = (DecodeError, DimensionMismatch, ParseError, NonOrthonormalRotation,
               UnknownClassId, SpecError, InvalidBuffer, FileNotFoundError)
NUMERIC_ERRORS = (NoValidPixels, NonPositiveDepth, FloatingPointError, ZeroDivisionError)


class UsageError(Exception):
    pass


def _clean(obj):
    """JSON-ready copy with floats rounded to a fixed number of significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (frozenset, set)):
        return sorted(_clean(v) for v in obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if not math.isfinite(x) else float(f"{x:.{REPORT_DIGITS}g}")
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_report(out_dir, command: str, config: dict, frames: dict, aggregate: dict) -> Path:
    payload = {"command": command, "config": config, "frames": frames, "aggregate": aggregate}
    path = Path(out_dir) / f"report_{command}.json"
    dataio.atomic_write_text(path, json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
    return path


def _summary(title: str, values: dict) -> None:
    body = "  ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in values.items())
    print(f"{title}: {body}")


def _jobs(args) -> int:
    if args.jobs is not None:
        return args.jobs
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        raise UsageError(f"{JOBS_ENV} must be an integer")


def _map(args, fn, items):
    items = list(items)
    jobs = _jobs(args)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- configs

def _motion_cfg(args) -> MotionConfig:
    ids = DYNAMIC_CLASS_IDS if getattr(args, "dynamic_ids", None) is None else args.dynamic_ids
    try:
        return MotionConfig(xi=getattr(args, "xi", 0.5), tau=getattr(args, "tau", 0.5),
                            eps_norm=getattr(args, "eps_norm", 1e-3), dynamic_class_ids=ids)
    except (InvalidBuffer, UnknownClassId) as exc:
        raise UsageError(str(exc))


def _photo_cfg(args) -> PhotometricConfig:
    try:
        return PhotometricConfig(alpha_ssim=args.alpha_ssim, ssim_window=args.ssim_window)
    except InvalidBuffer as exc:
        raise UsageError(str(exc))


def _distill_cfg(args) -> DistillConfig:
    try:
        return DistillConfig(alpha_r=args.alpha_r, alpha_d=args.alpha_d,
                             smoothness_weight=getattr(args, "smoothness_weight", 0.0))
    except InvalidBuffer as exc:
        raise UsageError(str(exc))


def _depth_cfg(args) -> DepthEvalConfig:
    try:
        return DepthEvalConfig(args.min_depth, args.max_depth, not args.no_median_scaling,
                               tuple(args.range_caps or ()))
    except InvalidBuffer as exc:
        raise UsageError(str(exc))


def _motion_cfg_dict(cfg: MotionConfig) -> dict:
    d = asdict(cfg)
    d["dynamic_class_ids"] = sorted(cfg.dynamic_class_ids)
    return d


# ---------------------------------------------------------------- helpers

def _targets(root) -> list:
    targets = dataio.Layout(root).targets()
    if not targets:
        raise DecodeError(f"no calibration files under {Path(root) / 'calib'}")
    return targets


def _bundles(args, root):
    return _map(args, lambda t: dataio.load_bundle(root, t, with_flow=False), _targets(root))


def _need_depth(bundle):
    if bundle.depth is None:
        raise DecodeError(f"frame {bundle.target} has no depth map")
    return bundle.depth


def _rigid(bundle, source):
    return rigid_flow(_need_depth(bundle), bundle.intrinsics, bundle.poses[source])


def _read_flow(root, target, source, kind=None) -> FlowField:
    flow = dataio.read_flow_png(dataio.Layout(root).flow(target, source, kind))
    return flow


def _check_shape(name, arr, shape):
    if arr.shape[:2] != tuple(shape):
        raise DimensionMismatch(f"{name} has shape {arr.shape[:2]}, expected {tuple(shape)}")


def _pairs(bundles):
    return [(b, s) for b in bundles for s in b.sources]


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    try:
        spec = SceneSpec(width=args.width, height=args.height, fx=args.fx, fy=args.fy,
                         bg_depth=args.bg_depth, obj_depth=args.obj_depth, obj_rect=tuple(args.obj_rect),
                         cam_translation=tuple(args.cam_translation), obj_motion=tuple(args.obj_motion),
                         seed=args.seed, n_frames=args.frames)
    except SpecError as exc:
        raise UsageError(str(exc))
    scene = render(spec)
    write_scene(scene, args.out)
    print(f"synth: wrote {spec.n_frames} frames ({spec.width}x{spec.height}) to {args.out}")
    return 0


def cmd_rigid_flow(args) -> int:
    out = dataio.Layout(args.out)

    def run(pair):
        b, s = pair
        dataio.write_flow_png(_rigid(b, s), out.flow(b.target, s, "rigid"))
        return f"{b.target}_{s}"

    done = _map(args, run, _pairs(_bundles(args, args.data)))
    print(f"rigid-flow: wrote {len(done)} rigid flow fields to {args.out}")
    return 0


def cmd_boundary_mask(args) -> int:
    out = dataio.Layout(args.out)

    def run(pair):
        b, s = pair
        m = boundary_mask(_need_depth(b), b.intrinsics, b.poses[s])
        dataio.write_mask_png(m, out.mask(b.target, s, "boundary"))
        return float(m.mean())

    fracs = _map(args, run, _pairs(_bundles(args, args.data)))
    print(f"boundary-mask: wrote {len(fracs)} masks to {args.out}")
    return 0


def _probability(args, b, s, cfg, flow_root):
    flow = _read_flow(flow_root, b.target, s)
    _check_shape(f"flow {b.target}_{s}", flow.uv, b.shape)
    return flow, motion_probability(flow, _rigid(b, s), cfg)


def cmd_motion_prob(args) -> int:
    cfg = _motion_cfg(args)
    out = dataio.Layout(args.out)
    flow_root = args.flow or args.data

    def run(pair):
        b, s = pair
        _, p = _probability(args, b, s, cfg, flow_root)
        dataio.write_prob_png(p, out.prob(b.target, s))
        vals = p.values[p.valid]
        return f"{b.target}_{s}", {"mean": float(vals.mean()) if vals.size else 0.0,
                                   "above_half": float((vals > 0.5).mean()) if vals.size else 0.0}

    frames = dict(_map(args, run, _pairs(_bundles(args, args.data))))
    aggregate = {"mean": float(np.mean([f["mean"] for f in frames.values()]))}
    write_report(args.out, "motion-prob", {"motion": _motion_cfg_dict(cfg), "data": args.data,
                                           "flow": flow_root}, frames, aggregate)
    _summary("motion-prob", aggregate)
    return 0


def compute_masks(b, s, flow: FlowField, cfg: MotionConfig) -> dict:
    """Dynamic prior, boundary, consistency and final masks for one pair."""
    depth = _need_depth(b)
    if b.semantic is None:
        raise DecodeError(f"frame {b.target} has no semantic map")
    rigid = rigid_flow(depth, b.intrinsics, b.poses[s])
    md = dynamic_prior_mask(b.semantic, cfg)
    mb = boundary_mask(depth, b.intrinsics, b.poses[s])
    mc = consistency_mask(motion_probability(flow, rigid, cfg), cfg)
    return {"dynamic": md, "boundary": mb, "consistency": mc, "final": final_mask(md, mc, mb)}


def cmd_masks(args) -> int:
    cfg = _motion_cfg(args)
    out = dataio.Layout(args.out)
    flow_root = args.flow or args.data

    def run(pair):
        b, s = pair
        flow = _read_flow(flow_root, b.target, s)
        _check_shape(f"flow {b.target}_{s}", flow.uv, b.shape)
        masks = compute_masks(b, s, flow, cfg)
        dataio.write_mask_png(masks["dynamic"], out.mask(b.target, None, "dynamic"))
        for kind in ("boundary", "consistency", "final"):
            dataio.write_mask_png(masks[kind], out.mask(b.target, s, kind))
        return f"{b.target}_{s}", {k: float(v.mean()) for k, v in masks.items()}

    frames = dict(_map(args, run, _pairs(_bundles(args, args.data))))
    aggregate = {k: float(np.mean([f[k] for f in frames.values()])) for k in ("dynamic", "boundary", "consistency", "final")}
    write_report(args.out, "masks", {"motion": _motion_cfg_dict(cfg), "data": args.data, "flow": flow_root},
                 frames, aggregate)
    _summary("masks (fraction of ones)", aggregate)
    return 0


def cmd_segment_motion(args) -> int:
    cfg = _motion_cfg(args)
    out = dataio.Layout(args.out)
    flow_root = args.flow or args.data

    def run(pair):
        b, s = pair
        sf = _read_flow(flow_root, b.target, s)
        _check_shape(f"flow {b.target}_{s}", sf.uv, b.shape)
        sem = None if args.no_semantics else b.semantic
        if sem is None and not args.no_semantics:
            raise DecodeError(f"frame {b.target} has no semantic map")
        m = motion_segmentation(sf, _rigid(b, s), sem, cfg)
        dataio.write_mask_png(m, out.mask(b.target, s, "segmentation"))
        return f"{b.target}_{s}", {"moving_fraction": float(m.mean())}

    frames = dict(_map(args, run, _pairs(_bundles(args, args.data))))
    aggregate = {"moving_fraction": float(np.mean([f["moving_fraction"] for f in frames.values()]))}
    write_report(args.out, "segment-motion", {"motion": _motion_cfg_dict(cfg), "semantic_veto": not args.no_semantics,
                                              "data": args.data, "flow": flow_root}, frames, aggregate)
    _summary("segment-motion", aggregate)
    return 0


def _distill_inputs(b, s, teacher_root, cfg_m, mask_root=None):
    teacher = _read_flow(teacher_root, b.target, s)
    _check_shape(f"teacher {b.target}_{s}", teacher.uv, b.shape)
    rigid = _rigid(b, s)
    if mask_root:
        m = dataio.read_mask_png(dataio.Layout(mask_root).mask(b.target, s, "final"))
        _check_shape(f"mask {b.target}_{s}", m, b.shape)
    else:
        m = compute_masks(b, s, teacher, cfg_m)["final"]
    return teacher, rigid, m


def cmd_distill_loss(args) -> int:
    cfg_m, cfg_d, cfg_p = _motion_cfg(args), _distill_cfg(args), _photo_cfg(args)
    teacher_root = args.teacher or args.data

    def run(pair):
        b, s = pair
        teacher, rigid, m = _distill_inputs(b, s, teacher_root, cfg_m, args.mask)
        student = _read_flow(args.student, b.target, s)
        _check_shape(f"student {b.target}_{s}", student.uv, b.shape)
        loss = self_distillation_loss(student, teacher, rigid, m, b.target_image, b.source_images[s], cfg_d, cfg_p)
        return f"{b.target}_{s}", loss.as_dict()

    frames = dict(_map(args, run, _pairs(_bundles(args, args.data))))
    keys = ("total", "rigid_term", "teacher_term", "photo_term")
    aggregate = {k: float(np.mean([f[k] for f in frames.values()])) for k in keys}
    config = {"distill": asdict(cfg_d), "photometric": asdict(cfg_p), "motion": _motion_cfg_dict(cfg_m),
              "data": args.data, "student": args.student, "teacher": teacher_root, "mask": args.mask}
    write_report(args.out, "distill-loss", config, frames, aggregate)
    _summary("distill-loss", aggregate)
    return 0


def cmd_refine_flow(args) -> int:
    cfg_m, cfg_d, cfg_p = _motion_cfg(args), _distill_cfg(args), _photo_cfg(args)
    if args.steps < 0 or not args.lr > 0 or args.noise_sigma < 0:
        raise UsageError("need steps >= 0, lr > 0 and noise-sigma >= 0")
    teacher_root = args.teacher or args.data
    out = dataio.Layout(args.out)

    def run(item):
        idx, (b, s) = item
        teacher, rigid, m = _distill_inputs(b, s, teacher_root, cfg_m, args.mask)
        if args.init:
            init = _read_flow(args.init, b.target, s)
            _check_shape(f"init {b.target}_{s}", init.uv, b.shape)
        else:
            init = perturb_flow(teacher, args.noise_sigma, args.seed + idx)
        res = refine_flow(init, teacher, rigid, m, b.target_image, b.source_images[s],
                          steps=args.steps, lr=args.lr, cfg=cfg_d, pcfg=cfg_p)
        dataio.write_flow_png(res.flow, out.flow(b.target, s))
        name = f"{b.target}_{s}"
        plotting.loss_history_figure(res.history, out.root / "figures" / f"{name}_loss.png", title=name)
        entry = {"initial_loss": res.history[0], "final_loss": res.history[-1],
                 "history": res.history[:: max(1, len(res.history) // 50)], "final": res.breakdown.as_dict()}
        if args.gt:
            gt = _read_flow(args.gt, b.target, s)
            region = (m > 0) & gt.valid
            if region.any():
                entry["epe_masked_initial"] = float(np.hypot(*(init.uv - gt.uv)[region].T).mean())
                entry["epe_masked_final"] = float(np.hypot(*(res.flow.uv - gt.uv)[region].T).mean())
        return name, entry

    frames = dict(_map(args, run, enumerate(_pairs(_bundles(args, args.data)))))
    aggregate = {k: float(np.mean([f[k] for f in frames.values()]))
                 for k in ("initial_loss", "final_loss", "epe_masked_initial", "epe_masked_final")
                 if all(k in f for f in frames.values())}
    config = {"distill": asdict(cfg_d), "photometric": asdict(cfg_p), "motion": _motion_cfg_dict(cfg_m),
              "steps": args.steps, "lr": args.lr, "noise_sigma": args.noise_sigma, "seed": args.seed,
              "data": args.data, "teacher": teacher_root, "init": args.init, "gt": args.gt, "mask": args.mask}
    write_report(args.out, "refine-flow", config, frames, aggregate)
    _summary("refine-flow", aggregate)
    return 0


def cmd_eval_depth(args) -> int:
    cfg = _depth_cfg(args)
    gt_layout, pred_layout = dataio.Layout(args.gt), dataio.Layout(args.pred)
    ids = sorted(p.stem for p in (gt_layout.root / "depth").glob("*.png"))
    if not ids:
        raise DecodeError(f"no ground-truth depth under {gt_layout.root / 'depth'}")

    def run(fid):
        gt = dataio.read_depth_png(gt_layout.depth(fid))
        pred = dataio.read_depth_png(pred_layout.depth(fid))
        return fid, eval_depth_by_range(pred, gt, cfg)

    results = dict(_map(args, run, ids))
    frames = {fid: {cap: m.as_dict() for cap, m in r.items()} for fid, r in results.items()}
    caps = list(next(iter(results.values())))
    aggregate = {cap: mean_depth_metrics([r[cap] for r in results.values()]).as_dict() for cap in caps}
    write_report(args.out, "eval-depth", {"depth": asdict(cfg), "pred": args.pred, "gt": args.gt}, frames, aggregate)
    main = aggregate[caps[0]]
    plotting.bar_figure(main, Path(args.out) / "figures" / "eval_depth.png", title=f"depth ({caps[0]})")
    _summary("eval-depth", main)
    return 0


def cmd_eval_flow(args) -> int:
    gt_layout, pred_layout = dataio.Layout(args.gt), dataio.Layout(args.pred)
    pairs = gt_layout.pairs("flow")
    if not pairs:
        raise DecodeError(f"no ground-truth flow under {gt_layout.root / 'flow'}")

    def run(pair):
        t, s = pair
        gt = dataio.read_flow_png(gt_layout.flow(t, s))
        pred = dataio.read_flow_png(pred_layout.flow(t, s, args.pred_kind))
        _check_shape(f"pred {t}_{s}", pred.uv, gt.shape)
        noc_path = gt_layout.mask(t, s, "noc")
        noc = dataio.read_mask_png(noc_path) if noc_path.exists() else None
        epe = np.hypot(*(pred.uv - gt.uv)[gt.valid].T)
        return f"{t}_{s}", flow_stats(pred, gt, noc), epe

    results = _map(args, run, pairs)
    frames = {name: st.metrics().as_dict() for name, st, _ in results}
    pooled = sum((st for _, st, _ in results), FlowStats())
    aggregate = pooled.metrics().as_dict()
    write_report(args.out, "eval-flow", {"pred": args.pred, "gt": args.gt, "pred_kind": args.pred_kind,
                                         "outlier_px": 3.0, "outlier_rel": 0.05}, frames, aggregate)
    plotting.error_histogram_figure(np.concatenate([e for _, _, e in results]),
                                    Path(args.out) / "figures" / "eval_flow_epe.png")
    _summary("eval-flow", aggregate)
    return 0


def cmd_eval_motion(args) -> int:
    gt_layout, pred_layout = dataio.Layout(args.gt), dataio.Layout(args.pred)
    pairs = pred_layout.pairs("mask", args.pred_kind)
    if not pairs:
        raise DecodeError(f"no '{args.pred_kind}' masks under {pred_layout.root / 'mask'}")

    def run(pair):
        t, s = pair
        pred = dataio.read_mask_png(pred_layout.mask(t, s, args.pred_kind))
        gt_path = gt_layout.mask(t, s, args.gt_kind)
        if not gt_path.exists():
            gt_path = gt_layout.mask(t, None, args.gt_kind)
        gt = dataio.read_mask_png(gt_path)
        return f"{t}_{s}", motion_confusion(pred, gt)

    results = _map(args, run, pairs)
    frames = {name: seg_metrics_from_confusion(c, ("static", "moving")).as_dict() for name, c in results}
    conf = sum(c for _, c in results)
    aggregate = seg_metrics_from_confusion(conf, ("static", "moving")).as_dict()
    aggregate["confusion"] = conf.tolist()
    write_report(args.out, "eval-motion", {"pred": args.pred, "gt": args.gt, "pred_kind": args.pred_kind,
                                           "gt_kind": args.gt_kind}, frames, aggregate)
    plotting.confusion_figure(conf, ["static", "moving"], Path(args.out) / "figures" / "eval_motion_confusion.png")
    _summary("eval-motion", {k: aggregate[k] for k in ("pixel_acc", "mean_acc", "mean_iou", "fw_iou")})
    return 0


def cmd_eval_sem(args) -> int:
    if args.classes < 1:
        raise UsageError("--classes must be >= 1")
    gt_layout, pred_layout = dataio.Layout(args.gt), dataio.Layout(args.pred)
    ids = sorted(p.stem for p in (gt_layout.root / "semantic").glob("*.png"))
    if not ids:
        raise DecodeError(f"no ground-truth labels under {gt_layout.root / 'semantic'}")

    def run(fid):
        gt = dataio.read_label_png(gt_layout.semantic(fid))
        pred = dataio.read_label_png(pred_layout.semantic(fid))
        return fid, semantic_confusion(pred, gt, args.classes)

    names = list(CITYSCAPES_CLASSES) if args.classes == 19 else [str(i) for i in range(args.classes)]
    results = _map(args, run, ids)
    frames = {fid: semantic_metrics_from_confusion(c, names=names).as_dict() for fid, c in results}
    conf = sum(c for _, c in results)
    aggregate = semantic_metrics_from_confusion(conf, names=names).as_dict()
    write_report(args.out, "eval-sem", {"pred": args.pred, "gt": args.gt, "classes": args.classes}, frames, aggregate)
    plotting.confusion_figure(conf[:, : args.classes], names, Path(args.out) / "figures" / "eval_sem_confusion.png")
    _summary("eval-sem", {k: aggregate[k] for k in ("miou_class", "miou_category", "pixel_acc")})
    return 0


def cmd_viz(args) -> int:
    cfg = _motion_cfg(args)
    out = Path(args.out) / "viz"
    flow_root = args.flow or args.data

    def run(pair):
        b, s = pair
        name = f"{b.target}_{s}"
        flow = _read_flow(flow_root, b.target, s)
        rigid = _rigid(b, s)
        p = motion_probability(flow, rigid, cfg)
        panels = [("image", b.target_image), ("depth", plotting.colorize(b.depth)),
                  ("optical flow", plotting.colorize(flow)), ("rigid flow", plotting.colorize(rigid)),
                  ("motion probability", plotting.colorize(p))]
        if b.semantic is not None:
            masks = compute_masks(b, s, flow, cfg)
            seg = motion_segmentation(flow, rigid, b.semantic, cfg)
            panels += [("dynamic prior", plotting.colorize(masks["dynamic"])),
                       ("boundary", plotting.colorize(masks["boundary"])),
                       ("consistency", plotting.colorize(masks["consistency"])),
                       ("final mask", plotting.colorize(masks["final"])),
                       ("motion segmentation", plotting.colorize(seg))]
        for title, rgb in panels[1:]:
            dataio.write_image(rgb, out / f"{name}_{title.replace(' ', '_')}.png", bit_depth=8)
        plotting.panel_figure(panels, out / f"{name}_panel.png")
        return name

    done = _map(args, run, _pairs(_bundles(args, args.data)))
    print(f"viz: wrote {len(done)} panels to {out}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenedistill",
        description="Rigid flow, motion masks, flow self-distillation and evaluation on KITTI-style data.",
        epilog="Exit codes: 0 ok, 2 usage error, 3 data error, 4 numeric error.")
    parser.add_argument("--jobs", type=int, default=None,
                        help=f"frames processed concurrently (default: ${JOBS_ENV} or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    def motion_flags(p, xi=False, tau=False):
        if xi:
            p.add_argument("--xi", type=float, default=0.5, help="consistency threshold")
        if tau:
            p.add_argument("--tau", type=float, default=0.5, help="motion threshold")
        p.add_argument("--eps-norm", type=float, default=1e-3, help="zero-vector guard in pixels")
        p.add_argument("--dynamic-ids", type=int, nargs="+", default=None,
                       help="semantic ids treated as potentially dynamic (default: Cityscapes 11..18)")

    def loss_flags(p):
        p.add_argument("--alpha-r", type=float, default=0.025)
        p.add_argument("--alpha-d", type=float, default=0.2)
        p.add_argument("--alpha-ssim", type=float, default=0.85)
        p.add_argument("--ssim-window", type=int, default=3)
        p.add_argument("--mask", default=None, help="root holding precomputed final masks (default: recompute)")

    p = sub.add_parser("synth", help="render a synthetic scene with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--fx", type=float, default=50.0)
    p.add_argument("--fy", type=float, default=50.0)
    p.add_argument("--bg-depth", type=float, default=20.0)
    p.add_argument("--obj-depth", type=float, default=10.0)
    p.add_argument("--obj-rect", type=int, nargs=4, default=[24, 16, 16, 12], metavar=("X", "Y", "W", "H"))
    p.add_argument("--cam-translation", type=float, nargs=3, default=[0.8, 0.0, 0.0], metavar=("TX", "TY", "TZ"))
    p.add_argument("--obj-motion", type=float, nargs=2, default=[-4.0, 1.0], metavar=("MX", "MY"))
    p.add_argument("--frames", type=int, default=3)
    p.set_defaults(func=cmd_synth)

    for name, func, helptext in (("rigid-flow", cmd_rigid_flow, "rigid flow from depth, intrinsics and pose"),
                                 ("boundary-mask", cmd_boundary_mask, "camera-motion boundary masks")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("motion-prob", help="per-pixel motion probability between optical and rigid flow")
    p.add_argument("--data", required=True)
    p.add_argument("--flow", default=None, help="root holding optical flow (default: --data)")
    p.add_argument("--out", required=True)
    motion_flags(p)
    p.set_defaults(func=cmd_motion_prob)

    p = sub.add_parser("masks", help="dynamic prior, boundary, consistency and final masks")
    p.add_argument("--data", required=True)
    p.add_argument("--flow", default=None, help="root holding teacher flow (default: --data)")
    p.add_argument("--out", required=True)
    motion_flags(p, xi=True)
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("segment-motion", help="motion segmentation masks")
    p.add_argument("--data", required=True)
    p.add_argument("--flow", default=None, help="root holding the student flow (default: --data)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-semantics", action="store_true", help="disable the semantic veto")
    motion_flags(p, tau=True)
    p.set_defaults(func=cmd_segment_motion)

    p = sub.add_parser("distill-loss", help="self-distillation loss breakdown of a student flow")
    p.add_argument("--data", required=True)
    p.add_argument("--student", required=True)
    p.add_argument("--teacher", default=None, help="root holding teacher flow (default: --data)")
    p.add_argument("--out", required=True)
    loss_flags(p)
    motion_flags(p, xi=True)
    p.set_defaults(func=cmd_distill_loss)

    p = sub.add_parser("refine-flow", help="gradient-descent refinement of a flow under the distillation loss")
    p.add_argument("--data", required=True)
    p.add_argument("--teacher", default=None, help="root holding teacher flow (default: --data)")
    p.add_argument("--init", default=None, help="root holding the initial flow (default: teacher + noise)")
    p.add_argument("--gt", default=None, help="root holding ground-truth flow for EPE reporting")
    p.add_argument("--noise-sigma", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--smoothness-weight", type=float, default=0.0)
    p.add_argument("--out", required=True)
    loss_flags(p)
    motion_flags(p, xi=True)
    p.set_defaults(func=cmd_refine_flow)

    p = sub.add_parser("eval-depth", help="depth metrics with median scaling")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-depth", type=float, default=1e-3)
    p.add_argument("--max-depth", type=float, default=80.0)
    p.add_argument("--no-median-scaling", action="store_true")
    p.add_argument("--range-caps", type=float, nargs="*", default=None)
    p.set_defaults(func=cmd_eval_depth)

    p = sub.add_parser("eval-flow", help="KITTI endpoint error and F1")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pred-kind", default=None, help="suffix of predicted flow files, e.g. 'rigid'")
    p.set_defaults(func=cmd_eval_flow)

    p = sub.add_parser("eval-motion", help="motion segmentation metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pred-kind", default="segmentation")
    p.add_argument("--gt-kind", default="motion")
    p.set_defaults(func=cmd_eval_motion)

    p = sub.add_parser("eval-sem", help="semantic segmentation metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=19)
    p.set_defaults(func=cmd_eval_sem)

    p = sub.add_parser("viz", help="colorized panels of flows, probabilities and masks")
    p.add_argument("--data", required=True)
    p.add_argument("--flow", default=None, help="root holding optical flow (default: --data)")
    p.add_argument("--out", required=True)
    motion_flags(p, xi=True, tau=True)
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.jobs is not None and args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        with np.errstate(divide="raise", invalid="raise"):
            return args.func(args)
    except UsageError as exc:
        print(f"scenedistill: usage error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"scenedistill: numeric error: {exc}", file=sys.stderr)
        return 4
    except DATA_ERRORS as exc:
        print(f"scenedistill: data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
