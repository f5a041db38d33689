"""Rigid flow, motion masks and flow self-distillation for monocular video.

The package covers pinhole reprojection and rigid flow, motion probability
and mask composition, a self-distillation loss with analytic gradients,
KITTI / Cityscapes style metrics, dataset I/O and a synthetic scene
generator with closed-form ground truth.
"""
# re-exports
# ruff: noqa: F401
from .core import DepthMap, FlowField, MotionProbMap, ScalarMap
from .distill import DistillConfig, refine_flow, self_distillation_gradient, self_distillation_loss
from .errors import *  # noqa: F401,F403
from .geometry import CameraIntrinsics, RelativePose, bilinear_warp, boundary_mask, reproject, rigid_flow
from .metrics import DepthEvalConfig, eval_depth, eval_flow, eval_motion_seg, eval_semantic
from .motion import (MotionConfig, consistency_mask, dynamic_prior_mask, final_mask, motion_probability,
                     motion_segmentation)
from .photometric import PhotometricConfig, photometric_error, ssim
from .synth import SceneSpec, perturb_flow, render

__version__ = "0.1.0"
