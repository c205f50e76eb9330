"""Counterfactual annotation, compositing, toy object removal and metrics.

Images are float arrays of shape (H, W, 3) in [0, 1]; masks are (H, W).
"""

from ._objclear import (
    ObjclearError,
    annotate,
    attention_to_mask,
    cli,
    compose,
    estimate_shadow_direction,
    extract_alpha,
    fuse,
    gaussian_blur,
    mask_loss,
    mask_metrics,
    morphology,
    psnr,
    psnr_bg,
    render_scene,
    run_demo,
)

__all__ = [
    "ObjclearError",
    "annotate",
    "attention_to_mask",
    "cli",
    "compose",
    "estimate_shadow_direction",
    "extract_alpha",
    "fuse",
    "gaussian_blur",
    "mask_loss",
    "mask_metrics",
    "morphology",
    "psnr",
    "psnr_bg",
    "render_scene",
    "run_demo",
]
