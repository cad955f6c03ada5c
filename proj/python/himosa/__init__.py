"""Hierarchical mixture-of-sparse-attention super-resolution.

Thin Python surface over the C++ core: config parsing, parameter and FLOP
accounting, image metrics, inference from checkpoints, and the in-process CLI.
"""

from ._himosa import (
    Config,
    __version__,
    bicubic_downsample,
    count_params,
    flops_report,
    format_psnr,
    load_config,
    load_image,
    parse_config,
    psnr,
    run_cli,
    save_image,
    ssim,
    upscale,
)

__all__ = [
    "Config",
    "__version__",
    "bicubic_downsample",
    "count_params",
    "flops_report",
    "format_psnr",
    "load_config",
    "load_image",
    "parse_config",
    "psnr",
    "run_cli",
    "save_image",
    "ssim",
    "upscale",
]
