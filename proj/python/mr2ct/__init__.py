"""MR to CT spine translation pipeline."""

from ._core import (
    Error,
    ValidationError,
    cosine_schedule,
    dice,
    fit_rigid,
    generate_phantom,
    l1,
    mse,
    paired_ttest,
    psnr,
    read_nifti,
    read_nifti_labels,
    run_cli,
    sample_oracle,
    ssim,
    threshold_segment,
    vifp,
    write_nifti,
)

__all__ = [
    "Error",
    "ValidationError",
    "cosine_schedule",
    "dice",
    "fit_rigid",
    "generate_phantom",
    "l1",
    "mse",
    "paired_ttest",
    "psnr",
    "read_nifti",
    "read_nifti_labels",
    "run_cli",
    "sample_oracle",
    "ssim",
    "threshold_segment",
    "vifp",
    "write_nifti",
]
