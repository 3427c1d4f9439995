# SPDX-License-Identifier: Apache-2.0
"""Continual-memory convolution: kernels estimated from a masked shared weight
matrix, plus the sequential multi-task training harness and cost benchmarks.
"""

try:
    from ._core import (  # type: ignore[attr-defined]
        CapacityExhaustedError,
        CmcLayer,
        ConfigError,
        ProtocolError,
        ShapeError,
        bench_forward,
        conv2d_backward,
        conv2d_forward,
        degrade,
        make_clean_images,
        model_cost,
        psnr,
        run_experiment,
        ssim,
    )
except ImportError:  # in-tree builds put _core next to the package dir
    from _core import (  # type: ignore[no-redef]
        CapacityExhaustedError,
        CmcLayer,
        ConfigError,
        ProtocolError,
        ShapeError,
        bench_forward,
        conv2d_backward,
        conv2d_forward,
        degrade,
        make_clean_images,
        model_cost,
        psnr,
        run_experiment,
        ssim,
    )

__all__ = [
    "CapacityExhaustedError",
    "CmcLayer",
    "ConfigError",
    "ProtocolError",
    "ShapeError",
    "bench_forward",
    "conv2d_backward",
    "conv2d_forward",
    "degrade",
    "make_clean_images",
    "model_cost",
    "psnr",
    "run_experiment",
    "ssim",
]

__version__ = "0.1.0"
