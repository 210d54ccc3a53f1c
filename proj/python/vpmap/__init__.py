# Copyright 2026 The vpmap Authors
# SPDX-License-Identifier: Apache-2.0
"""Point map representations, losses, metrics and pose recovery."""

from ._core import (
    DEPTH_INLIER_THRESHOLD,
    POINT_INLIER_THRESHOLD,
    VpmapError,
    align_scale_points,
    align_scale_shift_depth,
    compare_trajectories,
    decode_cuboid,
    decode_decoupled,
    encode_cuboid,
    encode_decoupled,
    eval_depth,
    eval_points,
    focal_from_theta,
    loss_multiscale,
    make_tracks,
    normalize_disparity,
    read_container,
    render_scene,
    run_gradient_suite,
    run_toy_demo,
    sample_sigma,
    solve_poses,
    theta_from_focal,
    write_container,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.3.0"
