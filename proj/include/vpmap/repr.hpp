// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vpmap/core.hpp"

namespace vpmap {

struct NormDispTag {};
struct CuboidTag {};
struct LogDepthTag {};

/// Disparity affinely mapped to [-1, 1] using clip-wide extrema; 0 off-mask.
using NormalizedDisparity = Field<double, NormDispTag>;
/// Per-pixel (x/z, y/z, log z); 0 off-mask.
using CuboidMap = Field<Vec3, CuboidTag>;
using LogDepthMap = Field<double, LogDepthTag>;

/// Per-frame diagonal field of view plus a log-depth grid.
struct DecoupledMap {
    std::vector<double> theta_diag;
    LogDepthMap log_depth;

    int frames() const { return log_depth.frames(); }
    const FrameGrid& grid() const { return log_depth.grid(); }
};

struct NormalizedDisparityResult {
    NormalizedDisparity values;
    /// Set when the clip's disparity range collapses; values are then all zero.
    bool degenerate_range = false;
};

/// z channel of a point map.
DepthMap depth_of(const PointMap& pmap);
/// 1 / z on valid pixels, 0 elsewhere.
DisparityMap disparity_from_depth(const DepthMap& depth, const ValidMask& mask);

NormalizedDisparityResult normalize_disparity(const DisparityMap& disp, const ValidMask& mask);

CuboidMap encode_cuboid(const PointMap& pmap, const ValidMask& mask);
PointMap decode_cuboid(const CuboidMap& cuboid);
/// As above, with off-mask pixels written as zero.
PointMap decode_cuboid(const CuboidMap& cuboid, const ValidMask& mask);

double theta_from_focal(double focal, const FrameGrid& grid);
double focal_from_theta(double theta_diag, const FrameGrid& grid);

/// Least-squares focal length of one frame from its valid pixels.
double recover_focal(const PointMap& pmap, const ValidMask& mask, int frame);

struct DecoupledEncoding {
    DecoupledMap map;
    std::vector<Intrinsics> intrinsics;
};

DecoupledEncoding encode_decoupled(const PointMap& pmap, const ValidMask& mask);
PointMap decode_decoupled(const DecoupledMap& dec);
PointMap decode_decoupled(const DecoupledMap& dec, const ValidMask& mask);

/// Pulls dL/dp back through decode_decoupled onto log-depth and theta.
DecoupledMap decode_decoupled_backward(const DecoupledMap& dec, const PointMap& grad_points);

struct NormalizedSequence {
    PointMap points;
    double scale = 1.0;
};

/// Divides the clip by one shared scale so that the (lower) median valid depth is 1.
NormalizedSequence normalize_sequence(const PointMap& pmap, const ValidMask& mask);
PointMap denormalize_sequence(const PointMap& pmap, double scale);

}  // namespace vpmap
