// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

#include "vpmap/core.hpp"

namespace vpmap {

inline constexpr double kPointInlierThreshold = 0.25;
inline constexpr double kDepthInlierThreshold = 1.25;

enum class AlignMethod { LeastSquares, MedianRatio };
enum class DepthAlignSpace { Depth, Disparity };

std::string_view to_string(AlignMethod m);
std::string_view to_string(DepthAlignSpace s);

/// One scale (and optionally shift) shared by every frame of the clip.
struct AlignmentResult {
    double scale = 1.0;
    double shift = 0.0;
    /// Sum of squared residuals at the returned parameters.
    double objective = 0.0;
};

/// sum over valid pixels of |s * pred - gt|^2.
double point_alignment_objective(const PointMap& pred, const PointMap& gt, const ValidMask& mask, double scale);

AlignmentResult align_scale_points(const PointMap& pred, const PointMap& gt, const ValidMask& mask,
                                   AlignMethod method = AlignMethod::LeastSquares);

/// sum over valid pixels of (s * pred + b - gt)^2, in the requested space.
double depth_alignment_objective(const DepthMap& pred, const DepthMap& gt, const ValidMask& mask, double scale,
                                 double shift, DepthAlignSpace space = DepthAlignSpace::Depth);

AlignmentResult align_scale_shift_depth(const DepthMap& pred, const DepthMap& gt, const ValidMask& mask,
                                        DepthAlignSpace space = DepthAlignSpace::Depth);

/// Applies an alignment found in `space`; disparity-space fits are mapped back to depth.
/// Pixels whose aligned disparity is non-positive become 0 (and are excluded by eval_depth).
DepthMap apply_depth_alignment(const DepthMap& pred, const AlignmentResult& a,
                               DepthAlignSpace space = DepthAlignSpace::Depth);

struct PointMetrics {
    double rel = 0.0;    ///< percent
    double delta = 0.0;  ///< percent of pixels with relative error below the threshold
    std::size_t evaluated = 0;
    std::size_t excluded = 0;  ///< valid pixels with a zero ground-truth point
    double threshold = kPointInlierThreshold;
    double scale = 1.0;
};

struct DepthMetrics {
    double rel = 0.0;
    double delta = 0.0;
    std::size_t evaluated = 0;
    std::size_t excluded = 0;  ///< valid pixels with non-positive aligned or ground-truth depth
    double threshold = kDepthInlierThreshold;
};

/// Per-pixel |s * pred - gt| / |gt| over valid pixels.
PointMetrics eval_points(const PointMap& pred, const PointMap& gt, const ValidMask& mask, double scale = 1.0,
                         double threshold = kPointInlierThreshold);

/// `pred` must already be aligned. Inliers satisfy max(p/g, g/p) < threshold strictly.
DepthMetrics eval_depth(const DepthMap& pred, const DepthMap& gt, const ValidMask& mask,
                        double threshold = kDepthInlierThreshold);

}  // namespace vpmap
