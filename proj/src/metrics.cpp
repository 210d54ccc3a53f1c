// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "vpmap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace vpmap {

std::string_view to_string(AlignMethod m) {
    return m == AlignMethod::LeastSquares ? "least_squares" : "median_ratio";
}

std::string_view to_string(DepthAlignSpace s) { return s == DepthAlignSpace::Depth ? "depth" : "disparity"; }

namespace {

template <class A, class B>
void require_shape(const A& a, const B& b, const ValidMask& mask) {
    if (!a.same_shape(b) || !a.same_shape(mask)) throw Error(ErrorCode::ShapeError, "metric input shape mismatch");
}

double to_space(double z, DepthAlignSpace space) {
    if (space == DepthAlignSpace::Depth) return z;
    if (!(z > 0.0)) throw Error(ErrorCode::InvalidDepth, "disparity-space alignment needs positive depth");
    return 1.0 / z;
}

double lower_median(std::vector<double> values) {
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

}  // namespace

double point_alignment_objective(const PointMap& pred, const PointMap& gt, const ValidMask& mask, double scale) {
    require_shape(pred, gt, mask);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (is_valid(mask[i])) sum += (scale * pred[i] - gt[i]).squaredNorm();
    }
    return sum;
}

AlignmentResult align_scale_points(const PointMap& pred, const PointMap& gt, const ValidMask& mask,
                                   AlignMethod method) {
    require_shape(pred, gt, mask);
    if (count_valid(mask) == 0) throw Error(ErrorCode::EmptyMask, "alignment needs at least one valid pixel");
    AlignmentResult out;
    if (method == AlignMethod::LeastSquares) {
        double cross = 0.0;
        double pred_sq = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (!is_valid(mask[i])) continue;
            cross += gt[i].dot(pred[i]);
            pred_sq += pred[i].squaredNorm();
        }
        if (!(pred_sq > 0.0)) throw Error(ErrorCode::DegeneratePrediction, "prediction is zero on every valid pixel");
        out.scale = cross / pred_sq;
    } else {
        std::vector<double> ratios;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double pn = pred[i].norm();
            if (is_valid(mask[i]) && pn > 0.0) ratios.push_back(gt[i].norm() / pn);
        }
        if (ratios.empty()) throw Error(ErrorCode::DegeneratePrediction, "prediction is zero on every valid pixel");
        out.scale = lower_median(std::move(ratios));
    }
    if (!(out.scale > 0.0)) throw Error(ErrorCode::AntiCorrelated, "best-fit scale is not positive");
    out.objective = point_alignment_objective(pred, gt, mask, out.scale);
    return out;
}

double depth_alignment_objective(const DepthMap& pred, const DepthMap& gt, const ValidMask& mask, double scale,
                                 double shift, DepthAlignSpace space) {
    require_shape(pred, gt, mask);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!is_valid(mask[i])) continue;
        const double r = scale * to_space(pred[i], space) + shift - to_space(gt[i], space);
        sum += r * r;
    }
    return sum;
}

AlignmentResult align_scale_shift_depth(const DepthMap& pred, const DepthMap& gt, const ValidMask& mask,
                                        DepthAlignSpace space) {
    require_shape(pred, gt, mask);
    // Centered normal equations of the 2x2 least-squares system.
    double n = 0.0, mean_p = 0.0, mean_g = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!is_valid(mask[i])) continue;
        n += 1.0;
        mean_p += to_space(pred[i], space);
        mean_g += to_space(gt[i], space);
    }
    if (n < 2.0) throw Error(ErrorCode::DegeneratePrediction, "scale-shift alignment needs two valid pixels");
    mean_p /= n;
    mean_g /= n;
    double spp = 0.0, spg = 0.0, scale_ref = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!is_valid(mask[i])) continue;
        const double p = to_space(pred[i], space);
        const double dp = p - mean_p;
        spp += dp * dp;
        spg += dp * (to_space(gt[i], space) - mean_g);
        scale_ref += p * p;
    }
    if (!(spp > 1e-24 * scale_ref) || !(spp > 0.0)) {
        throw Error(ErrorCode::DegeneratePrediction, "prediction is constant over the valid pixels");
    }
    AlignmentResult out;
    out.scale = spg / spp;
    out.shift = mean_g - out.scale * mean_p;
    if (!(out.scale > 0.0)) throw Error(ErrorCode::AntiCorrelated, "best-fit scale is not positive");
    out.objective = depth_alignment_objective(pred, gt, mask, out.scale, out.shift, space);
    return out;
}

DepthMap apply_depth_alignment(const DepthMap& pred, const AlignmentResult& a, DepthAlignSpace space) {
    DepthMap out(pred.frames(), pred.grid(), 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (space == DepthAlignSpace::Depth) {
            out[i] = a.scale * pred[i] + a.shift;
        } else if (pred[i] > 0.0) {
            const double disp = a.scale / pred[i] + a.shift;
            out[i] = disp > 0.0 ? 1.0 / disp : 0.0;
        }
    }
    return out;
}

PointMetrics eval_points(const PointMap& pred, const PointMap& gt, const ValidMask& mask, double scale,
                         double threshold) {
    require_shape(pred, gt, mask);
    PointMetrics out;
    out.threshold = threshold;
    out.scale = scale;
    double err_sum = 0.0;
    std::size_t inliers = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!is_valid(mask[i])) continue;
        const double gn = gt[i].norm();
        if (!(gn > 0.0)) {
            ++out.excluded;
            continue;
        }
        const double e = (scale * pred[i] - gt[i]).norm() / gn;
        err_sum += e;
        inliers += e < threshold ? 1 : 0;
        ++out.evaluated;
    }
    if (out.evaluated == 0) throw Error(ErrorCode::EmptyMask, "no evaluable pixel");
    out.rel = 100.0 * err_sum / static_cast<double>(out.evaluated);
    out.delta = 100.0 * static_cast<double>(inliers) / static_cast<double>(out.evaluated);
    return out;
}

DepthMetrics eval_depth(const DepthMap& pred, const DepthMap& gt, const ValidMask& mask, double threshold) {
    require_shape(pred, gt, mask);
    DepthMetrics out;
    out.threshold = threshold;
    double err_sum = 0.0;
    std::size_t inliers = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!is_valid(mask[i])) continue;
        const double p = pred[i];
        const double g = gt[i];
        if (!(p > 0.0) || !(g > 0.0)) {
            ++out.excluded;
            continue;
        }
        err_sum += std::abs(p - g) / g;
        inliers += std::max(p / g, g / p) < threshold ? 1 : 0;
        ++out.evaluated;
    }
    if (out.evaluated == 0) throw Error(ErrorCode::EmptyMask, "no evaluable pixel after exclusions");
    out.rel = 100.0 * err_sum / static_cast<double>(out.evaluated);
    out.delta = 100.0 * static_cast<double>(inliers) / static_cast<double>(out.evaluated);
    return out;
}

}  // namespace vpmap
