// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "vpmap/loss.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace vpmap {

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_shape(bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::ShapeError, what);
}

void check_decoupled(const DecoupledMap& d) {
    check_shape(static_cast<int>(d.theta_diag.size()) == d.frames(), "theta_diag length differs from frame count");
}

}  // namespace

void LossWeights::validate(const FrameGrid& grid) const {
    if (!(lambda_n >= 0.0) || !(lambda_mask >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "loss weights must be non-negative");
    }
    if (ms_scales.empty()) throw Error(ErrorCode::InvalidConfig, "ms_scales must not be empty");
    for (int a : ms_scales) {
        if (a < 1 || a > grid.width || a > grid.height) {
            throw Error(ErrorCode::InvalidConfig,
                        "scale " + std::to_string(a) + " leaves patches smaller than one pixel");
        }
    }
}

void NoiseSchedule::validate() const {
    if (!(p_std > 0.0) || !(sigma_data > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "p_std and sigma_data must be positive");
    }
}

ScalarLoss<DecoupledMap> loss_recon(const DecoupledMap& pred, const DecoupledMap& gt, const ValidMask& mask) {
    check_decoupled(pred);
    check_decoupled(gt);
    check_shape(pred.log_depth.same_shape(gt.log_depth) && pred.log_depth.same_shape(mask),
                "recon loss shape mismatch");
    const std::size_t n = count_valid(mask);
    if (n == 0) throw Error(ErrorCode::EmptyMask, "recon loss needs at least one valid pixel");
    const double inv_n = 1.0 / static_cast<double>(n);

    ScalarLoss<DecoupledMap> out;
    out.gradient.log_depth = LogDepthMap(pred.frames(), pred.grid(), 0.0);
    out.gradient.theta_diag.assign(pred.frames(), 0.0);
    double sum = 0.0;
    for (int t = 0; t < pred.frames(); ++t) {
        const double d_theta = pred.theta_diag[t] - gt.theta_diag[t];
        std::size_t frame_valid = 0;
        for (int v = 0; v < pred.grid().height; ++v) {
            for (int u = 0; u < pred.grid().width; ++u) {
                if (!is_valid(mask(t, v, u))) continue;
                ++frame_valid;
                const double d = pred.log_depth(t, v, u) - gt.log_depth(t, v, u);
                sum += std::abs(d);
                out.gradient.log_depth(t, v, u) = sign_of(d) * inv_n;
            }
        }
        // theta_diag is a constant map, so every valid pixel repeats its error.
        sum += static_cast<double>(frame_valid) * std::abs(d_theta);
        out.gradient.theta_diag[t] = static_cast<double>(frame_valid) * sign_of(d_theta) * inv_n;
    }
    out.value = sum * inv_n;
    return out;
}

ScalarLoss<NormalGradient> loss_normal(const NormalMap& pred, const NormalMap& gt, const ValidMask& mask) {
    check_shape(pred.normals.same_shape(gt.normals) && pred.normals.same_shape(mask), "normal loss shape mismatch");
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        n += (pred.defined[i] && gt.defined[i] && is_valid(mask[i])) ? 1 : 0;
    }
    if (n == 0) throw Error(ErrorCode::EmptyMask, "no pixel where both normal maps are defined");
    const double inv_n = 1.0 / static_cast<double>(n);
    ScalarLoss<NormalGradient> out;
    out.gradient = NormalGradient(mask.frames(), mask.grid(), Vec3::Zero());
    double sum = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!(pred.defined[i] && gt.defined[i] && is_valid(mask[i]))) continue;
        sum += 1.0 - pred.normals[i].dot(gt.normals[i]);
        out.gradient[i] = -gt.normals[i] * inv_n;
    }
    out.value = sum * inv_n;
    return out;
}

ScalarLoss<DepthMap> loss_multiscale(const DepthMap& pred, const DepthMap& gt, const ValidMask& mask,
                                     std::span<const int> scales) {
    check_shape(pred.same_shape(gt) && pred.same_shape(mask), "multi-scale loss shape mismatch");
    const FrameGrid& grid = pred.grid();
    LossWeights{1.0, 1.0, std::vector<int>(scales.begin(), scales.end())}.validate(grid);

    ScalarLoss<DepthMap> out;
    out.gradient = DepthMap(pred.frames(), grid, 0.0);
    double sum = 0.0;
    std::size_t contributions = 0;

    std::vector<int> col_patch(grid.width);
    std::vector<int> row_patch(grid.height);
    for (const int alpha : scales) {
        for (int u = 0; u < grid.width; ++u) col_patch[u] = static_cast<int>((static_cast<long>(u) * alpha) / grid.width);
        for (int v = 0; v < grid.height; ++v) row_patch[v] = static_cast<int>((static_cast<long>(v) * alpha) / grid.height);
        const std::size_t patches = static_cast<std::size_t>(alpha) * alpha;
        std::vector<double> pred_sum(patches);
        std::vector<double> gt_sum(patches);
        std::vector<double> sign_sum(patches);
        std::vector<std::size_t> count(patches);

        for (int t = 0; t < pred.frames(); ++t) {
            std::fill(pred_sum.begin(), pred_sum.end(), 0.0);
            std::fill(gt_sum.begin(), gt_sum.end(), 0.0);
            std::fill(sign_sum.begin(), sign_sum.end(), 0.0);
            std::fill(count.begin(), count.end(), 0);
            auto patch_of = [&](int v, int u) {
                return static_cast<std::size_t>(row_patch[v]) * alpha + col_patch[u];
            };
            for (int v = 0; v < grid.height; ++v) {
                for (int u = 0; u < grid.width; ++u) {
                    if (!is_valid(mask(t, v, u))) continue;
                    const std::size_t k = patch_of(v, u);
                    pred_sum[k] += pred(t, v, u);
                    gt_sum[k] += gt(t, v, u);
                    ++count[k];
                }
            }
            for (std::size_t k = 0; k < patches; ++k) {
                if (count[k] == 0) continue;
                pred_sum[k] /= static_cast<double>(count[k]);
                gt_sum[k] /= static_cast<double>(count[k]);
                contributions += count[k];
            }
            // First pass: residuals and their signs per patch.
            for (int v = 0; v < grid.height; ++v) {
                for (int u = 0; u < grid.width; ++u) {
                    if (!is_valid(mask(t, v, u))) continue;
                    const std::size_t k = patch_of(v, u);
                    const double r = (pred(t, v, u) - pred_sum[k]) - (gt(t, v, u) - gt_sum[k]);
                    sum += std::abs(r);
                    const double s = sign_of(r);
                    sign_sum[k] += s;
                    out.gradient(t, v, u) += s;
                }
            }
            // Second pass: the patch mean couples every pixel of the patch.
            for (int v = 0; v < grid.height; ++v) {
                for (int u = 0; u < grid.width; ++u) {
                    if (!is_valid(mask(t, v, u))) continue;
                    const std::size_t k = patch_of(v, u);
                    out.gradient(t, v, u) -= sign_sum[k] / static_cast<double>(count[k]);
                }
            }
        }
    }
    if (contributions == 0) {
        out.value = 0.0;
        return out;
    }
    const double inv = 1.0 / static_cast<double>(contributions);
    out.value = sum * inv;
    for (auto& g : out.gradient.values()) g *= inv;
    return out;
}

ScalarLoss<NormalizedDisparity> loss_identity(const NormalizedDisparity& disp_norm,
                                              const NormalizedDisparity& decoded, const ValidMask& mask) {
    check_shape(disp_norm.same_shape(decoded) && disp_norm.same_shape(mask), "identity loss shape mismatch");
    if (disp_norm.empty()) throw Error(ErrorCode::EmptyMask, "identity loss on an empty clip");
    const double inv_n = 1.0 / static_cast<double>(disp_norm.size());
    ScalarLoss<NormalizedDisparity> out;
    out.gradient = NormalizedDisparity(disp_norm.frames(), disp_norm.grid(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < disp_norm.size(); ++i) {
        const double d = decoded[i] - disp_norm[i];
        sum += d * d;
        out.gradient[i] = 2.0 * d * inv_n;
    }
    out.value = sum * inv_n;
    return out;
}

ScalarLoss<ValidMask> loss_mask(const ValidMask& pred, const ValidMask& gt) {
    check_shape(pred.same_shape(gt), "mask loss shape mismatch");
    if (pred.empty()) throw Error(ErrorCode::EmptyMask, "mask loss on an empty clip");
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    ScalarLoss<ValidMask> out;
    out.gradient = ValidMask(pred.frames(), pred.grid(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - gt[i];
        sum += d * d;
        out.gradient[i] = 2.0 * d * inv_n;
    }
    out.value = sum * inv_n;
    return out;
}

LossReport loss_vae(const VaeLossInputs& in, const LossWeights& weights, bool with_gradients) {
    check_decoupled(in.pred);
    check_decoupled(in.gt);
    weights.validate(in.gt.grid());

    const auto recon = loss_recon(in.pred, in.gt, in.gt_mask);

    const PointMap pred_points = decode_decoupled(in.pred);
    const PointMap gt_points = decode_decoupled(in.gt);
    const NormalMap pred_normals = derive_normals(pred_points, in.gt_mask);
    const NormalMap gt_normals = derive_normals(gt_points, in.gt_mask);
    const auto normal = loss_normal(pred_normals, gt_normals, in.gt_mask);

    const DepthMap pred_depth = depth_of(pred_points);
    const DepthMap gt_depth = depth_of(gt_points);
    const auto ms = loss_multiscale(pred_depth, gt_depth, in.gt_mask, weights.ms_scales);

    const auto identity = loss_identity(in.disp_norm, in.decoded_disp, in.gt_mask);
    const auto mask = loss_mask(in.pred_mask, in.gt_mask);

    LossReport report;
    report.weights = weights;
    report.recon = recon.value;
    report.normal = normal.value;
    report.multiscale = ms.value;
    report.identity = identity.value;
    report.mask = mask.value;
    report.pmap = recon.value + ms.value + weights.lambda_n * normal.value;
    report.total = identity.value + report.pmap + weights.lambda_mask * mask.value;
    if (!std::isfinite(report.total)) throw Error(ErrorCode::NonFiniteLoss, "L_VAE is not finite");
    if (!with_gradients) return report;

    VaeGradients g;
    g.pred = recon.gradient;

    PointMap grad_normals(normal.gradient.frames(), normal.gradient.grid());
    for (std::size_t i = 0; i < grad_normals.size(); ++i) {
        grad_normals[i] = weights.lambda_n * normal.gradient[i];
    }
    PointMap grad_points = derive_normals_backward(pred_points, pred_normals, grad_normals);
    for (std::size_t i = 0; i < grad_points.size(); ++i) {
        grad_points[i].z() += ms.gradient[i];
    }
    const DecoupledMap through_points = decode_decoupled_backward(in.pred, grad_points);
    for (std::size_t i = 0; i < g.pred.log_depth.size(); ++i) {
        g.pred.log_depth[i] += through_points.log_depth[i];
    }
    for (std::size_t t = 0; t < g.pred.theta_diag.size(); ++t) {
        g.pred.theta_diag[t] += through_points.theta_diag[t];
    }

    g.pred_mask = mask.gradient;
    for (auto& x : g.pred_mask.values()) x *= weights.lambda_mask;
    g.decoded_disp = identity.gradient;
    report.gradients = std::move(g);
    return report;
}

std::vector<double> sample_sigma(const NoiseSchedule& schedule, std::uint64_t seed, std::size_t count) {
    schedule.validate();
    if (count == 0) throw Error(ErrorCode::InvalidInput, "sample count must be at least 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> log_sigma(schedule.p_mean, schedule.p_std);
    std::vector<double> out(count);
    for (auto& s : out) s = std::exp(log_sigma(rng));
    return out;
}

double edm_weight(double sigma, const NoiseSchedule& schedule) {
    schedule.validate();
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::InvalidSigma, "sigma must be positive");
    const double sd = schedule.sigma_data;
    const double prod = sigma * sd;
    return (sigma * sigma + sd * sd) / (prod * prod);
}

GradCheckResult grad_check(const FlatLossFn& loss, std::span<const double> x, std::span<const double> analytic,
                           const GradCheckOptions& options) {
    if (x.empty()) throw Error(ErrorCode::EmptyMask, "gradient check on an empty input");
    if (x.size() != analytic.size()) throw Error(ErrorCode::ShapeError, "gradient length differs from input length");
    std::vector<double> probe(x.begin(), x.end());
    const double base = loss(probe);
    if (!std::isfinite(base)) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite at the check point");

    double scale = 0.0;
    for (const double a : analytic) scale = std::max(scale, std::abs(a));
    const double floor = std::max(options.floor, options.relative_floor * scale);

    GradCheckResult result;
    result.coordinates = x.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = probe[i];
        // The representable step, not the nominal one.
        const double hi = xi + options.step;
        const double lo = xi - options.step;
        probe[i] = hi;
        const double plus = loss(probe);
        probe[i] = lo;
        const double minus = loss(probe);
        probe[i] = xi;
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            throw Error(ErrorCode::NonFiniteLoss, "loss is not finite at coordinate " + std::to_string(i));
        }
        const double numeric = (plus - minus) / (hi - lo);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        if (i == 0 || rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = i;
            result.analytic_at_worst = analytic[i];
            result.numeric_at_worst = numeric;
        }
    }
    result.passed = result.max_rel_error < options.tolerance;
    return result;
}

}  // namespace vpmap
