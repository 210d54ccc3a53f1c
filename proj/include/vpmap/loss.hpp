// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vpmap/core.hpp"
#include "vpmap/repr.hpp"

namespace vpmap {

struct LossWeights {
    double lambda_n = 1.0;
    double lambda_mask = 1.0;
    /// Patch subdivision factors for the multi-scale depth term.
    std::vector<int> ms_scales{1, 2, 4, 8, 16};

    void validate(const FrameGrid& grid) const;
};

/// Log-normal noise-level distribution of the EDM schedule.
struct NoiseSchedule {
    double p_mean = 0.7;
    double p_std = 1.6;
    double sigma_data = 0.5;

    void validate() const;
};

template <class Grad>
struct ScalarLoss {
    double value = 0.0;
    Grad gradient;
};

/// Gradient of a normal-map loss with respect to the predicted normal vectors.
using NormalGradient = Field<Vec3, PointTag>;

/// Mean L1 over valid pixels of log depth plus per-pixel theta_diag.
/// The gradient is taken with respect to the prediction.
ScalarLoss<DecoupledMap> loss_recon(const DecoupledMap& pred, const DecoupledMap& gt,
                                    const ValidMask& mask);

/// Mean of (1 - n . n_hat) over pixels where both maps are defined and the mask is valid.
ScalarLoss<NormalGradient> loss_normal(const NormalMap& pred, const NormalMap& gt,
                                       const ValidMask& mask);

/// Patch-mean-removed L1 between depth maps over non-overlapping alpha x alpha tilings.
ScalarLoss<DepthMap> loss_multiscale(const DepthMap& pred, const DepthMap& gt, const ValidMask& mask,
                                     std::span<const int> scales);

/// Mean squared error over all pixels; the mask only participates in shape checks.
ScalarLoss<NormalizedDisparity> loss_identity(const NormalizedDisparity& disp_norm,
                                              const NormalizedDisparity& decoded,
                                              const ValidMask& mask);

ScalarLoss<ValidMask> loss_mask(const ValidMask& pred, const ValidMask& gt);

struct VaeLossInputs {
    DecoupledMap pred;
    ValidMask pred_mask;
    DecoupledMap gt;
    ValidMask gt_mask;
    NormalizedDisparity disp_norm;
    /// Frozen base decoder applied to the composed latent.
    NormalizedDisparity decoded_disp;
};

struct VaeGradients {
    DecoupledMap pred;
    ValidMask pred_mask;
    NormalizedDisparity decoded_disp;
};

struct LossReport {
    double recon = 0.0;
    double normal = 0.0;
    double multiscale = 0.0;
    double identity = 0.0;
    double mask = 0.0;
    double pmap = 0.0;
    double total = 0.0;
    LossWeights weights;
    std::optional<VaeGradients> gradients;
};

/// Assembles L_identity + (L_recon + L_ms + lambda_n L_n) + lambda_mask L_mask.
/// Normals are derived from the decoded point maps on the ground-truth mask.
LossReport loss_vae(const VaeLossInputs& in, const LossWeights& weights, bool with_gradients = true);

std::vector<double> sample_sigma(const NoiseSchedule& schedule, std::uint64_t seed, std::size_t count);

/// EDM loss weight (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2.
double edm_weight(double sigma, const NoiseSchedule& schedule);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckOptions {
    double step = 1e-6;
    double tolerance = 1e-5;
    /// Denominator floor of the relative error, so exact zeros compare absolutely.
    double floor = 1e-8;
    /// Further floor as a fraction of the largest analytic entry: entries far below the
    /// gradient's own scale are dominated by the rounding error of the loss value.
    double relative_floor = 1e-2;
};

struct GradCheckResult {
    bool passed = false;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    std::size_t coordinates = 0;
};

using FlatLossFn = std::function<double(std::span<const double>)>;

/// Central differences of `loss` at `x` against `analytic`, coordinate by coordinate.
GradCheckResult grad_check(const FlatLossFn& loss, std::span<const double> x,
                           std::span<const double> analytic, const GradCheckOptions& options = {});

struct SuiteEntry {
    std::string loss;
    int instances = 0;
    int failures = 0;
    double worst_rel_error = 0.0;
    GradCheckResult worst;
};

/// Checks every loss term, plus the assembled L_VAE, on random kink-free instances.
std::vector<SuiteEntry> run_gradient_suite(std::uint64_t seed, int instances, int size,
                                           const GradCheckOptions& options = {});

}  // namespace vpmap
