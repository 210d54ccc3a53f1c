// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "vpmap/core.hpp"
#include "vpmap/loss.hpp"
#include "vpmap/repr.hpp"

namespace vpmap::latent {

/// Diagonal Gaussian latent, one column per frame.
struct LatentCode {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd variance;
};

struct PmapDecoding {
    DecoupledMap map;
    ValidMask mask;
};

using BaseEncoder = std::function<LatentCode(const NormalizedDisparity&)>;
using BaseDecoder = std::function<NormalizedDisparity(const LatentCode&)>;
/// Returns a mean offset with the shape of the base latent mean.
using ResidualEncoder =
    std::function<Eigen::MatrixXd(const PointMap&, const ValidMask&, const NormalizedDisparity&)>;
using PmapDecoder = std::function<PmapDecoding(const LatentCode&)>;

/// Frozen base autoencoder plus a trainable residual encoder and point-map decoder.
class CodecBundle {
public:
    static constexpr double kDefaultOffsetScale = 0.1;

    CodecBundle(BaseEncoder base_encoder, BaseDecoder base_decoder, ResidualEncoder residual_encoder,
                PmapDecoder pmap_decoder, double offset_scale = kDefaultOffsetScale);

    const BaseEncoder& base_encoder() const { return base_encoder_; }
    const BaseDecoder& base_decoder() const { return base_decoder_; }

    ResidualEncoder residual_encoder;
    PmapDecoder pmap_decoder;
    double offset_scale;

private:
    BaseEncoder base_encoder_;
    BaseDecoder base_decoder_;
};

/// mean = base mean + offset_scale * residual; variance = base variance.
LatentCode encode(const CodecBundle& bundle, const PointMap& pmap, const ValidMask& mask,
                  const NormalizedDisparity& disp_norm);

/// L_identity of the frozen base decoder applied to the composed latent.
double identity_probe(const CodecBundle& bundle, const PointMap& pmap, const ValidMask& mask,
                      const NormalizedDisparity& disp_norm);

// ---------------------------------------------------------------------------
// Toy reference networks

/// Fixed random orthonormal down-projection and its transpose.
struct ToyBaseCodec {
    FrameGrid grid;
    Eigen::MatrixXd basis;  ///< pixels x latent_dim, orthonormal columns

    static ToyBaseCodec make(const FrameGrid& grid, int latent_dim, std::uint64_t seed);
    int latent_dim() const { return static_cast<int>(basis.cols()); }
    LatentCode encode(const NormalizedDisparity& x) const;
    NormalizedDisparity decode(const LatentCode& code) const;
};

/// Trainable dense maps. The residual encoder reads per-frame features
/// [log depth | mask | normalized disparity]; the decoder emits log depth,
/// theta_diag = exp(.) and mask = sigmoid(.).
struct ToyParams {
    Eigen::MatrixXd residual_w;  ///< latent_dim x 3*pixels
    Eigen::VectorXd residual_b;
    Eigen::MatrixXd depth_w;  ///< pixels x latent_dim
    Eigen::VectorXd depth_b;
    Eigen::VectorXd theta_w;  ///< latent_dim
    double theta_b = 0.0;
    Eigen::MatrixXd mask_w;
    Eigen::VectorXd mask_b;

    std::size_t size() const;
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> values);
};

struct ToyModel {
    ToyBaseCodec base;
    std::shared_ptr<ToyParams> params;
    double offset_scale = CodecBundle::kDefaultOffsetScale;
    /// The decoder reads mean / input_scale and multiplies its per-pixel outputs by
    /// output_gain. Both are fixed; they equalize step sizes across parameter groups.
    double input_scale = 1.0;
    double output_gain = 4.0;

    /// Residual encoder zero-initialized; decoder weights small and seeded.
    static ToyModel make(const FrameGrid& grid, int latent_dim, std::uint64_t seed);
    ToyModel clone() const;
    /// Bundle whose trainable closures read `params` live.
    CodecBundle bundle() const;
};

Eigen::MatrixXd residual_features(const PointMap& pmap, const ValidMask& mask, const NormalizedDisparity& disp_norm);

struct ToyClip {
    PointMap points;
    ValidMask mask;
    DecoupledMap target;
    NormalizedDisparity disp_norm;
};

/// Small synthetic clips (plane, sphere, sky) normalized to median depth 1.
std::vector<ToyClip> make_toy_dataset(const FrameGrid& grid, int clips, int frames, std::uint64_t seed);

struct ToyLoss {
    LossReport report;
    std::vector<double> gradient;  ///< with respect to ToyParams::flatten()
};

/// L_VAE of one clip and its gradient with respect to every trainable parameter.
ToyLoss toy_loss(const ToyModel& model, const ToyClip& clip, const LossWeights& weights);

struct ToyFitOptions {
    int steps = 500;
    double learning_rate = 0.6;
    /// Cosine decay from learning_rate to final_lr_fraction * learning_rate over the run.
    double final_lr_fraction = 0.01;
    /// Clips per step; 0 uses the whole dataset.
    int batch_size = 0;
    LossWeights weights{1.0, 1.0, {1, 2, 4, 8, 16}};
    double divergence_limit = 1e6;
};

struct ToyFitResult {
    ToyModel model;
    /// Dataset-mean losses before the first step and after every step (gradients stripped).
    std::vector<LossReport> curve;
};

/// Plain gradient descent on L_VAE; the base codec stays frozen.
ToyFitResult toy_fit(const ToyModel& initial, const std::vector<ToyClip>& data, const ToyFitOptions& options,
                     std::uint64_t seed);

/// Dataset-mean L_VAE terms without gradients.
LossReport evaluate_dataset(const ToyModel& model, const std::vector<ToyClip>& data, const LossWeights& weights);

struct ToyDemoConfig {
    FrameGrid grid{16, 16};
    int clips = 8;
    int frames = 2;
    int latent_dim = 16;
    ToyFitOptions fit;
};

struct ToyDemoResult {
    ToyFitResult fit;
    /// Dataset-mean L_identity of the zero-offset (initial) model.
    double zero_offset_identity = 0.0;
};

/// Dataset, model and minibatch order drawn from seed, seed + 1 and seed + 2.
ToyDemoResult run_toy_demo(std::uint64_t seed, const ToyDemoConfig& config = {});

}  // namespace vpmap::latent
