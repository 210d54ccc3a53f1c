// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "vpmap/latent.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "vpmap/synth.hpp"

namespace vpmap::latent {

CodecBundle::CodecBundle(BaseEncoder base_encoder, BaseDecoder base_decoder, ResidualEncoder residual_encoder,
                         PmapDecoder pmap_decoder, double offset_scale)
    : residual_encoder(std::move(residual_encoder)),
      pmap_decoder(std::move(pmap_decoder)),
      offset_scale(offset_scale),
      base_encoder_(std::move(base_encoder)),
      base_decoder_(std::move(base_decoder)) {
    if (!base_encoder_ || !base_decoder_) throw Error(ErrorCode::InvalidConfig, "base codec must be provided");
}

LatentCode encode(const CodecBundle& bundle, const PointMap& pmap, const ValidMask& mask,
                  const NormalizedDisparity& disp_norm) {
    if (!pmap.same_shape(mask) || !pmap.same_shape(disp_norm)) {
        throw Error(ErrorCode::ShapeError, "encoder inputs differ in shape");
    }
    LatentCode code = bundle.base_encoder()(disp_norm);
    if (!bundle.residual_encoder) return code;
    const Eigen::MatrixXd offset = bundle.residual_encoder(pmap, mask, disp_norm);
    if (offset.rows() != code.mean.rows() || offset.cols() != code.mean.cols()) {
        throw Error(ErrorCode::ShapeError, "residual offset shape differs from the base latent mean");
    }
    code.mean += bundle.offset_scale * offset;
    return code;
}

double identity_probe(const CodecBundle& bundle, const PointMap& pmap, const ValidMask& mask,
                      const NormalizedDisparity& disp_norm) {
    const NormalizedDisparity decoded = bundle.base_decoder()(encode(bundle, pmap, mask, disp_norm));
    return loss_identity(disp_norm, decoded, mask).value;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::Map<const Eigen::VectorXd> frame_vector(std::span<const double> frame) {
    return {frame.data(), static_cast<Eigen::Index>(frame.size())};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

ToyBaseCodec ToyBaseCodec::make(const FrameGrid& grid, int latent_dim, std::uint64_t seed) {
    const auto n = static_cast<Eigen::Index>(grid.pixels());
    if (latent_dim < 1 || latent_dim > n) throw Error(ErrorCode::InvalidConfig, "latent_dim must lie in [1, pixels]");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd g(n, latent_dim);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = gauss(rng);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    ToyBaseCodec codec;
    codec.grid = grid;
    codec.basis = qr.householderQ() * Eigen::MatrixXd::Identity(n, latent_dim);
    return codec;
}

LatentCode ToyBaseCodec::encode(const NormalizedDisparity& x) const {
    if (!(x.grid() == grid)) throw Error(ErrorCode::ShapeError, "toy codec grid mismatch");
    LatentCode code;
    code.mean.resize(basis.cols(), x.frames());
    for (int t = 0; t < x.frames(); ++t) code.mean.col(t) = basis.transpose() * frame_vector(x.frame(t));
    // Any non-negative map works; this one varies with the input.
    code.variance = (0.05 + 0.01 * code.mean.array().square()).matrix();
    return code;
}

NormalizedDisparity ToyBaseCodec::decode(const LatentCode& code) const {
    if (code.mean.rows() != basis.cols()) throw Error(ErrorCode::ShapeError, "latent dimension mismatch");
    NormalizedDisparity out(static_cast<int>(code.mean.cols()), grid, 0.0);
    for (int t = 0; t < out.frames(); ++t) {
        const Eigen::VectorXd x = basis * code.mean.col(t);
        std::copy(x.data(), x.data() + x.size(), out.frame(t).begin());
    }
    return out;
}

std::size_t ToyParams::size() const {
    return static_cast<std::size_t>(residual_w.size() + residual_b.size() + depth_w.size() + depth_b.size() +
                                    theta_w.size() + 1 + mask_w.size() + mask_b.size());
}

std::vector<double> ToyParams::flatten() const {
    std::vector<double> out;
    out.reserve(size());
    const auto append = [&](const auto& m) { out.insert(out.end(), m.data(), m.data() + m.size()); };
    append(residual_w);
    append(residual_b);
    append(depth_w);
    append(depth_b);
    append(theta_w);
    out.push_back(theta_b);
    append(mask_w);
    append(mask_b);
    return out;
}

void ToyParams::unflatten(std::span<const double> values) {
    if (values.size() != size()) throw Error(ErrorCode::ShapeError, "parameter vector length mismatch");
    std::size_t pos = 0;
    const auto take = [&](auto& m) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), m.size(), m.data());
        pos += static_cast<std::size_t>(m.size());
    };
    take(residual_w);
    take(residual_b);
    take(depth_w);
    take(depth_b);
    take(theta_w);
    theta_b = values[pos++];
    take(mask_w);
    take(mask_b);
}

ToyModel ToyModel::make(const FrameGrid& grid, int latent_dim, std::uint64_t seed) {
    ToyModel m;
    m.base = ToyBaseCodec::make(grid, latent_dim, seed);
    const auto n = static_cast<Eigen::Index>(grid.pixels());
    const Eigen::Index k = latent_dim;
    auto p = std::make_shared<ToyParams>();
    p->residual_w = Eigen::MatrixXd::Zero(k, 3 * n);
    p->residual_b = Eigen::VectorXd::Zero(k);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 0.01);
    const auto fill = [&](Eigen::MatrixXd& w) {
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
    };
    p->depth_w.resize(n, k);
    fill(p->depth_w);
    p->depth_b = Eigen::VectorXd::Zero(n);
    p->theta_w = Eigen::VectorXd::Zero(k);
    p->theta_b = 0.0;
    p->mask_w.resize(n, k);
    fill(p->mask_w);
    p->mask_b = Eigen::VectorXd::Zero(n);
    m.params = std::move(p);
    return m;
}

ToyModel ToyModel::clone() const {
    ToyModel m = *this;
    m.params = std::make_shared<ToyParams>(*params);
    return m;
}

Eigen::MatrixXd residual_features(const PointMap& pmap, const ValidMask& mask, const NormalizedDisparity& disp_norm) {
    const auto n = static_cast<Eigen::Index>(pmap.grid().pixels());
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(3 * n, pmap.frames());
    for (int t = 0; t < pmap.frames(); ++t) {
        const auto p = pmap.frame(t);
        const auto m = mask.frame(t);
        const auto d = disp_norm.frame(t);
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool valid = is_valid(m[i]) && p[i].z() > 0.0;
            phi(i, t) = valid ? std::log(p[i].z()) : 0.0;
            phi(n + i, t) = valid ? 1.0 : 0.0;
            phi(2 * n + i, t) = d[i];
        }
    }
    return phi;
}

namespace {

struct Forward {
    Eigen::MatrixXd features;
    Eigen::MatrixXd mean;
    Eigen::VectorXd theta;
    Eigen::MatrixXd mask;
    VaeLossInputs inputs;
};

struct DecoderGains {
    double input_scale;
    double output_gain;
};

PmapDecoding decode_pmap(const ToyParams& p, const FrameGrid& grid, const DecoderGains& gains,
                         const Eigen::MatrixXd& mean, Eigen::VectorXd* theta_out = nullptr,
                         Eigen::MatrixXd* mask_out = nullptr) {
    const int frames = static_cast<int>(mean.cols());
    PmapDecoding out;
    out.map.log_depth = LogDepthMap(frames, grid, 0.0);
    out.mask = ValidMask(frames, grid, 0.0);
    const Eigen::MatrixXd z = mean / gains.input_scale;
    const Eigen::MatrixXd ld = gains.output_gain * ((p.depth_w * z).colwise() + p.depth_b);
    const Eigen::MatrixXd logits = gains.output_gain * ((p.mask_w * z).colwise() + p.mask_b);
    Eigen::MatrixXd mask = logits.unaryExpr([](double x) { return sigmoid(x); });
    Eigen::VectorXd theta(frames);
    for (int t = 0; t < frames; ++t) {
        theta(t) = std::exp(p.theta_w.dot(z.col(t)) + p.theta_b);
        out.map.theta_diag.push_back(theta(t));
        std::copy(ld.col(t).data(), ld.col(t).data() + ld.rows(), out.map.log_depth.frame(t).begin());
        std::copy(mask.col(t).data(), mask.col(t).data() + mask.rows(), out.mask.frame(t).begin());
    }
    if (theta_out) *theta_out = theta;
    if (mask_out) *mask_out = std::move(mask);
    return out;
}

Forward forward(const ToyModel& model, const ToyClip& clip) {
    const ToyParams& p = *model.params;
    Forward f;
    const LatentCode base = model.base.encode(clip.disp_norm);
    f.features = residual_features(clip.points, clip.mask, clip.disp_norm);
    f.mean = base.mean + model.offset_scale * ((p.residual_w * f.features).colwise() + p.residual_b);
    PmapDecoding dec = decode_pmap(p, model.base.grid, {model.input_scale, model.output_gain}, f.mean, &f.theta, &f.mask);
    f.inputs.pred = std::move(dec.map);
    f.inputs.pred_mask = std::move(dec.mask);
    f.inputs.gt = clip.target;
    f.inputs.gt_mask = clip.mask;
    f.inputs.disp_norm = clip.disp_norm;
    f.inputs.decoded_disp = model.base.decode(LatentCode{f.mean, Eigen::MatrixXd()});
    return f;
}

}  // namespace

CodecBundle ToyModel::bundle() const {
    const ToyBaseCodec base_codec = base;
    const std::shared_ptr<const ToyParams> p = params;
    const FrameGrid grid = base.grid;
    const DecoderGains gains{input_scale, output_gain};
    return CodecBundle(
        [base_codec](const NormalizedDisparity& x) { return base_codec.encode(x); },
        [base_codec](const LatentCode& c) { return base_codec.decode(c); },
        [p](const PointMap& pm, const ValidMask& m, const NormalizedDisparity& d) -> Eigen::MatrixXd {
            return (p->residual_w * residual_features(pm, m, d)).colwise() + p->residual_b;
        },
        [p, grid, gains](const LatentCode& c) { return decode_pmap(*p, grid, gains, c.mean); }, offset_scale);
}

ToyLoss toy_loss(const ToyModel& model, const ToyClip& clip, const LossWeights& weights) {
    const ToyParams& p = *model.params;
    Forward f = forward(model, clip);
    ToyLoss out;
    out.report = loss_vae(f.inputs, weights, true);
    const VaeGradients& g = *out.report.gradients;

    const auto frames = static_cast<Eigen::Index>(f.mean.cols());
    ToyParams grad = p;
    grad.residual_w.setZero();
    grad.residual_b.setZero();
    grad.depth_w.setZero();
    grad.depth_b.setZero();
    grad.theta_w.setZero();
    grad.theta_b = 0.0;
    grad.mask_w.setZero();
    grad.mask_b.setZero();
    Eigen::MatrixXd d_mean = Eigen::MatrixXd::Zero(f.mean.rows(), frames);

    for (Eigen::Index t = 0; t < frames; ++t) {
        const int ti = static_cast<int>(t);
        const Eigen::VectorXd g_ld = frame_vector(g.pred.log_depth.frame(ti));
        const Eigen::VectorXd g_dec = frame_vector(g.decoded_disp.frame(ti));
        const Eigen::ArrayXd m = f.mask.col(t).array();
        const Eigen::VectorXd g_logit = (frame_vector(g.pred_mask.frame(ti)).array() * m * (1.0 - m)).matrix();
        const double g_s = g.pred.theta_diag[static_cast<std::size_t>(t)] * f.theta(t);
        const Eigen::VectorXd z = f.mean.col(t) / model.input_scale;
        const double c = model.output_gain;

        grad.depth_w.noalias() += c * g_ld * z.transpose();
        grad.depth_b += c * g_ld;
        grad.mask_w.noalias() += c * g_logit * z.transpose();
        grad.mask_b += c * g_logit;
        grad.theta_w += g_s * z;
        grad.theta_b += g_s;

        d_mean.col(t) = (c * (p.depth_w.transpose() * g_ld + p.mask_w.transpose() * g_logit) + g_s * p.theta_w) /
                            model.input_scale +
                        model.base.basis.transpose() * g_dec;
    }
    grad.residual_w.noalias() = model.offset_scale * d_mean * f.features.transpose();
    grad.residual_b = model.offset_scale * d_mean.rowwise().sum();
    out.gradient = grad.flatten();
    out.report.gradients.reset();
    return out;
}

LossReport evaluate_dataset(const ToyModel& model, const std::vector<ToyClip>& data, const LossWeights& weights) {
    if (data.empty()) throw Error(ErrorCode::EmptyClip, "toy dataset is empty");
    LossReport mean;
    mean.weights = weights;
    for (const auto& clip : data) {
        const LossReport r = loss_vae(forward(model, clip).inputs, weights, false);
        mean.recon += r.recon;
        mean.normal += r.normal;
        mean.multiscale += r.multiscale;
        mean.identity += r.identity;
        mean.mask += r.mask;
        mean.pmap += r.pmap;
        mean.total += r.total;
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    mean.recon *= inv;
    mean.normal *= inv;
    mean.multiscale *= inv;
    mean.identity *= inv;
    mean.mask *= inv;
    mean.pmap *= inv;
    mean.total *= inv;
    return mean;
}

ToyFitResult toy_fit(const ToyModel& initial, const std::vector<ToyClip>& data, const ToyFitOptions& options,
                     std::uint64_t seed) {
    if (options.steps < 0 || !(options.learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "invalid toy_fit options");
    if (data.empty()) throw Error(ErrorCode::EmptyClip, "toy dataset is empty");
    ToyFitResult result{initial.clone(), {}};
    ToyModel& model = result.model;
    result.curve.push_back(evaluate_dataset(model, data, options.weights));

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch =
        options.batch_size > 0 ? std::min<std::size_t>(static_cast<std::size_t>(options.batch_size), data.size()) : data.size();
    std::size_t cursor = data.size();

    std::vector<double> params = model.params->flatten();
    for (int step = 0; step < options.steps; ++step) {
        std::vector<double> grad(params.size(), 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor == data.size()) {
                if (batch < data.size()) std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const ToyLoss l = toy_loss(model, data[order[cursor++]], options.weights);
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += l.gradient[i];
        }
        const double progress = options.steps > 1 ? static_cast<double>(step) / (options.steps - 1) : 0.0;
        const double decay = options.final_lr_fraction +
                             (1.0 - options.final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
        const double scale = decay * options.learning_rate / static_cast<double>(batch);
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= scale * grad[i];
        model.params->unflatten(params);

        const std::string where = "toy_fit diverged at step " + std::to_string(step + 1);
        LossReport r;
        try {
            r = evaluate_dataset(model, data, options.weights);
        } catch (const Error& e) {
            if (!is_numerical(e.code()) && e.code() != ErrorCode::InvalidFov) throw;
            throw Error(ErrorCode::DivergenceError, where + ": " + e.what());
        }
        if (!std::isfinite(r.total) || r.total > options.divergence_limit) throw Error(ErrorCode::DivergenceError, where);
        result.curve.push_back(std::move(r));
    }
    return result;
}

std::vector<ToyClip> make_toy_dataset(const FrameGrid& grid, int clips, int frames, std::uint64_t seed) {
    if (clips < 1 || frames < 1) throw Error(ErrorCode::InvalidConfig, "toy dataset needs clips and frames");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<ToyClip> out;
    for (int c = 0; c < clips; ++c) {
        synth::SceneSpec spec;
        spec.grid = grid;
        spec.frames = frames;
        spec.seed = seed + static_cast<std::uint64_t>(c);
        spec.intrinsics.focal = grid.diagonal() * (0.5 + 0.5 * unit(rng));
        // Floor below the camera, a sphere, sky above the horizon.
        spec.objects.push_back({synth::Plane{Vec3(0, 1.0 + 0.5 * unit(rng), 0), Vec3(0, -1, 0)}, Vec3::Zero()});
        spec.objects.push_back(
            {synth::Sphere{Vec3(-1.0 + 2.0 * unit(rng), -0.2 + 0.6 * unit(rng), 4.0 + 2.0 * unit(rng)),
                           0.8 + 0.6 * unit(rng)},
             Vec3::Zero()});
        spec.camera_path = synth::orbit_path(frames, Vec3(0, 0, 5), 5.0, -10.0 + 20.0 * unit(rng), 8.0);
        const synth::RenderResult r = synth::render(spec);
        const NormalizedSequence norm = normalize_sequence(r.points, r.mask);
        ToyClip clip;
        clip.points = norm.points;
        clip.mask = r.mask;
        clip.target = encode_decoupled(clip.points, clip.mask).map;
        clip.disp_norm = normalize_disparity(disparity_from_depth(depth_of(clip.points), clip.mask), clip.mask).values;
        out.push_back(std::move(clip));
    }
    return out;
}

ToyDemoResult run_toy_demo(std::uint64_t seed, const ToyDemoConfig& config) {
    const auto data = make_toy_dataset(config.grid, config.clips, config.frames, seed);
    const ToyModel model = ToyModel::make(config.grid, config.latent_dim, seed + 1);
    ToyDemoResult out{toy_fit(model, data, config.fit, seed + 2), 0.0};
    out.zero_offset_identity = out.fit.curve.front().identity;
    return out;
}

}  // namespace vpmap::latent
