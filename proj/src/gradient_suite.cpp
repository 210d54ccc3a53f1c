// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

// Random kink-free instances for every loss term, flattened for grad_check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "vpmap/loss.hpp"

namespace vpmap {

namespace {

constexpr int kFrames = 2;
constexpr double kKinkMargin = 1e-3;
constexpr int kMaxRejections = 1000;

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double signed_magnitude(double lo, double hi) {
        const double m = uniform(lo, hi);
        return uniform(0.0, 1.0) < 0.5 ? -m : m;
    }
    Vec3 camera_facing_unit() {
        Vec3 n(uniform(-1, 1), uniform(-1, 1), -uniform(0.2, 1.0));
        return n.normalized();
    }

private:
    std::mt19937_64 rng_;
};

ValidMask random_mask(Sampler& s, const FrameGrid& grid, double valid_fraction) {
    ValidMask m(kFrames, grid, 0.0);
    for (auto& x : m.values()) x = s.uniform(0, 1) < valid_fraction ? 1.0 : 0.0;
    m[0] = 1.0;
    m[m.size() - 1] = 1.0;
    return m;
}

DecoupledMap random_decoupled(Sampler& s, const FrameGrid& grid) {
    DecoupledMap d;
    d.log_depth = LogDepthMap(kFrames, grid, 0.0);
    for (auto& x : d.log_depth.values()) x = s.uniform(-0.5, 1.0);
    for (int t = 0; t < kFrames; ++t) d.theta_diag.push_back(s.uniform(0.6, 1.4));
    return d;
}

DecoupledMap perturbed(Sampler& s, const DecoupledMap& gt, double lo, double hi) {
    DecoupledMap p = gt;
    for (auto& x : p.log_depth.values()) x += s.signed_magnitude(lo, hi);
    for (auto& th : p.theta_diag) th += s.signed_magnitude(lo, hi);
    return p;
}

/// Smallest |residual| of the multi-scale term over patches with more than one valid pixel.
double min_patch_residual(const DepthMap& pred, const DepthMap& gt, const ValidMask& mask,
                          std::span<const int> scales) {
    double worst = std::numeric_limits<double>::infinity();
    const FrameGrid& g = pred.grid();
    for (int alpha : scales) {
        for (int t = 0; t < pred.frames(); ++t) {
            for (int pr = 0; pr < alpha; ++pr) {
                for (int pc = 0; pc < alpha; ++pc) {
                    double ps = 0, gs = 0;
                    int n = 0;
                    std::vector<std::pair<int, int>> members;
                    for (int v = 0; v < g.height; ++v) {
                        if (v * alpha / g.height != pr) continue;
                        for (int u = 0; u < g.width; ++u) {
                            if (u * alpha / g.width != pc || !is_valid(mask(t, v, u))) continue;
                            ps += pred(t, v, u);
                            gs += gt(t, v, u);
                            ++n;
                            members.emplace_back(v, u);
                        }
                    }
                    if (n < 2) continue;
                    for (auto [v, u] : members) {
                        const double r = (pred(t, v, u) - ps / n) - (gt(t, v, u) - gs / n);
                        worst = std::min(worst, std::abs(r));
                    }
                }
            }
        }
    }
    return worst;
}

double min_log_gap(const DecoupledMap& a, const DecoupledMap& b, const ValidMask& mask) {
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (is_valid(mask[i])) worst = std::min(worst, std::abs(a.log_depth[i] - b.log_depth[i]));
    }
    for (std::size_t t = 0; t < a.theta_diag.size(); ++t) {
        worst = std::min(worst, std::abs(a.theta_diag[t] - b.theta_diag[t]));
    }
    return worst;
}

std::vector<int> scales_for(int size) {
    std::vector<int> s;
    for (int a = 1; a <= size; a *= 2) s.push_back(a);
    return s;
}

// Flattening helpers: [log_depth..., theta...]
std::vector<double> flatten(const DecoupledMap& d) {
    std::vector<double> x = d.log_depth.values();
    x.insert(x.end(), d.theta_diag.begin(), d.theta_diag.end());
    return x;
}

DecoupledMap unflatten(std::span<const double> x, const DecoupledMap& like) {
    DecoupledMap d = like;
    const std::size_t n = d.log_depth.size();
    std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n), d.log_depth.values().begin());
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(n), x.end(), d.theta_diag.begin());
    return d;
}

void record(SuiteEntry& entry, const GradCheckResult& r) {
    ++entry.instances;
    if (!r.passed) ++entry.failures;
    if (entry.instances == 1 || r.max_rel_error > entry.worst_rel_error) {
        entry.worst_rel_error = r.max_rel_error;
        entry.worst = r;
    }
}

}  // namespace

std::vector<SuiteEntry> run_gradient_suite(std::uint64_t seed, int instances, int size,
                                           const GradCheckOptions& options) {
    if (size < 3 || instances < 1) throw Error(ErrorCode::InvalidConfig, "suite needs size >= 3 and instances >= 1");
    Sampler s(seed);
    const FrameGrid grid{size, size};
    const std::vector<int> scales = scales_for(size);

    const auto named = [](const char* name) {
        SuiteEntry e;
        e.loss = name;
        return e;
    };
    SuiteEntry recon = named("recon"), normal = named("normal"), ms = named("multiscale"),
               identity = named("identity"), mask = named("mask"), vae = named("vae");

    for (int k = 0; k < instances; ++k) {
        {
            const ValidMask m = random_mask(s, grid, 0.8);
            const DecoupledMap gt = random_decoupled(s, grid);
            const DecoupledMap pred = perturbed(s, gt, 0.01, 0.5);
            const auto analytic = loss_recon(pred, gt, m);
            const auto fn = [&](std::span<const double> x) { return loss_recon(unflatten(x, pred), gt, m).value; };
            record(recon, grad_check(fn, flatten(pred), flatten(analytic.gradient), options));
        }
        {
            const ValidMask m = random_mask(s, grid, 0.8);
            NormalMap pred(kFrames, grid), gt(kFrames, grid);
            for (std::size_t i = 0; i < m.size(); ++i) {
                pred.normals[i] = s.camera_facing_unit();
                gt.normals[i] = s.camera_facing_unit();
                pred.defined[i] = gt.defined[i] = 1;
            }
            const auto analytic = loss_normal(pred, gt, m);
            std::vector<double> x, g;
            for (std::size_t i = 0; i < m.size(); ++i) {
                for (int c = 0; c < 3; ++c) {
                    x.push_back(pred.normals[i][c]);
                    g.push_back(analytic.gradient[i][c]);
                }
            }
            const auto fn = [&](std::span<const double> xs) {
                NormalMap p = pred;
                for (std::size_t i = 0; i < m.size(); ++i) p.normals[i] = Vec3(xs[3 * i], xs[3 * i + 1], xs[3 * i + 2]);
                return loss_normal(p, gt, m).value;
            };
            record(normal, grad_check(fn, x, g, options));
        }
        {
            ValidMask m;
            DepthMap pred, gt;
            for (int attempt = 0;; ++attempt) {
                if (attempt == kMaxRejections) throw Error(ErrorCode::InvalidConfig, "could not sample a kink-free instance");
                m = random_mask(s, grid, 0.85);
                pred = DepthMap(kFrames, grid);
                gt = DepthMap(kFrames, grid);
                for (std::size_t i = 0; i < m.size(); ++i) {
                    gt[i] = s.uniform(0.5, 3.0);
                    pred[i] = s.uniform(0.5, 3.0);
                }
                if (min_patch_residual(pred, gt, m, scales) > kKinkMargin) break;
            }
            const auto analytic = loss_multiscale(pred, gt, m, scales);
            const auto fn = [&](std::span<const double> x) {
                DepthMap p = pred;
                std::copy(x.begin(), x.end(), p.values().begin());
                return loss_multiscale(p, gt, m, scales).value;
            };
            record(ms, grad_check(fn, pred.values(), analytic.gradient.values(), options));
        }
        {
            const ValidMask m = random_mask(s, grid, 0.8);
            NormalizedDisparity target(kFrames, grid), decoded(kFrames, grid);
            for (std::size_t i = 0; i < m.size(); ++i) {
                target[i] = s.uniform(-1, 1);
                decoded[i] = s.uniform(-1, 1);
            }
            const auto analytic = loss_identity(target, decoded, m);
            const auto fn = [&](std::span<const double> x) {
                NormalizedDisparity d = decoded;
                std::copy(x.begin(), x.end(), d.values().begin());
                return loss_identity(target, d, m).value;
            };
            record(identity, grad_check(fn, decoded.values(), analytic.gradient.values(), options));
        }
        {
            const ValidMask gt = random_mask(s, grid, 0.7);
            ValidMask pred(kFrames, grid);
            for (auto& x : pred.values()) x = s.uniform(0, 1);
            const auto analytic = loss_mask(pred, gt);
            const auto fn = [&](std::span<const double> x) {
                ValidMask p = pred;
                std::copy(x.begin(), x.end(), p.values().begin());
                return loss_mask(p, gt).value;
            };
            record(mask, grad_check(fn, pred.values(), analytic.gradient.values(), options));
        }
        {
            VaeLossInputs in;
            LossWeights w;
            w.ms_scales = scales;
            w.lambda_n = 0.7;
            w.lambda_mask = 1.3;
            for (int attempt = 0;; ++attempt) {
                if (attempt == kMaxRejections) throw Error(ErrorCode::InvalidConfig, "could not sample a kink-free instance");
                in.gt_mask = random_mask(s, grid, 0.9);
                in.gt = random_decoupled(s, grid);
                in.pred = perturbed(s, in.gt, 0.01, 0.3);
                if (min_log_gap(in.pred, in.gt, in.gt_mask) <= kKinkMargin) continue;
                const DepthMap pz = depth_of(decode_decoupled(in.pred));
                const DepthMap gz = depth_of(decode_decoupled(in.gt));
                if (min_patch_residual(pz, gz, in.gt_mask, scales) > kKinkMargin) break;
            }
            in.pred_mask = ValidMask(kFrames, grid);
            for (auto& x : in.pred_mask.values()) x = s.uniform(0, 1);
            in.disp_norm = NormalizedDisparity(kFrames, grid);
            in.decoded_disp = NormalizedDisparity(kFrames, grid);
            for (std::size_t i = 0; i < in.disp_norm.size(); ++i) {
                in.disp_norm[i] = s.uniform(-1, 1);
                in.decoded_disp[i] = s.uniform(-1, 1);
            }
            const LossReport report = loss_vae(in, w);
            const VaeGradients& g = *report.gradients;

            std::vector<double> x = flatten(in.pred);
            std::vector<double> grad = flatten(g.pred);
            x.insert(x.end(), in.pred_mask.values().begin(), in.pred_mask.values().end());
            grad.insert(grad.end(), g.pred_mask.values().begin(), g.pred_mask.values().end());
            x.insert(x.end(), in.decoded_disp.values().begin(), in.decoded_disp.values().end());
            grad.insert(grad.end(), g.decoded_disp.values().begin(), g.decoded_disp.values().end());

            const std::size_t n_dec = in.pred.log_depth.size() + in.pred.theta_diag.size();
            const std::size_t n_pix = in.pred_mask.size();
            const auto fn = [&](std::span<const double> xs) {
                VaeLossInputs probe = in;
                probe.pred = unflatten(xs.subspan(0, n_dec), in.pred);
                std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(n_dec), n_pix, probe.pred_mask.values().begin());
                std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(n_dec + n_pix), n_pix,
                            probe.decoded_disp.values().begin());
                return loss_vae(probe, w, false).total;
            };
            record(vae, grad_check(fn, x, grad, options));
        }
    }
    return {recon, normal, ms, identity, mask, vae};
}

}  // namespace vpmap
