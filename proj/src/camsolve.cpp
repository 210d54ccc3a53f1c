// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "vpmap/camsolve.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

namespace vpmap {

void Trajectory2D::validate(const FrameGrid& grid) const {
    int prev = -1;
    for (const auto& obs : observations) {
        if (obs.frame <= prev) {
            throw Error(ErrorCode::InvalidInput, "track " + std::to_string(id) + ": frame indices must strictly increase");
        }
        prev = obs.frame;
        if (obs.visible && (obs.u < 0.0 || obs.v < 0.0 || obs.u > grid.width - 1 || obs.v > grid.height - 1)) {
            throw Error(ErrorCode::InvalidInput, "track " + std::to_string(id) + ": visible observation outside the grid");
        }
    }
}

void PoseSolveConfig::validate() const {
    if (window_len < 2 || overlap <= 0 || overlap >= window_len) {
        throw Error(ErrorCode::InvalidConfig, "window settings need 0 < overlap < window_len");
    }
    if (max_iters < 0 || !(convergence_tol >= 0.0)) throw Error(ErrorCode::InvalidConfig, "invalid iteration limits");
    if (pixel_depth_weight && !(*pixel_depth_weight >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "pixel_depth_weight must be non-negative");
    }
}

std::vector<FrameWindow> make_windows(int frames, int window_len, int overlap) {
    std::vector<FrameWindow> out;
    if (frames < 2) return out;
    const int stride = window_len - overlap;
    for (int first = 0;; first += stride) {
        const int last = std::min(first + window_len, frames) - 1;
        out.push_back({first, last});
        if (last == frames - 1) break;
    }
    return out;
}

std::vector<std::pair<int, int>> window_pairs(int frames, int window_len, int overlap) {
    std::set<std::pair<int, int>> pairs;
    for (const auto& w : make_windows(frames, window_len, overlap)) {
        for (int i = w.first; i <= w.last; ++i) {
            for (int j = i + 1; j <= w.last; ++j) pairs.emplace(i, j);
        }
    }
    return {pairs.begin(), pairs.end()};
}

Vec3 lift(const Vec2& pixel, double depth, const Intrinsics& K, const FrameGrid& grid, const PoseSE3& pose) {
    if (!pose.is_valid(1e-6)) throw Error(ErrorCode::InvalidInput, "pose is not a rigid transform");
    return pose.inverse().apply(unproject(pixel, depth, K, grid));
}

DepthSampler::DepthSampler(const PointMap& pmap, const ValidMask& mask)
    : inverse_depth_(pmap.frames(), pmap.grid(), 0.0), mask_(binarize(mask)) {
    if (!pmap.same_shape(mask)) throw Error(ErrorCode::ShapeError, "point map / mask shape mismatch");
    std::vector<double> depths;
    for (std::size_t i = 0; i < pmap.size(); ++i) {
        if (mask_[i] == 0.0) continue;
        const double z = pmap[i].z();
        if (!(z > 0.0) || !std::isfinite(z)) {
            mask_[i] = 0.0;
            continue;
        }
        inverse_depth_[i] = 1.0 / z;
        depths.push_back(z);
    }
    if (!depths.empty()) {
        const auto mid = depths.begin() + static_cast<std::ptrdiff_t>((depths.size() - 1) / 2);
        std::nth_element(depths.begin(), mid, depths.end());
        median_depth_ = *mid;
    }
}

std::optional<double> DepthSampler::sample(int frame, double u, double v) const {
    const FrameGrid& g = inverse_depth_.grid();
    if (frame < 0 || frame >= inverse_depth_.frames() || g.width < 2 || g.height < 2) return std::nullopt;
    if (!(u >= 0.0 && v >= 0.0 && u <= g.width - 1 && v <= g.height - 1)) return std::nullopt;
    const int u0 = std::min(static_cast<int>(std::floor(u)), g.width - 2);
    const int v0 = std::min(static_cast<int>(std::floor(v)), g.height - 2);
    const double fu = u - u0;
    const double fv = v - v0;
    for (int dv = 0; dv <= 1; ++dv) {
        for (int du = 0; du <= 1; ++du) {
            if (mask_(frame, v0 + dv, u0 + du) == 0.0) return std::nullopt;
        }
    }
    const auto& d = inverse_depth_;
    const double inv = (1 - fv) * ((1 - fu) * d(frame, v0, u0) + fu * d(frame, v0, u0 + 1)) +
                       fv * ((1 - fu) * d(frame, v0 + 1, u0) + fu * d(frame, v0 + 1, u0 + 1));
    if (!(inv > 0.0)) return std::nullopt;
    return 1.0 / inv;
}

ConstraintSet build_constraints(const DepthSampler& sampler, const std::vector<Intrinsics>& intrinsics,
                                const FrameGrid& grid, const std::vector<Trajectory2D>& tracks,
                                const PoseSolveConfig& config, int frames) {
    ConstraintSet out;
    const auto pairs = window_pairs(frames, config.window_len, config.overlap);
    std::set<std::pair<int, int>> allowed(pairs.begin(), pairs.end());

    for (std::size_t k = 0; k < tracks.size(); ++k) {
        const auto& obs = tracks[k].observations;
        for (std::size_t a = 0; a < obs.size(); ++a) {
            for (std::size_t b = 0; b < obs.size(); ++b) {
                if (a == b || !obs[a].visible || !obs[b].visible) continue;
                const int i = obs[a].frame;
                const int j = obs[b].frame;
                if (i < 0 || j < 0 || i >= frames || j >= frames) continue;
                if (!allowed.contains({std::min(i, j), std::max(i, j)})) continue;
                const auto di = sampler.sample(i, obs[a].u, obs[a].v);
                const auto dj = sampler.sample(j, obs[b].u, obs[b].v);
                if (!di || !dj) {
                    ++out.dropped;
                    continue;
                }
                PairConstraint c;
                c.track = static_cast<int>(k);
                c.i = i;
                c.j = j;
                c.point_in_i = unproject(Vec2(obs[a].u, obs[a].v), *di, intrinsics[i], grid);
                c.observed_j = Vec2(obs[b].u, obs[b].v);
                c.depth_j = *dj;
                out.pairs.push_back(c);
            }
        }
    }
    return out;
}

ResidualSystem build_residuals(const std::vector<PoseSE3>& poses, const std::vector<Intrinsics>& intrinsics,
                               const FrameGrid& grid, const ConstraintSet& constraints, double depth_weight) {
    const auto n_pairs = static_cast<Eigen::Index>(constraints.pairs.size());
    const auto n_cols = static_cast<Eigen::Index>(6 * poses.size());
    ResidualSystem sys;
    sys.residuals.resize(3 * n_pairs);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n_pairs) * 36);
    const double cx = 0.5 * grid.width;
    const double cy = 0.5 * grid.height;

    for (Eigen::Index p = 0; p < n_pairs; ++p) {
        const PairConstraint& c = constraints.pairs[static_cast<std::size_t>(p)];
        const PoseSE3& wi = poses[c.i];
        const PoseSE3& wj = poses[c.j];
        const Vec3 a = c.point_in_i - wi.translation;
        const Vec3 world = wi.rotation.transpose() * a;
        const Vec3 rotated = wj.rotation * world;
        const Vec3 xj = rotated + wj.translation;
        const double f = intrinsics[c.j].focal;
        const double z = std::max(xj.z(), 1e-9);

        sys.residuals(3 * p) = cx + f * xj.x() / z - c.observed_j.x();
        sys.residuals(3 * p + 1) = cy + f * xj.y() / z - c.observed_j.y();
        sys.residuals(3 * p + 2) = depth_weight * (xj.z() - c.depth_j);

        Eigen::Matrix3d d_proj;
        d_proj << f / z, 0.0, -f * xj.x() / (z * z),
                  0.0, f / z, -f * xj.y() / (z * z),
                  0.0, 0.0, depth_weight;

        const Mat3 rel = wj.rotation * wi.rotation.transpose();
        Eigen::Matrix<double, 3, 6> d_j;
        d_j.leftCols<3>() = -skew(rotated);
        d_j.rightCols<3>() = Mat3::Identity();
        Eigen::Matrix<double, 3, 6> d_i;
        d_i.leftCols<3>() = rel * skew(a);
        d_i.rightCols<3>() = -rel;

        const Eigen::Matrix<double, 3, 6> jj = d_proj * d_j;
        const Eigen::Matrix<double, 3, 6> ji = d_proj * d_i;
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 6; ++k) {
                triplets.emplace_back(3 * p + r, 6 * c.j + k, jj(r, k));
                triplets.emplace_back(3 * p + r, 6 * c.i + k, ji(r, k));
            }
        }
    }
    sys.jacobian.resize(3 * n_pairs, n_cols);
    sys.jacobian.setFromTriplets(triplets.begin(), triplets.end());
    return sys;
}

std::vector<PoseSE3> apply_increment(const std::vector<PoseSE3>& poses, const Eigen::VectorXd& delta) {
    if (delta.size() != static_cast<Eigen::Index>(6 * poses.size())) {
        throw Error(ErrorCode::ShapeError, "increment length must be 6 per frame");
    }
    std::vector<PoseSE3> out = poses;
    for (std::size_t t = 0; t < poses.size(); ++t) {
        const auto d = delta.segment<6>(static_cast<Eigen::Index>(6 * t));
        out[t].rotation = exp_so3(d.head<3>()) * poses[t].rotation;
        out[t].translation = poses[t].translation + d.tail<3>();
    }
    return out;
}

TrajectoryError compare_trajectories(const std::vector<PoseSE3>& estimate, const std::vector<PoseSE3>& truth) {
    if (estimate.size() != truth.size() || estimate.empty()) {
        throw Error(ErrorCode::ShapeError, "trajectories differ in length or are empty");
    }
    TrajectoryError err;
    const PoseSE3 e0 = estimate.front().inverse();
    const PoseSE3 g0 = truth.front().inverse();
    for (std::size_t t = 0; t < estimate.size(); ++t) {
        const PoseSE3 e = estimate[t] * e0;
        const PoseSE3 g = truth[t] * g0;
        err.max_rotation_deg =
            std::max(err.max_rotation_deg, rotation_angle_between(e.rotation, g.rotation) * 180.0 / std::numbers::pi);
        err.max_translation = std::max(err.max_translation, (e.translation - g.translation).norm());
    }
    return err;
}

std::vector<Intrinsics> intrinsics_from_decoupled(const DecoupledMap& dec) {
    if (static_cast<int>(dec.theta_diag.size()) != dec.frames()) {
        throw Error(ErrorCode::ShapeError, "theta_diag length differs from frame count");
    }
    std::vector<Intrinsics> out;
    out.reserve(dec.theta_diag.size());
    for (double theta : dec.theta_diag) out.push_back(Intrinsics{focal_from_theta(theta, dec.grid())});
    return out;
}

namespace {

bool touches_dynamic(const Trajectory2D& track, const ValidMask& dyn) {
    const FrameGrid& g = dyn.grid();
    for (const auto& obs : track.observations) {
        if (!obs.visible || obs.frame < 0 || obs.frame >= dyn.frames()) continue;
        const int u = std::clamp(static_cast<int>(std::lround(obs.u)), 0, g.width - 1);
        const int v = std::clamp(static_cast<int>(std::lround(obs.v)), 0, g.height - 1);
        if (is_valid(dyn(obs.frame, v, u))) return true;
    }
    return false;
}

double median_focal(const std::vector<Intrinsics>& intrinsics) {
    std::vector<double> f;
    for (const auto& k : intrinsics) f.push_back(k.focal);
    const auto mid = f.begin() + static_cast<std::ptrdiff_t>((f.size() - 1) / 2);
    std::nth_element(f.begin(), mid, f.end());
    return *mid;
}

std::vector<WindowStats> window_stats(const std::vector<FrameWindow>& windows, const ConstraintSet& cs,
                                      const Eigen::VectorXd& residuals) {
    std::vector<WindowStats> out;
    for (const auto& w : windows) {
        WindowStats s;
        s.window = w;
        std::set<int> tracks;
        double sq = 0.0;
        for (std::size_t p = 0; p < cs.pairs.size(); ++p) {
            const auto& c = cs.pairs[p];
            if (c.i < w.first || c.i > w.last || c.j < w.first || c.j > w.last) continue;
            ++s.pairs;
            tracks.insert(c.track);
            sq += residuals.segment<3>(static_cast<Eigen::Index>(3 * p)).squaredNorm();
        }
        s.tracks = tracks.size();
        s.rms = s.pairs ? std::sqrt(sq / (3.0 * static_cast<double>(s.pairs))) : 0.0;
        out.push_back(s);
    }
    return out;
}

constexpr std::size_t kMinTracksPerWindow = 3;

}  // namespace

PoseSolveResult solve_poses(const PointMap& pmap, const ValidMask& mask, const std::vector<Intrinsics>& intrinsics,
                            const std::vector<Trajectory2D>& tracks, const ValidMask* dynamic_mask,
                            const PoseSolveConfig& config) {
    config.validate();
    if (!pmap.same_shape(mask)) throw Error(ErrorCode::ShapeError, "point map / mask shape mismatch");
    if (dynamic_mask && !pmap.same_shape(*dynamic_mask)) throw Error(ErrorCode::ShapeError, "dynamic mask shape mismatch");
    const int frames = pmap.frames();
    if (frames < 1) throw Error(ErrorCode::EmptyClip, "pose solving needs at least one frame");
    if (static_cast<int>(intrinsics.size()) != frames) throw Error(ErrorCode::ShapeError, "one intrinsics entry per frame required");
    for (const auto& k : intrinsics) k.validate();

    PoseSolveResult result;
    result.poses.assign(frames, PoseSE3::identity());
    if (frames == 1) {
        result.converged = true;
        return result;
    }

    std::vector<Trajectory2D> kept;
    for (const auto& t : tracks) {
        t.validate(pmap.grid());
        if (dynamic_mask && touches_dynamic(t, *dynamic_mask)) {
            ++result.discarded_tracks;
            continue;
        }
        kept.push_back(t);
    }

    const DepthSampler sampler(pmap, mask);
    result.depth_weight = config.pixel_depth_weight.value_or(median_focal(intrinsics) / sampler.median_depth());
    const ConstraintSet cs = build_constraints(sampler, intrinsics, pmap.grid(), kept, config, frames);
    result.pairs = cs.pairs.size();
    result.dropped_pairs = cs.dropped;

    const auto windows = make_windows(frames, config.window_len, config.overlap);
    {
        const Eigen::VectorXd none = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * cs.pairs.size()));
        for (const auto& s : window_stats(windows, cs, none)) {
            if (s.tracks < kMinTracksPerWindow) {
                throw Error(ErrorCode::UnderConstrained,
                            "window [" + std::to_string(s.window.first) + ", " + std::to_string(s.window.last) +
                                "] has " + std::to_string(s.tracks) + " usable tracks");
            }
        }
    }

    const Eigen::Index n_free = 6 * (frames - 1);
    std::vector<PoseSE3> poses = result.poses;
    ResidualSystem sys = build_residuals(poses, intrinsics, pmap.grid(), cs, result.depth_weight);
    double cost = sys.objective();
    result.initial_objective = cost;
    double mu = -1.0;
    double nu = 2.0;

    for (int iter = 0; iter < config.max_iters; ++iter) {
        if (cost == 0.0) {
            result.converged = true;
            break;
        }
        const Eigen::SparseMatrix<double> j_free = sys.jacobian.rightCols(n_free);
        const Eigen::MatrixXd normal = Eigen::MatrixXd(j_free.transpose() * j_free);
        const Eigen::VectorXd grad = j_free.transpose() * sys.residuals;
        const Eigen::VectorXd diag = normal.diagonal().cwiseMax(1e-12);
        if (mu < 0.0) mu = 1e-4;

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = normal;
            damped.diagonal() += mu * diag;
            const Eigen::VectorXd step = damped.ldlt().solve(-grad);
            Eigen::VectorXd full = Eigen::VectorXd::Zero(6 * frames);
            full.tail(n_free) = step;
            const auto trial = apply_increment(poses, full);
            ResidualSystem trial_sys = build_residuals(trial, intrinsics, pmap.grid(), cs, result.depth_weight);
            const double trial_cost = trial_sys.objective();
            if (!std::isfinite(trial_cost)) {
                result.diverged = true;
                break;
            }
            if (trial_cost < cost) {
                const double predicted = step.dot(mu * diag.cwiseProduct(step) - grad);
                const double rho = predicted > 0.0 ? (cost - trial_cost) / predicted : 1.0;
                mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
                nu = 2.0;
                const double rel = (cost - trial_cost) / cost;
                poses = trial;
                sys = std::move(trial_sys);
                cost = trial_cost;
                accepted = true;
                result.iterations = iter + 1;
                if (rel < config.convergence_tol) result.converged = true;
            } else {
                mu *= nu;
                nu *= 2.0;
                if (mu > 1e16) break;
            }
        }
        if (result.diverged) break;
        if (!accepted) {
            // No descent direction left at machine precision.
            result.converged = true;
            break;
        }
        if (result.converged) break;
    }

    result.poses = poses;
    result.final_objective = cost;
    result.windows = window_stats(windows, cs, sys.residuals);
    return result;
}

}  // namespace vpmap
