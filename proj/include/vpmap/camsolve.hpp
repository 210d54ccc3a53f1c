// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/SparseCore>

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "vpmap/camsolve_types.hpp"
#include "vpmap/core.hpp"
#include "vpmap/repr.hpp"

namespace vpmap {

struct PoseSolveConfig {
    int window_len = 12;
    int overlap = 6;
    int max_iters = 100;
    /// Stop when the relative objective decrease of an accepted step falls below this.
    double convergence_tol = 1e-12;
    /// Weight of the depth component of each residual; defaults to f / median depth.
    std::optional<double> pixel_depth_weight;

    void validate() const;
};

struct FrameWindow {
    int first = 0;
    int last = 0;  ///< inclusive
};

/// Windows of window_len frames starting every (window_len - overlap) frames.
std::vector<FrameWindow> make_windows(int frames, int window_len, int overlap);

/// Unordered frame pairs (i < j) that share at least one window.
std::vector<std::pair<int, int>> window_pairs(int frames, int window_len, int overlap);

/// World point seen at `pixel` with depth `depth` by a camera with pose `pose`.
Vec3 lift(const Vec2& pixel, double depth, const Intrinsics& K, const FrameGrid& grid, const PoseSE3& pose);

/// Bilinear lookup of depth from a point map, interpolating inverse depth so that
/// planar surfaces are reproduced exactly. All four stencil pixels must be valid.
class DepthSampler {
public:
    DepthSampler(const PointMap& pmap, const ValidMask& mask);
    std::optional<double> sample(int frame, double u, double v) const;
    double median_depth() const { return median_depth_; }

private:
    DepthMap inverse_depth_;
    ValidMask mask_;
    double median_depth_ = 1.0;
};

/// One observation pair: the point lifted in frame i, re-observed in frame j.
struct PairConstraint {
    int track = 0;
    int i = 0;
    int j = 0;
    Vec3 point_in_i;  ///< camera-i coordinates
    Vec2 observed_j;
    double depth_j = 0.0;
};

struct ConstraintSet {
    std::vector<PairConstraint> pairs;
    std::size_t dropped = 0;  ///< pairs lost to invalid depth lookups
};

ConstraintSet build_constraints(const DepthSampler& sampler, const std::vector<Intrinsics>& intrinsics,
                                const FrameGrid& grid, const std::vector<Trajectory2D>& tracks,
                                const PoseSolveConfig& config, int frames);

struct ResidualSystem {
    /// Three entries per pair: du, dv, weight * dz.
    Eigen::VectorXd residuals;
    /// Columns: 6 per frame (rotation increment, translation increment), frame 0 included.
    Eigen::SparseMatrix<double> jacobian;

    double objective() const { return residuals.squaredNorm(); }
};

ResidualSystem build_residuals(const std::vector<PoseSE3>& poses, const std::vector<Intrinsics>& intrinsics,
                               const FrameGrid& grid, const ConstraintSet& constraints, double depth_weight);

/// Left-multiplicative update R <- exp(w) R, t <- t + dt for each frame's 6-vector.
std::vector<PoseSE3> apply_increment(const std::vector<PoseSE3>& poses, const Eigen::VectorXd& delta);

struct WindowStats {
    FrameWindow window;
    std::size_t pairs = 0;
    std::size_t tracks = 0;
    double rms = 0.0;
};

struct PoseSolveResult {
    std::vector<PoseSE3> poses;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    int iterations = 0;
    bool converged = false;
    bool diverged = false;
    double depth_weight = 0.0;
    std::size_t pairs = 0;
    std::size_t dropped_pairs = 0;
    std::size_t discarded_tracks = 0;
    std::vector<WindowStats> windows;
};

/// Levenberg-Marquardt over the windowed pairwise reprojection objective, starting
/// from identity poses with frame 0 held fixed.
PoseSolveResult solve_poses(const PointMap& pmap, const ValidMask& mask, const std::vector<Intrinsics>& intrinsics,
                            const std::vector<Trajectory2D>& tracks, const ValidMask* dynamic_mask,
                            const PoseSolveConfig& config = {});

struct TrajectoryError {
    double max_rotation_deg = 0.0;
    double max_translation = 0.0;
};

/// Both trajectories are re-expressed relative to their own frame 0 (the gauge)
/// before comparing rotations and camera translations frame by frame.
TrajectoryError compare_trajectories(const std::vector<PoseSE3>& estimate, const std::vector<PoseSE3>& truth);

/// Per-frame focal lengths from theta_diag.
std::vector<Intrinsics> intrinsics_from_decoupled(const DecoupledMap& dec);

}  // namespace vpmap
