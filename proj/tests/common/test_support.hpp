// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded generators shared by the unit and acceptance tests.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "vpmap/core.hpp"
#include "vpmap/synth.hpp"

namespace vpmap::testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

    Vec3 vec3(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }

    FrameGrid grid(int lo, int hi) { return {integer(lo, hi), integer(lo, hi)}; }

    /// Points strictly in front of the camera.
    PointMap points(int frames, const FrameGrid& g, double zmin = 0.5, double zmax = 20.0) {
        PointMap p(frames, g);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double z = uniform(zmin, zmax);
            p[i] = Vec3(uniform(-2.0, 2.0) * z, uniform(-2.0, 2.0) * z, z);
        }
        return p;
    }

    /// Binary mask with at least one valid pixel in every frame.
    ValidMask mask(int frames, const FrameGrid& g, double p_valid = 0.8) {
        ValidMask m(frames, g, 0.0);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = coin(p_valid) ? 1.0 : 0.0;
        for (int t = 0; t < frames; ++t) m(t, integer(0, g.height - 1), integer(0, g.width - 1)) = 1.0;
        return m;
    }

    Mat3 rotation(double max_angle = 3.0) {
        Vec3 axis = vec3(-1.0, 1.0);
        if (axis.norm() < 1e-6) axis = Vec3::UnitX();
        return exp_so3(axis.normalized() * uniform(0.0, max_angle));
    }

    PoseSE3 pose(double max_angle = 3.0, double max_t = 2.0) { return {rotation(max_angle), vec3(-max_t, max_t)}; }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

/// Same shape, exact ray-cast geometry, for a known focal length.
inline PointMap pinhole_points(const DepthMap& depth, double focal) {
    const FrameGrid& g = depth.grid();
    PointMap p(depth.frames(), g);
    for (int t = 0; t < depth.frames(); ++t) {
        for (int v = 0; v < g.height; ++v) {
            for (int u = 0; u < g.width; ++u) {
                const double z = depth(t, v, u);
                p(t, v, u) = Vec3((u - 0.5 * g.width) * z / focal, (v - 0.5 * g.height) * z / focal, z);
            }
        }
    }
    return p;
}

/// The orbit used by the pose checks: floor, back wall and two boxes.
inline synth::SceneSpec orbit_scene(int frames = 20, int width = 256) {
    synth::SceneSpec s;
    s.grid = {width, width * 3 / 4};
    s.intrinsics.focal = 0.9 * width;
    s.frames = frames;
    s.objects.push_back({synth::Plane{Vec3(0, 1, 0), Vec3(0, -1, 0)}, Vec3::Zero()});
    s.objects.push_back({synth::Plane{Vec3(0, 0, 9), Vec3(0, 0, -1)}, Vec3::Zero()});
    s.objects.push_back({synth::Box{Vec3(-1, 0, 3), Vec3(0, 1, 4)}, Vec3::Zero()});
    s.objects.push_back({synth::Box{Vec3(0.8, -0.5, 4.5), Vec3(1.6, 1, 5.5)}, Vec3::Zero()});
    s.camera_path = synth::orbit_path(frames, Vec3(0, 0, 5), 5.0, -15.0, 30.0, -0.3);
    return s;
}

/// Runs `fn` and returns the code of the vpmap::Error it throws, or nullopt.
template <class Fn>
std::optional<ErrorCode> error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

#ifdef VPMAP_SOURCE_DIR
inline std::string source_path(const std::string& rel) { return std::string(VPMAP_SOURCE_DIR) + "/" + rel; }
#endif

}  // namespace vpmap::testing
