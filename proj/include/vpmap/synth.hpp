// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vpmap/camsolve_types.hpp"
#include "vpmap/core.hpp"

namespace vpmap::synth {

struct Plane {
    Vec3 point;
    Vec3 normal;
};

struct Sphere {
    Vec3 center;
    double radius = 1.0;
};

/// Axis-aligned in world coordinates.
struct Box {
    Vec3 lo;
    Vec3 hi;
};

using Shape = std::variant<Plane, Sphere, Box>;

struct SceneObject {
    Shape shape;
    /// Non-zero velocity (world units per frame) marks a dynamic object.
    Vec3 velocity = Vec3::Zero();

    bool dynamic() const { return !velocity.isZero(0.0); }
};

struct SceneSpec {
    std::vector<SceneObject> objects;
    /// World-to-camera pose per frame.
    std::vector<PoseSE3> camera_path;
    Intrinsics intrinsics{400.0};
    FrameGrid grid{64, 48};
    int frames = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Camera looking from `eye` at `target`, image y axis aligned with world +y.
PoseSE3 look_at(const Vec3& eye, const Vec3& target);

/// Cameras on a horizontal arc around `target`, all looking at it. Angles in degrees;
/// angle 0 places the camera at target + (0, height, -radius).
std::vector<PoseSE3> orbit_path(int frames, const Vec3& target, double radius, double start_deg, double span_deg,
                                double height = 0.0);

/// Parses the line-oriented scene format documented in docs/scene-format.md.
SceneSpec parse_scene(std::istream& in);
SceneSpec parse_scene_file(const std::string& path);

struct Hit {
    double depth = 0.0;  ///< camera-space z
    int object = -1;
    Vec3 world;
    int face = 0;  ///< box slab face 0..5; 0 for planes and spheres
};

/// Nearest intersection of the ray through pixel coordinate `pixel` of `frame`.
std::optional<Hit> cast_ray(const SceneSpec& spec, int frame, const Vec2& pixel);

struct PrimitiveTag {};

struct RenderResult {
    PointMap points;
    ValidMask mask;
    DepthMap depth;
    std::vector<Intrinsics> intrinsics;
    std::vector<PoseSE3> poses;
    /// Index into SceneSpec::objects, -1 where nothing was hit.
    Field<int, PrimitiveTag> object_id;
    /// 1 where a dynamic object was hit.
    ValidMask dynamic_mask;
    std::vector<std::string> warnings;
};

/// Pixel (row v, column u) samples the ray through pixel coordinate (u, v).
RenderResult render(const SceneSpec& spec);

struct TrackSet {
    std::vector<Trajectory2D> tracks;
    std::vector<Vec3> world_points;
    std::vector<std::string> warnings;
};

/// Samples static surface points seen in frame 0 and projects them into every frame.
/// An observation is visible when the point is unoccluded and its 2x2 sampling
/// stencil lies on the same static object; visible positions get N(0, noise_sigma^2)
/// pixel noise.
TrackSet make_tracks(const SceneSpec& spec, int count, std::uint64_t seed, double noise_sigma = 0.0);

}  // namespace vpmap::synth
