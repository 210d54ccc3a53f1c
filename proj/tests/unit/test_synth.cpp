// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_support.hpp"
#include "vpmap/camsolve.hpp"
#include "vpmap/synth.hpp"

namespace vpmap {
namespace {

using testing::error_code_of;

synth::SceneSpec single(synth::Shape shape, FrameGrid g = {64, 48}, double f = 400) {
    synth::SceneSpec s;
    s.grid = g;
    s.intrinsics.focal = f;
    s.objects.push_back({shape, Vec3::Zero()});
    s.camera_path = {PoseSE3::identity()};
    return s;
}

TEST(Render, FrontoParallelPlane) {
    const auto r = synth::render(single(synth::Plane{Vec3(0, 0, 5), Vec3(0, 0, -1)}));
    for (std::size_t i = 0; i < r.depth.size(); ++i) {
        EXPECT_DOUBLE_EQ(r.depth[i], 5.0);
        EXPECT_EQ(r.mask[i], 1.0);
        EXPECT_EQ(r.points[i].z(), r.depth[i]);
    }
    EXPECT_EQ(r.intrinsics.size(), 1u);
    EXPECT_EQ(r.intrinsics[0].focal, 400.0);
    EXPECT_TRUE(r.warnings.empty());
}

TEST(Render, SphereOnAxis) {
    const auto r = synth::render(single(synth::Sphere{Vec3(0, 0, 4), 1.0}, {64, 48}, 40));
    EXPECT_DOUBLE_EQ(r.depth(0, 24, 32), 3.0);
    EXPECT_EQ(r.mask(0, 0, 0), 0.0);  // corner ray misses: sky
    EXPECT_EQ(r.object_id(0, 0, 0), -1);
    EXPECT_EQ(r.object_id(0, 24, 32), 0);
}

TEST(Render, EmptySceneWarns) {
    synth::SceneSpec s;
    s.camera_path = {PoseSE3::identity()};
    const auto r = synth::render(s);
    EXPECT_EQ(count_valid(r.mask), 0u);
    EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Render, MatchesIndependentRayCast) {
    // Oracle: direct ray-sphere quadratic, independent of the renderer.
    const Vec3 c(0.3, -0.2, 5.0);
    const double radius = 1.5;
    const auto r = synth::render(single(synth::Sphere{c, radius}, {40, 30}, 30));
    for (int v = 0; v < 30; ++v) {
        for (int u = 0; u < 40; ++u) {
            const Vec3 d((u - 20.0) / 30.0, (v - 15.0) / 30.0, 1.0);
            const double a = d.squaredNorm(), b = -2 * d.dot(c), k = c.squaredNorm() - radius * radius;
            const double disc = b * b - 4 * a * k;
            if (disc < 0) {
                EXPECT_EQ(r.mask(0, v, u), 0.0);
                continue;
            }
            ASSERT_EQ(r.mask(0, v, u), 1.0);
            const double s = (-b - std::sqrt(disc)) / (2 * a);
            EXPECT_NEAR(r.depth(0, v, u), s, 1e-12);
        }
    }
}

TEST(Render, MultiViewWorldConsistency) {
    synth::SceneSpec s = testing::orbit_scene(2, 96);
    s.camera_path[1] = s.camera_path[0] * PoseSE3{exp_so3(Vec3(0, 0.05, 0.01)), Vec3(0.2, 0.0, 0.1)};
    const auto r = synth::render(s);
    // Transform frame-1 points to world, project into frame 0, compare with frame 0's world points.
    std::size_t compared = 0;
    for (int v = 0; v < s.grid.height; ++v) {
        for (int u = 0; u < s.grid.width; ++u) {
            if (!is_valid(r.mask(1, v, u))) continue;
            const Vec3 world = s.camera_path[1].inverse().apply(r.points(1, v, u));
            const Vec3 cam0 = s.camera_path[0].apply(world);
            const auto hit = synth::cast_ray(s, 0, project(cam0, s.intrinsics, s.grid).pixel);
            if (!hit || std::abs(hit->depth - cam0.z()) > 1e-6) continue;  // occluded from frame 0
            EXPECT_LT((hit->world - world).norm(), 1e-9);
            ++compared;
        }
    }
    EXPECT_GT(compared, s.grid.pixels() / 2);
}

TEST(Render, DynamicObjectMovesAndIsMasked) {
    auto s = synth::parse_scene_file(testing::source_path("scenes/dynamic.scene"));
    const auto r = synth::render(s);
    EXPECT_GT(count_valid(r.dynamic_mask), 0u);
    for (std::size_t i = 0; i < r.mask.size(); ++i) {
        if (is_valid(r.dynamic_mask[i])) {
            EXPECT_TRUE(s.objects[r.object_id[i]].dynamic());
        }
    }
}

TEST(Render, Deterministic) {
    const auto s = testing::orbit_scene(3, 64);
    const auto a = synth::render(s), b = synth::render(s);
    EXPECT_EQ(a.depth.values(), b.depth.values());
    EXPECT_EQ(a.mask.values(), b.mask.values());
}

TEST(Tracks, DeterministicUnderSeed) {
    const auto s = testing::orbit_scene(6, 96);
    const auto a = synth::make_tracks(s, 20, 9, 0.5), b = synth::make_tracks(s, 20, 9, 0.5);
    ASSERT_EQ(a.tracks.size(), b.tracks.size());
    for (std::size_t k = 0; k < a.tracks.size(); ++k) {
        ASSERT_EQ(a.tracks[k].observations.size(), b.tracks[k].observations.size());
        for (std::size_t o = 0; o < a.tracks[k].observations.size(); ++o) {
            EXPECT_EQ(a.tracks[k].observations[o].u, b.tracks[k].observations[o].u);
            EXPECT_EQ(a.tracks[k].observations[o].v, b.tracks[k].observations[o].v);
        }
    }
    const auto c = synth::make_tracks(s, 20, 10, 0.5);
    EXPECT_NE(a.tracks[0].observations[0].u, c.tracks[0].observations[0].u);
}

TEST(Tracks, NoiselessReprojectThroughGroundTruth) {
    const auto s = testing::orbit_scene(8, 96);
    const auto ts = synth::make_tracks(s, 25, 2);
    ASSERT_EQ(ts.tracks.size(), 25u);
    for (std::size_t k = 0; k < ts.tracks.size(); ++k) {
        ts.tracks[k].validate(s.grid);
        for (const auto& o : ts.tracks[k].observations) {
            if (!o.visible) continue;
            const auto p = project(s.camera_path[o.frame].apply(ts.world_points[k]), s.intrinsics, s.grid);
            EXPECT_LT((p.pixel - Vec2(o.u, o.v)).norm(), 1e-9);
        }
    }
}

TEST(Tracks, OcclusionFlagsMatchAnalyticCheck) {
    // A sphere hovering in front of a wall; the camera slides sideways so the
    // sphere sweeps across wall points.
    synth::SceneSpec s;
    s.grid = {80, 60};
    s.intrinsics.focal = 70;
    s.frames = 10;
    const Vec3 c(0, 0, 4), wall(0, 0, 8);
    s.objects.push_back({synth::Plane{wall, Vec3(0, 0, -1)}, Vec3::Zero()});
    s.objects.push_back({synth::Sphere{c, 1.0}, Vec3::Zero()});
    for (int t = 0; t < s.frames; ++t) s.camera_path.push_back({Mat3::Identity(), Vec3(1.5 - 0.3 * t, 0, 0)});
    const auto ts = synth::make_tracks(s, 60, 4);
    std::size_t hidden = 0;
    for (std::size_t k = 0; k < ts.tracks.size(); ++k) {
        const Vec3& x = ts.world_points[k];
        if (std::abs(x.z() - 8.0) > 1e-9) continue;  // sphere points cannot be hidden
        for (const auto& o : ts.tracks[k].observations) {
            // Segment from camera centre to the point against the sphere.
            const Vec3 eye = s.camera_path[o.frame].center();
            const Vec3 d = x - eye;
            const double a = d.squaredNorm(), b = 2 * d.dot(eye - c), q = (eye - c).squaredNorm() - 1.0;
            const double disc = b * b - 4 * a * q;
            bool blocked = false;
            if (disc > 0) {
                const double s0 = (-b - std::sqrt(disc)) / (2 * a);
                blocked = s0 > 0 && s0 < 1;
            }
            const auto p = project(s.camera_path[o.frame].apply(x), s.intrinsics, s.grid).pixel;
            const bool inside = p.x() >= 0 && p.y() >= 0 && p.x() <= 79 && p.y() <= 59;
            if (blocked && inside) {
                EXPECT_FALSE(o.visible) << "track " << k << " frame " << o.frame;
                ++hidden;
            }
        }
    }
    EXPECT_GT(hidden, 0u);
}

TEST(Tracks, NeverOnDynamicObjects) {
    auto s = synth::parse_scene_file(testing::source_path("scenes/dynamic.scene"));
    const auto ts = synth::make_tracks(s, 50, 1);
    for (std::size_t k = 0; k < ts.tracks.size(); ++k) {
        const auto hit = synth::cast_ray(s, 0, Vec2(ts.tracks[k].observations[0].u, ts.tracks[k].observations[0].v));
        ASSERT_TRUE(hit);
        EXPECT_FALSE(s.objects[hit->object].dynamic());
    }
}

TEST(Tracks, FewerCandidatesWarn) {
    auto s = single(synth::Sphere{Vec3(0, 0, 40), 0.5}, {16, 12}, 10);
    const auto ts = synth::make_tracks(s, 50, 1);
    EXPECT_LT(ts.tracks.size(), 50u);
    EXPECT_FALSE(ts.warnings.empty());
}

TEST(Orbit, LooksAtTarget) {
    const Vec3 target(0, 0, 5);
    const auto path = synth::orbit_path(7, target, 5, -15, 30, -0.3);
    ASSERT_EQ(path.size(), 7u);
    for (const auto& p : path) {
        EXPECT_TRUE(p.is_valid());
        const Vec3 t = p.apply(target);
        EXPECT_NEAR(t.x(), 0, 1e-12);
        EXPECT_NEAR(t.y(), 0, 1e-12);
        EXPECT_GT(t.z(), 0);
    }
    const auto zero = synth::orbit_path(1, target, 5, 0, 0, 0);
    EXPECT_LT((zero[0].center() - Vec3(0, 0, 0)).norm(), 1e-12);
}

TEST(SceneFormat, ParsesAllKeys) {
    std::istringstream in(R"(# comment
grid 32 24
focal 30   # trailing comment
frames 3
seed 11
plane 0 1 0  0 -1 0
sphere 0 0 5 1 velocity 0.1 0 0
box -1 -1 6  1 1 7
orbit target 0 0 5 radius 4 start -5 span 10 height 0
)");
    const auto s = synth::parse_scene(in);
    EXPECT_EQ(s.grid, (FrameGrid{32, 24}));
    EXPECT_EQ(s.intrinsics.focal, 30.0);
    EXPECT_EQ(s.frames, 3);
    EXPECT_EQ(s.seed, 11u);
    ASSERT_EQ(s.objects.size(), 3u);
    EXPECT_TRUE(s.objects[1].dynamic());
    EXPECT_FALSE(s.objects[2].dynamic());
    EXPECT_EQ(s.camera_path.size(), 3u);
}

TEST(SceneFormat, Errors) {
    const auto parse = [](const std::string& text) {
        return error_code_of([&] {
            std::istringstream in(text);
            synth::parse_scene(in);
        });
    };
    EXPECT_EQ(parse("cylinder 0 0 0 1\n"), ErrorCode::InvalidInput);
    EXPECT_EQ(parse("grid 32\n"), ErrorCode::InvalidInput);
    EXPECT_EQ(parse("focal 30 40\n"), ErrorCode::InvalidInput);
    EXPECT_EQ(parse("sphere 0 0 5 1 spin 1\n"), ErrorCode::InvalidInput);
    EXPECT_EQ(parse("sphere 0 0 5 1 velocity 1 0 0 9\n"), ErrorCode::InvalidInput);
    EXPECT_EQ(parse("sphere 0 0 5 -1\n"), ErrorCode::InvalidConfig);
    EXPECT_EQ(parse("frames 0\n"), ErrorCode::InvalidConfig);
    EXPECT_EQ(parse("frames 2\npose 1 0 0 0 1 0 0 0 1 0 0 0\n"), ErrorCode::InvalidConfig);
    EXPECT_EQ(parse("frames 1\norbit radius 3\npose 1 0 0 0 1 0 0 0 1 0 0 0\n"), ErrorCode::InvalidInput);
    EXPECT_EQ(error_code_of([] { synth::parse_scene_file("/nonexistent/x.scene"); }), ErrorCode::IoError);
}

TEST(SceneFormat, ShippedScenesParse) {
    for (const char* name : {"scenes/orbit.scene", "scenes/sphere.scene", "scenes/dynamic.scene"}) {
        EXPECT_NO_THROW(synth::parse_scene_file(testing::source_path(name))) << name;
    }
}

}  // namespace
}  // namespace vpmap
