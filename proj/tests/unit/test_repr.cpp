// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "vpmap/repr.hpp"

namespace vpmap {
namespace {

using testing::error_code_of;

DisparityMap row(std::initializer_list<double> v) {
    DisparityMap d(1, {static_cast<int>(v.size()), 1});
    std::copy(v.begin(), v.end(), d.values().begin());
    return d;
}

TEST(NormalizeDisparity, AffineToUnitRange) {
    const auto d = row({1, 2, 3});
    const auto r = normalize_disparity(d, ValidMask(1, d.grid(), 1.0));
    EXPECT_FALSE(r.degenerate_range);
    EXPECT_EQ(r.values.values(), (std::vector<double>{-1, 0, 1}));
}

TEST(NormalizeDisparity, ConstantIsFlaggedAndZero) {
    const auto d = row({5, 5, 5});
    const auto r = normalize_disparity(d, ValidMask(1, d.grid(), 1.0));
    EXPECT_TRUE(r.degenerate_range);
    EXPECT_EQ(r.values.values(), (std::vector<double>{0, 0, 0}));
}

TEST(NormalizeDisparity, InvalidPixelsAreZeroAndIgnored) {
    const auto d = row({100, 1, 2, 3});
    ValidMask m(1, d.grid(), 1.0);
    m[0] = 0.0;
    const auto r = normalize_disparity(d, m);
    EXPECT_EQ(r.values.values(), (std::vector<double>{0, -1, 0, 1}));
}

TEST(NormalizeDisparity, ExtremaAreClipWide) {
    DisparityMap d(2, {2, 1});
    d.values() = {1, 2, 3, 5};
    const auto r = normalize_disparity(d, ValidMask(2, d.grid(), 1.0));
    EXPECT_EQ(r.values.values(), (std::vector<double>{-1, -0.5, 0, 1}));
}

TEST(NormalizeDisparity, EmptyFrameIsRejected) {
    DisparityMap d(2, {2, 1}, 1.0);
    ValidMask m(2, d.grid(), 1.0);
    m(1, 0, 0) = 0.0;
    m(1, 0, 1) = 0.0;
    EXPECT_EQ(error_code_of([&] { normalize_disparity(d, m); }), ErrorCode::EmptyMask);
}

TEST(NormalizeDisparityProperty, ScaleInvariantAndBounded) {
    testing::Gen gen(2);
    for (int trial = 0; trial < 200; ++trial) {
        const FrameGrid g = gen.grid(1, 8);
        const int frames = gen.integer(1, 3);
        DisparityMap d(frames, g);
        for (auto& x : d.values()) x = gen.uniform(0.01, 10.0);
        const ValidMask m = gen.mask(frames, g, 0.7);
        const auto a = normalize_disparity(d, m);
        DisparityMap scaled = d;
        const double s = gen.uniform(1e-3, 1e3);
        for (auto& x : scaled.values()) x *= s;
        const auto b = normalize_disparity(scaled, m);
        ASSERT_EQ(a.degenerate_range, b.degenerate_range);
        double lo = 2, hi = -2;
        for (std::size_t i = 0; i < d.size(); ++i) {
            EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
            if (is_valid(m[i])) {
                lo = std::min(lo, a.values[i]);
                hi = std::max(hi, a.values[i]);
            } else {
                EXPECT_EQ(a.values[i], 0.0);
            }
        }
        if (!a.degenerate_range) {
            EXPECT_NEAR(lo, -1.0, 1e-12);
            EXPECT_NEAR(hi, 1.0, 1e-12);
        }
    }
}

PointMap single(const Vec3& p) { return PointMap(1, {1, 1}, p); }

TEST(Cuboid, Examples) {
    const ValidMask m(1, {1, 1}, 1.0);
    EXPECT_TRUE(encode_cuboid(single({0, 0, 1}), m)[0].isApprox(Vec3(0, 0, 0)));
    EXPECT_LT((encode_cuboid(single({2, -2, 2}), m)[0] - Vec3(1, -1, std::log(2.0))).norm(), 1e-15);
    EXPECT_TRUE(decode_cuboid(CuboidMap(1, {1, 1}, Vec3(1, -1, std::log(2.0))))[0].isApprox(Vec3(2, -2, 2)));
    EXPECT_EQ(decode_cuboid(CuboidMap(1, {1, 1}, Vec3(0, 0, 0)))[0], Vec3(0, 0, 1));
}

TEST(Cuboid, Errors) {
    const ValidMask m(1, {1, 1}, 1.0);
    EXPECT_EQ(error_code_of([&] { encode_cuboid(single({0, 0, 0}), m); }), ErrorCode::InvalidPoint);
    EXPECT_EQ(error_code_of([&] { encode_cuboid(single({1, 0, -1}), m); }), ErrorCode::InvalidPoint);
    // Invalid pixels are not inspected.
    EXPECT_NO_THROW(encode_cuboid(single({0, 0, -1}), ValidMask(1, {1, 1}, 0.0)));
    const double nan = std::nan("");
    EXPECT_EQ(error_code_of([&] { decode_cuboid(CuboidMap(1, {1, 1}, Vec3(0, nan, 0))); }),
              ErrorCode::InvalidInput);
}

TEST(CuboidProperty, RoundTripThousandPoints) {
    testing::Gen gen(4);
    const PointMap p = gen.points(1, {40, 25}, 0.1, 50.0);
    const ValidMask m(1, p.grid(), 1.0);
    const PointMap back = decode_cuboid(encode_cuboid(p, m));
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_LT((back[i] - p[i]).norm(), 1e-12 * std::max(1.0, p[i].norm()));
    }
}

TEST(CuboidProperty, OffMaskIsZero) {
    testing::Gen gen(5);
    const PointMap p = gen.points(2, {7, 5});
    const ValidMask m = gen.mask(2, p.grid(), 0.5);
    const CuboidMap c = encode_cuboid(p, m);
    const PointMap d = decode_cuboid(c, m);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (is_valid(m[i])) continue;
        EXPECT_EQ(c[i], Vec3::Zero());
        EXPECT_EQ(d[i], Vec3::Zero());
    }
}

TEST(Decoupled, ThetaOfVgaAtF400IsOne) {
    EXPECT_DOUBLE_EQ(theta_from_focal(400.0, {640, 480}), 1.0);
    EXPECT_DOUBLE_EQ(focal_from_theta(1.0, {640, 480}), 400.0);
    EXPECT_DOUBLE_EQ(focal_from_theta(1.0, {1280, 960}), 800.0);
}

TEST(Decoupled, CenterPixelDecodesToOpticalAxis) {
    DecoupledMap d;
    d.theta_diag = {1.0};
    d.log_depth = LogDepthMap(1, {640, 480}, 0.0);
    EXPECT_EQ(decode_decoupled(d)(0, 240, 320), Vec3(0, 0, 1));
}

TEST(Decoupled, NonPositiveThetaIsInvalidFov) {
    DecoupledMap d;
    d.log_depth = LogDepthMap(1, {4, 4}, 0.0);
    for (const double theta : {0.0, -1.0}) {
        d.theta_diag = {theta};
        EXPECT_EQ(error_code_of([&] { decode_decoupled(d); }), ErrorCode::InvalidFov);
    }
}

TEST(Decoupled, RecoversKnownFocal) {
    testing::Gen gen(6);
    DepthMap depth(2, {96, 64});
    for (auto& z : depth.values()) z = gen.uniform(0.5, 30.0);
    const PointMap p = testing::pinhole_points(depth, 512.7);
    const auto enc = encode_decoupled(p, ValidMask(2, p.grid(), 1.0));
    ASSERT_EQ(enc.intrinsics.size(), 2u);
    for (const auto& k : enc.intrinsics) EXPECT_NEAR(k.focal / 512.7, 1.0, 1e-6);
    for (int t = 0; t < 2; ++t) EXPECT_NEAR(enc.map.theta_diag[t], theta_from_focal(512.7, p.grid()), 1e-9);
}

TEST(Decoupled, CenterOnlyMaskIsUnobservable) {
    const FrameGrid g{8, 6};
    PointMap p(1, g, Vec3(0, 0, 2));
    ValidMask m(1, g, 0.0);
    m(0, 3, 4) = 1.0;
    EXPECT_EQ(error_code_of([&] { encode_decoupled(p, m); }), ErrorCode::FocalUnobservable);
}

TEST(DecoupledProperty, RoundTripOnValidPixels) {
    testing::Gen gen(8);
    for (int trial = 0; trial < 50; ++trial) {
        const FrameGrid g = gen.grid(3, 20);
        const int frames = gen.integer(1, 3);
        DepthMap depth(frames, g);
        for (auto& z : depth.values()) z = gen.uniform(0.1, 100.0);
        const PointMap p = testing::pinhole_points(depth, gen.uniform(5.0, 200.0));
        ValidMask m = gen.mask(frames, g, 0.8);
        // Two distinct rays per frame keep the focal observable.
        for (int t = 0; t < frames; ++t) {
            m(t, 0, 0) = 1.0;
            m(t, g.height - 1, g.width - 1) = 1.0;
        }
        const auto enc = encode_decoupled(p, m);
        const PointMap back = decode_decoupled(enc.map, m);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!is_valid(m[i])) {
                EXPECT_EQ(back[i], Vec3::Zero());
                continue;
            }
            EXPECT_LT((back[i] - p[i]).norm(), 1e-9 * p[i].norm());
        }
    }
}

TEST(DecoupledProperty, ThetaInvariantUnderUniformRescale) {
    testing::Gen gen(9);
    for (int i = 0; i < 100; ++i) {
        const FrameGrid g = gen.grid(1, 500);
        const double f = gen.uniform(1.0, 1000.0);
        const int s = gen.integer(2, 5);
        EXPECT_NEAR(theta_from_focal(f, g), theta_from_focal(s * f, {s * g.width, s * g.height}), 1e-12);
    }
}

TEST(DecoupledBackward, MatchesFiniteDifferences) {
    testing::Gen gen(10);
    DecoupledMap d;
    d.theta_diag = {0.9, 1.3};
    d.log_depth = LogDepthMap(2, {5, 4});
    for (auto& x : d.log_depth.values()) x = gen.uniform(-1, 1);
    PointMap w(2, d.grid());
    for (auto& x : w.values()) x = gen.vec3(-1, 1);
    const auto objective = [&](const DecoupledMap& q) {
        const PointMap p = decode_decoupled(q);
        double acc = 0;
        for (std::size_t i = 0; i < p.size(); ++i) acc += w[i].dot(p[i]);
        return acc;
    };
    const DecoupledMap g = decode_decoupled_backward(d, w);
    const double h = 1e-6;
    for (std::size_t i = 0; i < d.log_depth.size(); ++i) {
        DecoupledMap a = d, b = d;
        a.log_depth[i] += h;
        b.log_depth[i] -= h;
        EXPECT_NEAR(g.log_depth[i], (objective(a) - objective(b)) / (2 * h), 1e-6);
    }
    for (int t = 0; t < 2; ++t) {
        DecoupledMap a = d, b = d;
        a.theta_diag[t] += h;
        b.theta_diag[t] -= h;
        EXPECT_NEAR(g.theta_diag[t], (objective(a) - objective(b)) / (2 * h), 1e-6);
    }
}

TEST(NormalizeSequence, ConstantDepthFour) {
    const FrameGrid g{5, 3};
    PointMap p(2, g, Vec3(1, -2, 4));
    const auto n = normalize_sequence(p, ValidMask(2, g, 1.0));
    EXPECT_DOUBLE_EQ(n.scale, 4.0);
    for (const auto& x : n.points.values()) EXPECT_TRUE(x.isApprox(Vec3(0.25, -0.5, 1.0)));
}

TEST(NormalizeSequence, EmptyClip) {
    const FrameGrid g{2, 2};
    EXPECT_EQ(error_code_of([&] { normalize_sequence(PointMap(1, g, Vec3(0, 0, 1)), ValidMask(1, g, 0.0)); }),
              ErrorCode::EmptyClip);
}

TEST(NormalizeSequenceProperty, IdempotentAndInvertible) {
    testing::Gen gen(12);
    for (int trial = 0; trial < 100; ++trial) {
        const FrameGrid g = gen.grid(1, 10);
        const int frames = gen.integer(1, 4);
        const PointMap p = gen.points(frames, g, 0.1, 50.0);
        const ValidMask m = gen.mask(frames, g, 0.6);
        const auto once = normalize_sequence(p, m);
        const auto twice = normalize_sequence(once.points, m);
        EXPECT_NEAR(twice.scale, 1.0, 1e-12);
        const PointMap back = denormalize_sequence(once.points, once.scale);
        std::vector<double> z;
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_LT((back[i] - p[i]).norm(), 1e-12 * p[i].norm());
            // Ratios between coordinates survive.
            EXPECT_NEAR(once.points[i].x() / once.points[i].z(), p[i].x() / p[i].z(), 1e-12);
            if (is_valid(m[i])) z.push_back(once.points[i].z());
        }
        // Oracle: the lower median of valid depths becomes one.
        std::sort(z.begin(), z.end());
        EXPECT_NEAR(z[(z.size() - 1) / 2], 1.0, 1e-12);
    }
}

}  // namespace
}  // namespace vpmap
