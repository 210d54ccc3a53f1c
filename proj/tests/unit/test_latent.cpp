// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "vpmap/latent.hpp"

namespace vpmap::latent {
namespace {

using testing::error_code_of;

const FrameGrid kGrid{6, 5};

struct Sample {
    PointMap points;
    ValidMask mask;
    NormalizedDisparity disp;
};

Sample random_sample(testing::Gen& gen, int frames = 2) {
    Sample s{gen.points(frames, kGrid, 1.0, 4.0), gen.mask(frames, kGrid, 0.9), {}};
    s.disp = normalize_disparity(disparity_from_depth(depth_of(s.points), s.mask), s.mask).values;
    return s;
}

// Independent reconstruction error of the projection x -> B B^T x.
double projection_mse(const Eigen::MatrixXd& basis, const NormalizedDisparity& x) {
    double sum = 0.0;
    for (int t = 0; t < x.frames(); ++t) {
        Eigen::VectorXd v(x.grid().pixels());
        for (std::size_t i = 0; i < x.grid().pixels(); ++i) v[static_cast<Eigen::Index>(i)] = x.frame(t)[i];
        sum += (v - basis * (basis.transpose() * v)).squaredNorm();
    }
    return sum / static_cast<double>(x.size());
}

CodecBundle bundle_with_residual(const ToyBaseCodec& base, ResidualEncoder residual, double offset_scale = 0.1) {
    return CodecBundle([base](const NormalizedDisparity& x) { return base.encode(x); },
                       [base](const LatentCode& c) { return base.decode(c); }, std::move(residual),
                       [](const LatentCode&) -> PmapDecoding { return {}; }, offset_scale);
}

TEST(ToyBaseCodec, BasisIsOrthonormal) {
    const auto base = ToyBaseCodec::make(kGrid, 7, 3);
    EXPECT_EQ(base.latent_dim(), 7);
    EXPECT_LT((base.basis.transpose() * base.basis - Eigen::MatrixXd::Identity(7, 7)).norm(), 1e-12);
    const auto again = ToyBaseCodec::make(kGrid, 7, 3);
    EXPECT_EQ(base.basis, again.basis);
}

TEST(ToyBaseCodec, VarianceIsNonNegative) {
    testing::Gen gen(71);
    const auto base = ToyBaseCodec::make(kGrid, 7, 3);
    const auto code = base.encode(random_sample(gen).disp);
    EXPECT_EQ(code.mean.cols(), 2);
    EXPECT_GE(code.variance.minCoeff(), 0.0);
    EXPECT_TRUE(code.mean.allFinite());
}

TEST(Encode, ZeroResidualIsBitIdentical) {
    testing::Gen gen(72);
    const ToyModel model = ToyModel::make(kGrid, 8, 4);
    const CodecBundle bundle = model.bundle();
    for (int i = 0; i < 10; ++i) {
        const Sample s = random_sample(gen);
        const LatentCode base = bundle.base_encoder()(s.disp);
        const LatentCode composed = encode(bundle, s.points, s.mask, s.disp);
        EXPECT_TRUE((composed.mean.array() == base.mean.array()).all());
        EXPECT_TRUE((composed.variance.array() == base.variance.array()).all());
    }
}

TEST(Encode, VariancePassThroughAndMeanOffset) {
    testing::Gen gen(73);
    const auto base = ToyBaseCodec::make(kGrid, 5, 8);
    for (int i = 0; i < 20; ++i) {
        const Eigen::MatrixXd r = Eigen::MatrixXd::Random(5, 2) * gen.uniform(0.1, 100);
        const double scale = gen.uniform(0.0, 2.0);
        const auto bundle = bundle_with_residual(
            base, [r](const PointMap&, const ValidMask&, const NormalizedDisparity&) { return r; }, scale);
        const Sample s = random_sample(gen);
        const LatentCode b = base.encode(s.disp);
        const LatentCode c = encode(bundle, s.points, s.mask, s.disp);
        EXPECT_TRUE((c.variance.array() == b.variance.array()).all());
        EXPECT_LT((c.mean - (b.mean + scale * r)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Encode, WrongOffsetShapeIsShapeError) {
    testing::Gen gen(74);
    const auto base = ToyBaseCodec::make(kGrid, 5, 8);
    const auto bundle = bundle_with_residual(
        base, [](const PointMap&, const ValidMask&, const NormalizedDisparity&) { return Eigen::MatrixXd::Zero(4, 2); });
    const Sample s = random_sample(gen);
    EXPECT_EQ(error_code_of([&] { encode(bundle, s.points, s.mask, s.disp); }), ErrorCode::ShapeError);
}

TEST(IdentityProbe, ZeroOffsetEqualsBaseReconstructionError) {
    testing::Gen gen(75);
    const ToyModel model = ToyModel::make(kGrid, 9, 5);
    for (int i = 0; i < 10; ++i) {
        const Sample s = random_sample(gen);
        const double probe = identity_probe(model.bundle(), s.points, s.mask, s.disp);
        EXPECT_NEAR(probe, projection_mse(model.base.basis, s.disp), 1e-12);
        EXPECT_GT(probe, 0.0);
    }
}

TEST(IdentityProbe, LosslessBaseGivesZero) {
    testing::Gen gen(76);
    const auto full = ToyBaseCodec::make(kGrid, static_cast<int>(kGrid.pixels()), 6);
    const auto bundle = bundle_with_residual(full, [](const PointMap&, const ValidMask&, const NormalizedDisparity& d) {
        return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d.grid().pixels()), d.frames()).eval();
    });
    const Sample s = random_sample(gen);
    EXPECT_NEAR(identity_probe(bundle, s.points, s.mask, s.disp), 0.0, 1e-12);
}

TEST(IdentityProbe, MonotoneInOffsetScale) {
    testing::Gen gen(77);
    const auto base = ToyBaseCodec::make(kGrid, 6, 9);
    const Eigen::MatrixXd r = Eigen::MatrixXd::Random(6, 2);
    const Sample s = random_sample(gen);
    double prev = -1.0;
    for (double scale = 0.0; scale <= 2.0; scale += 0.05) {
        const auto bundle = bundle_with_residual(
            base, [r](const PointMap&, const ValidMask&, const NormalizedDisparity&) { return r; }, scale);
        const double p = identity_probe(bundle, s.points, s.mask, s.disp);
        EXPECT_GE(p, prev);
        prev = p;
    }
}

TEST(ToyParams, FlattenRoundTrip) {
    const ToyModel model = ToyModel::make(kGrid, 4, 1);
    std::vector<double> flat = model.params->flatten();
    EXPECT_EQ(flat.size(), model.params->size());
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = static_cast<double>(i);
    ToyParams p = *model.params;
    p.unflatten(flat);
    EXPECT_EQ(p.flatten(), flat);
    EXPECT_EQ(error_code_of([&] { p.unflatten(std::vector<double>(3)); }), ErrorCode::ShapeError);
}

TEST(ToyModel, CloneIsIndependent) {
    const ToyModel a = ToyModel::make(kGrid, 4, 2);
    const ToyModel b = a.clone();
    b.params->theta_b += 1.0;
    EXPECT_NE(a.params->theta_b, b.params->theta_b);
}

TEST(ToyDataset, ClipsAreNormalized) {
    const auto data = make_toy_dataset({12, 10}, 3, 2, 5);
    ASSERT_EQ(data.size(), 3u);
    for (const auto& clip : data) {
        std::vector<double> z;
        for (std::size_t i = 0; i < clip.points.size(); ++i) {
            if (is_valid(clip.mask[i])) z.push_back(clip.points[i].z());
        }
        std::sort(z.begin(), z.end());
        EXPECT_NEAR(z[(z.size() - 1) / 2], 1.0, 1e-12);
        EXPECT_LT(z.size(), clip.points.size());  // some sky
        EXPECT_EQ(clip.target.frames(), 2);
    }
}

TEST(ToyLoss, GradientMatchesFiniteDifferences) {
    const FrameGrid g{8, 8};
    const auto data = make_toy_dataset(g, 2, 2, 11);
    ToyModel model = ToyModel::make(g, 4, 12);
    // Move off the zero-initialized residual so every parameter group is exercised.
    testing::Gen gen(78);
    std::vector<double> flat = model.params->flatten();
    for (auto& x : flat) x += gen.uniform(-0.05, 0.05);
    model.params->unflatten(flat);
    const LossWeights weights{1.0, 1.0, {1, 2, 4, 8}};
    for (const auto& clip : data) {
        const ToyLoss l = toy_loss(model, clip, weights);
        const auto f = [&](std::span<const double> x) {
            ToyModel m = model.clone();
            m.params->unflatten(x);
            return toy_loss(m, clip, weights).report.total;
        };
        const auto r = grad_check(f, flat, l.gradient);
        EXPECT_TRUE(r.passed) << "worst " << r.max_rel_error << " at " << r.worst_index;
    }
}

TEST(ToyFit, ZeroStepsLeavesModelUnchanged) {
    const auto data = make_toy_dataset({8, 8}, 2, 2, 1);
    const ToyModel model = ToyModel::make({8, 8}, 4, 2);
    ToyFitOptions opt;
    opt.weights.ms_scales = {1, 2, 4, 8};
    opt.steps = 0;
    const auto r = toy_fit(model, data, opt, 3);
    EXPECT_EQ(r.curve.size(), 1u);
    EXPECT_EQ(r.model.params->flatten(), model.params->flatten());
}

TEST(ToyFit, DeterministicCurveAndFrozenBase) {
    const auto data = make_toy_dataset({8, 8}, 3, 2, 1);
    const ToyModel model = ToyModel::make({8, 8}, 4, 2);
    ToyFitOptions opt;
    opt.weights.ms_scales = {1, 2, 4, 8};
    opt.steps = 20;
    opt.learning_rate = 0.1;
    opt.batch_size = 2;
    const auto a = toy_fit(model, data, opt, 3);
    const auto b = toy_fit(model, data, opt, 3);
    ASSERT_EQ(a.curve.size(), 21u);
    for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].total, b.curve[i].total);
    EXPECT_EQ(a.model.base.basis, model.base.basis);
    EXPECT_LT(a.curve.back().total, a.curve.front().total);
    // The input model is not modified.
    EXPECT_EQ(model.params->residual_w.norm(), 0.0);
}

TEST(ToyFit, HugeStepDiverges) {
    const auto data = make_toy_dataset({8, 8}, 2, 2, 1);
    ToyFitOptions opt;
    opt.weights.ms_scales = {1, 2, 4, 8};
    opt.steps = 50;
    opt.learning_rate = 1e4;
    try {
        toy_fit(ToyModel::make({8, 8}, 4, 2), data, opt, 3);
        FAIL() << "expected DivergenceError";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DivergenceError);
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    }
}

}  // namespace
}  // namespace vpmap::latent
