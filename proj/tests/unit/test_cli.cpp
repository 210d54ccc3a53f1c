// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "test_support.hpp"
#include "vpmap/cli.hpp"
#include "vpmap/io.hpp"

namespace vpmap::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::path(::testing::TempDir()) /
               ("vpmap_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    int vpmap(std::vector<std::string> args) {
        args.insert(args.begin(), "vpmap");
        std::ostringstream out, err;
        const int code = run(args, out, err);
        last_err_ = err.str();
        return code;
    }

    static Json report(const std::string& p) {
        std::ifstream in(p);
        return Json::parse(in);
    }

    std::string synth_sphere(const std::string& name = "sphere.gpm") {
        const std::string out = path(name);
        EXPECT_EQ(vpmap({"synth", "--scene", testing::source_path("scenes/sphere.scene"), "--out", out}), kExitOk)
            << last_err_;
        return out;
    }

    fs::path dir_;
    std::string last_err_;
};

TEST_F(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(vpmap({}), kExitInput);
    EXPECT_EQ(vpmap({"frobnicate"}), kExitInput);
    EXPECT_EQ(vpmap({"eval-points", "--pred", "x"}), kExitInput);
    EXPECT_EQ(vpmap({"convert", "--in", "a", "--to", "jpeg", "--out", "b"}), kExitInput);
    EXPECT_EQ(vpmap({"--help"}), kExitOk);
    EXPECT_EQ(vpmap({"--version"}), kExitOk);
}

TEST_F(Cli, InputFileErrorsExitTwo) {
    EXPECT_EQ(vpmap({"eval-points", "--pred", path("missing.gpm"), "--gt", path("missing.gpm"), "--report",
                     path("r.json")}),
              kExitInput);
    std::ofstream(path("notes.txt")) << "hello world, not a container";
    EXPECT_EQ(vpmap({"eval-points", "--pred", path("notes.txt"), "--gt", path("notes.txt"), "--report",
                     path("r.json")}),
              kExitInput);
    EXPECT_NE(last_err_.find("NotGpm"), std::string::npos) << last_err_;

    const std::string good = synth_sphere();
    auto bytes = io::read_bytes(good);
    bytes.resize(bytes.size() / 2);
    io::write_bytes(path("cut.gpm"), bytes);
    EXPECT_EQ(vpmap({"eval-points", "--pred", path("cut.gpm"), "--gt", good, "--report", path("r.json")}),
              kExitInput);
    EXPECT_NE(last_err_.find("CorruptFile"), std::string::npos) << last_err_;
    EXPECT_FALSE(fs::exists(path("r.json")));
}

TEST_F(Cli, NumericalFailureExitsThree) {
    const std::string gt = synth_sphere();
    io::Container c = io::read_container(gt);
    PointMap zero = io::get_points(c, "points");
    for (auto& p : zero.values()) p.setZero();
    io::put_points(c, "points", zero);
    io::write_container(path("zero.gpm"), c);
    EXPECT_EQ(vpmap({"eval-points", "--pred", path("zero.gpm"), "--gt", gt, "--report", path("r.json")}),
              kExitNumerical);
    EXPECT_NE(last_err_.find("DegeneratePrediction"), std::string::npos) << last_err_;
}

TEST_F(Cli, SynthWritesReservedTensors) {
    const std::string out = synth_sphere();
    const io::Container c = io::read_container(out);
    for (const char* name : {"points", "mask", "depth", "disparity", "theta_diag", "poses", "intrinsics", "rgb"}) {
        EXPECT_NE(c.find(name), nullptr) << name;
    }
    EXPECT_EQ(c.at("points").dims, (std::vector<std::uint64_t>{1, 96, 128, 3}));
}

TEST_F(Cli, EvalIdenticalFilesIsPerfect) {
    const std::string gt = synth_sphere();
    ASSERT_EQ(vpmap({"eval-points", "--pred", gt, "--gt", gt, "--align", "scale", "--report", path("p.json")}), kExitOk);
    const Json p = report(path("p.json"));
    EXPECT_EQ(p["results"]["rel_p"].get<double>(), 0.0);
    EXPECT_EQ(p["results"]["delta_p"].get<double>(), 100.0);
    EXPECT_EQ(p["config"]["inlier_threshold"].get<double>(), 0.25);
    EXPECT_EQ(p["schema_version"].get<int>(), kReportSchemaVersion);
    EXPECT_EQ(p["inputs"]["gt"]["sha256"].get<std::string>().size(), 64u);

    ASSERT_EQ(vpmap({"eval-depth", "--pred", gt, "--gt", gt, "--align", "scale-shift", "--report", path("d.json")}),
              kExitOk);
    const Json d = report(path("d.json"));
    EXPECT_NEAR(d["results"]["rel_d"].get<double>(), 0.0, 1e-9);
    EXPECT_EQ(d["results"]["delta_d"].get<double>(), 100.0);
    EXPECT_EQ(d["config"]["inlier_threshold"].get<double>(), 1.25);
}

TEST_F(Cli, ConvertRoundTripPreservesGeometry) {
    const std::string gt = synth_sphere();
    for (const char* to : {"decoupled", "cuboid"}) {
        const std::string enc = path(std::string(to) + ".gpm"), dec = path(std::string(to) + "_points.gpm");
        ASSERT_EQ(vpmap({"convert", "--in", gt, "--to", to, "--out", enc}), kExitOk) << last_err_;
        EXPECT_EQ(io::read_container(enc).find("points"), nullptr) << to;
        ASSERT_EQ(vpmap({"convert", "--in", enc, "--to", "points", "--out", dec}), kExitOk) << last_err_;
        ASSERT_EQ(vpmap({"eval-points", "--pred", dec, "--gt", gt, "--align", "none", "--report", path("r.json")}),
                  kExitOk);
        EXPECT_LT(report(path("r.json"))["results"]["rel_p"].get<double>(), 1e-6) << to;
    }
    ASSERT_EQ(vpmap({"convert", "--in", gt, "--to", "disparity", "--out", path("disp.gpm")}), kExitOk);
    const auto disp = io::read_container(path("disp.gpm"));
    EXPECT_NE(disp.find("disparity_norm"), nullptr);
}

TEST_F(Cli, ReportsAreDeterministicAndInputsUntouched) {
    const std::string gt = synth_sphere();
    const auto before = io::sha256_hex(io::read_bytes(gt));
    for (const char* name : {"a.json", "b.json"}) {
        ASSERT_EQ(vpmap({"eval-points", "--pred", gt, "--gt", gt, "--report", path(name)}), kExitOk);
    }
    EXPECT_EQ(io::read_bytes(path("a.json")), io::read_bytes(path("b.json")));
    ASSERT_EQ(vpmap({"convert", "--in", gt, "--to", "cuboid", "--out", path("c.gpm")}), kExitOk);
    EXPECT_EQ(io::sha256_hex(io::read_bytes(gt)), before);

    // Re-rendering is bit-identical too.
    synth_sphere("again.gpm");
    EXPECT_EQ(io::read_bytes(path("again.gpm")), io::read_bytes(gt));
}

TEST_F(Cli, SolvePoseEndToEnd) {
    const std::string scene = testing::source_path("scenes/orbit.scene");
    ASSERT_EQ(vpmap({"synth", "--scene", scene, "--out", path("orbit.gpm"), "--tracks", path("tracks.csv"),
                     "--track-count", "50"}),
              kExitOk)
        << last_err_;
    ASSERT_EQ(vpmap({"solve-pose", "--pmap", path("orbit.gpm"), "--tracks", path("tracks.csv"), "--gt",
                     path("orbit.gpm"), "--window", "12", "--overlap", "6", "--out", path("poses.json"), "--csv",
                     path("poses.csv")}),
              kExitOk)
        << last_err_;
    const Json r = report(path("poses.json"));
    EXPECT_LT(r["results"]["ground_truth"]["max_rotation_deg"].get<double>(), 0.1);
    EXPECT_LT(r["results"]["ground_truth"]["max_translation_rel"].get<double>(), 1e-3);
    EXPECT_EQ(r["results"]["poses"].size(), 20u);
    EXPECT_EQ(r["results"]["windows"].size(), 3u);
    EXPECT_FALSE(r["results"]["diverged"].get<bool>());
    const auto& q0 = r["results"]["poses"][0]["quaternion_wxyz"];
    EXPECT_EQ(q0[0].get<double>(), 1.0);
    std::ifstream csv(path("poses.csv"));
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "frame,qw,qx,qy,qz,tx,ty,tz");
}

TEST_F(Cli, SolvePoseWithTooFewTracksExitsThree) {
    ASSERT_EQ(vpmap({"synth", "--scene", testing::source_path("scenes/dynamic.scene"), "--out", path("d.gpm"),
                     "--tracks", path("t.csv"), "--track-count", "2"}),
              kExitOk);
    EXPECT_EQ(vpmap({"solve-pose", "--pmap", path("d.gpm"), "--tracks", path("t.csv"), "--out", path("o.json")}),
              kExitNumerical);
    EXPECT_NE(last_err_.find("UnderConstrained"), std::string::npos) << last_err_;
}

TEST_F(Cli, LossCheckAndLatentDemo) {
    ASSERT_EQ(vpmap({"loss-check", "--seed", "3", "--instances", "2", "--report", path("l.json")}), kExitOk);
    const Json l = report(path("l.json"));
    EXPECT_TRUE(l["results"]["passed"].get<bool>());
    EXPECT_GE(l["results"]["losses"].size(), 5u);

    ASSERT_EQ(vpmap({"latent-demo", "--seed", "0", "--steps", "5", "--report", path("t.json")}), kExitOk);
    const Json t = report(path("t.json"));
    EXPECT_EQ(t["results"]["curve"].size(), 6u);
    EXPECT_LT(t["results"]["pmap_ratio"].get<double>(), 1.0);
}

}  // namespace
}  // namespace vpmap::cli
