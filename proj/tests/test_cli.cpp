// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/image.hpp>
#include <dofsplat/scene_io.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace dofsplat;

namespace {

int
run(const std::string &args) {
    const std::string cmd = std::string(DOFSPLAT_CLI) + " " + args + " > /dev/null 2>&1";
    const int status      = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string
slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fs::path &
dataset() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "dofsplat_cli_data";
        fs::remove_all(d);
        const int code = run("synth --size 16 --views 2 --gaussians 200 --seed 3 --out " +
                             d.string());
        EXPECT_EQ(code, 0);
        return d;
    }();
    return dir;
}

} // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("train"), 2);
    EXPECT_EQ(run("train /nonexistent/config.json"), 2);
    EXPECT_EQ(run("bogus"), 2);
    EXPECT_EQ(run("render"), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, SynthWritesADataset) {
    const fs::path &d = dataset();
    for (const char *f : {"points.ply", "views.json", "ground_truth.dsp", "config.json",
                          "images/view_000.png", "images/view_001_aif.png"}) {
        EXPECT_TRUE(fs::exists(d / f)) << f;
    }
    EXPECT_EQ(loadViews(d / "views.json").size(), 2u);
}

TEST(Cli, ZeroApertureEqualsAllInFocusByteForByte) {
    const fs::path &d = dataset();
    const std::string ckpt = (d / "ground_truth.dsp").string();
    ASSERT_EQ(run("render " + ckpt + " --view 1 --Q 0 -o " + (d / "q0.png").string()), 0);
    ASSERT_EQ(run("render " + ckpt + " --view 1 --aif -o " + (d / "aif.png").string()), 0);
    ASSERT_EQ(run("render " + ckpt + " --view 1 --Q 0 -o " + (d / "q0.ppm").string()), 0);
    ASSERT_EQ(run("render " + ckpt + " --view 1 --aif -o " + (d / "aif.ppm").string()), 0);
    EXPECT_EQ(slurp(d / "q0.png"), slurp(d / "aif.png"));
    EXPECT_EQ(slurp(d / "q0.ppm"), slurp(d / "aif.ppm"));
    EXPECT_FALSE(slurp(d / "q0.png").empty());
}

TEST(Cli, CocAtZeroApertureIsAllZero) {
    const fs::path &d = dataset();
    ASSERT_EQ(run("render " + (d / "ground_truth.dsp").string() +
                  " --view 0 --Q 0 --coc --depth -o " + (d / "maps.png").string()),
              0);
    const Image coc = readImage(d / "maps_coc.png");
    for (double v : coc.data()) {
        EXPECT_EQ(v, 0.0);
    }
    EXPECT_TRUE(fs::exists(d / "maps_depth.png"));
}

TEST(Cli, RuntimeErrorsExitWithOne) {
    const fs::path &d = dataset();
    EXPECT_EQ(run("render " + (d / "ground_truth.dsp").string() + " --view 5 -o " +
                  (d / "x.png").string()),
              1);
    EXPECT_EQ(run("render " + (d / "missing.dsp").string()), 1);
    EXPECT_EQ(run("render " + (d / "ground_truth.dsp").string() + " --f -2 -o " +
                  (d / "x.png").string()),
              1);
}

TEST(Cli, TrainTwiceGivesIdenticalMetrics) {
    const fs::path &d = dataset();
    std::ofstream(d / "tiny.json") << R"({
        "data": {"points": "points.ply", "views": "views.json"},
        "output": {"checkpoint": "tiny.dsp", "metrics": "tiny.csv"},
        "train": {"scale": 0.001, "seed": 4, "log_every": 1}
    })";
    ASSERT_EQ(run("train --quiet " + (d / "tiny.json").string()), 0);
    const std::string first = slurp(d / "tiny.csv");
    ASSERT_EQ(run("train --quiet " + (d / "tiny.json").string()), 0);
    EXPECT_EQ(slurp(d / "tiny.csv"), first);
    EXPECT_EQ(first.substr(0, first.find('\n')),
              "iter,stage,view,loss,l_rec,l_detail,l_mk,l_reg,psnr_aif,gaussians");
    const Checkpoint c = loadCheckpoint(d / "tiny.dsp");
    EXPECT_EQ(c.iteration, 40u);
    EXPECT_EQ(c.poses.size(), 2u);
    EXPECT_EQ(run("render " + (d / "tiny.dsp").string() + " -o " + (d / "t.png").string()), 0);
}

TEST(Cli, UnknownConfigKeyIsARuntimeError) {
    const fs::path &d = dataset();
    std::ofstream(d / "bad.json") << R"({"train": {"sclae": 0.01}})";
    EXPECT_EQ(run("train " + (d / "bad.json").string()), 1);
}
