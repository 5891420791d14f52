// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/config.hpp>
#include <dofsplat/error.hpp>

#include <gtest/gtest.h>

using namespace dofsplat;

TEST(Config, DefaultsFromEmptyObject) {
    const AppConfig c = parseConfig("{}");
    EXPECT_EQ(c.tau, 15.0);
    EXPECT_EQ(c.train.schedule.totalIterations, 40000);
    EXPECT_EQ(c.train.loss.norm, ReconstructionNorm::L1);
    EXPECT_FALSE(c.train.raster.cocDepthGradient);
    EXPECT_TRUE(c.train.detailEnhancement);
    EXPECT_EQ(c.serveWorkers, 4);
}

TEST(Config, NestedAndDottedKeysAreEquivalent) {
    const AppConfig a = parseConfig(R"({"train": {"scale": 0.01, "lr": {"focal": 0.1}}})");
    const AppConfig b = parseConfig(R"({"train.scale": 0.01, "train.lr.focal": 0.1})");
    EXPECT_EQ(a.train.schedule.scale, 0.01);
    EXPECT_EQ(b.train.schedule.scale, 0.01);
    EXPECT_EQ(a.train.lr.focal, 0.1);
    EXPECT_EQ(b.train.lr.focal, 0.1);
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_THROW(parseConfig(R"({"train": {"scal": 0.01}})"), ValidationError);
    EXPECT_THROW(parseConfig(R"({"bogus": 1})"), ValidationError);
}

TEST(Config, DuplicateAndMistypedKeysRejected) {
    EXPECT_THROW(parseConfig(R"({"train": {"scale": 0.5}, "train.scale": 0.5})"), ValidationError);
    EXPECT_THROW(parseConfig(R"({"train.seed": -1})"), ValidationError);
    EXPECT_THROW(parseConfig(R"({"train.iterations": 1.5})"), ValidationError);
    EXPECT_THROW(parseConfig(R"({"train.detail_enhancement": 1})"), ValidationError);
    EXPECT_THROW(parseConfig(R"({"loss.norm": "l3"})"), ValidationError);
    EXPECT_THROW(parseConfig(R"({"raster.background": [0, 0]})"), ValidationError);
    EXPECT_THROW(parseConfig("[1]"), ValidationError);
    EXPECT_THROW(parseConfig("{"), FormatError);
}

TEST(Config, RangeChecks) {
    EXPECT_THROW(parseConfig(R"({"camera_init.tau": -1})"), ValidationError);
    EXPECT_THROW(parseConfig(R"({"train.sh_degree": 2})"), ValidationError);
    EXPECT_THROW(parseConfig(R"({"train.warmup": 50000})"), ValidationError);
}

TEST(Config, RelativePathsResolveAgainstBase) {
    const AppConfig c = parseConfig(R"({"data": {"points": "p.ply", "views": "/abs/v.json"}})",
                                    "/data/run");
    EXPECT_EQ(c.points, std::filesystem::path("/data/run/p.ply"));
    EXPECT_EQ(c.views, std::filesystem::path("/abs/v.json"));
}

TEST(Config, EveryDocumentedKeyIsAccepted) {
    const auto keys = configKeys();
    EXPECT_GT(keys.size(), 40u);
    for (const auto &[name, help] : keys) {
        EXPECT_FALSE(help.empty()) << name;
    }
}
