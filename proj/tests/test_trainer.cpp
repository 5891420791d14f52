// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"

#include <dofsplat/error.hpp>
#include <dofsplat/synthetic.hpp>
#include <dofsplat/trainer.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace dofsplat;

namespace {

/// A short run on a tiny synthetic dataset: 60 iterations, warm-up to 20, injection at 5.
struct TinyRun {
    SyntheticDataset data;
    Scene init;
    TrainConfig config;
};

TinyRun
tinyRun(std::uint64_t seed) {
    SyntheticSpec spec;
    spec.gaussianCount  = 200;
    spec.width          = 16;
    spec.height         = 16;
    spec.focalPx        = 16.0;
    spec.viewCount      = 3;
    spec.focalDistances = {2.0, 6.0};
    TinyRun r;
    r.data = generateSynthetic(spec, seed);
    r.init = sceneFromPoints(samplePointCloud(r.data.scene, 0.4, 0.01, seed + 1));
    r.config.schedule.totalIterations    = 60;
    r.config.schedule.warmupEnd          = 20;
    r.config.schedule.injectionIteration = 5;
    r.config.schedule.injectionCount     = 40;
    r.config.schedule.pruneInterval      = 25;
    r.config.logEvery                    = 1;
    r.config.seed                        = seed;
    return r;
}

std::vector<LensParams>
lensesOf(const SyntheticDataset &d) {
    std::vector<LensParams> out;
    for (const TrainView &v : d.views) {
        out.push_back(v.lens);
    }
    return out;
}

} // namespace

TEST(Schedule, ScalingArithmetic) {
    Schedule s;
    s.scale          = 0.01;
    const Schedule k = s.scaled();
    EXPECT_EQ(k.warmupEnd, 50);
    EXPECT_EQ(k.injectionIteration, 20);
    EXPECT_EQ(k.totalIterations, 400);
    EXPECT_EQ(k.injectionCount, 600);
    EXPECT_EQ(k.pruneInterval, 10);
    EXPECT_EQ(k.scale, 1.0);
    s.scale = 0.0;
    EXPECT_THROW(s.validate(), ValidationError);
}

TEST(LearningRates, MeansDecayLinearly) {
    LearningRates lr;
    EXPECT_DOUBLE_EQ(lr.meansAt(0, 101), 5e-4);
    EXPECT_NEAR(lr.meansAt(100, 101), 5e-6, 1e-18);
    EXPECT_NEAR(lr.meansAt(50, 101), 0.5 * (5e-4 + 5e-6), 1e-18);
}

TEST(Injection, CountZeroLeavesSceneUnchanged) {
    std::mt19937_64 rng(1);
    Scene s            = test_support::randomScene(rng, 10, 16, 16, 16.0);
    const Scene before = s;
    EXPECT_EQ(injectPoints(s, 0, rng), 0u);
    EXPECT_EQ(s, before);
}

TEST(Injection, BoundsAndNearestNeighborCopyMatchBruteForce) {
    std::mt19937_64 rng(2);
    Scene s            = test_support::randomScene(rng, 10, 16, 16, 16.0);
    const Scene before = s;
    EXPECT_EQ(injectPoints(s, 100, rng), 100u);
    ASSERT_EQ(s.size(), 110u);
    Vec3 lo = before.means[0], hi = before.means[0];
    for (const Vec3 &m : before.means) {
        lo = lo.cwiseMin(m);
        hi = hi.cwiseMax(m);
    }
    const Vec3 pad = 0.05 * (hi - lo);
    for (std::size_t i = 10; i < 110; ++i) {
        const Vec3 &p = s.means[i];
        EXPECT_TRUE(((p - (lo - pad)).array() >= 0).all() && ((hi + pad - p).array() >= 0).all());
        std::size_t best = 0;
        for (std::size_t j = 1; j < 10; ++j) {
            if ((before.means[j] - p).norm() < (before.means[best] - p).norm()) {
                best = j;
            }
        }
        EXPECT_EQ(s.logScales[i], before.logScales[best]);
        EXPECT_EQ(s.opacityLogits[i], before.opacityLogits[best]);
        EXPECT_EQ(s.sh[i], before.sh[best]);
        EXPECT_EQ(s.quats[i], Vec4(1, 0, 0, 0));
    }
}

TEST(Pruning, Examples) {
    Scene s;
    for (double o : {0.5, 0.5, 0.5}) {
        Gaussian3D g;
        g.opacity = o;
        s.add(g);
    }
    EXPECT_EQ(pruneMask(s, 0.005), (std::vector<bool>{true, true, true}));
    Gaussian3D faint;
    faint.opacity = 0.001;
    s.add(faint);
    EXPECT_EQ(pruneMask(s, 0.005), (std::vector<bool>{true, true, true, false}));
}

TEST(Pruning, RemovingFaintGaussiansDoesNotChangeTheRender) {
    std::mt19937_64 rng(3);
    Scene s = test_support::randomScene(rng, 30, 24, 24, 24.0);
    for (std::size_t i = 0; i < s.size(); i += 3) {
        Gaussian3D g = s.gaussian(i);
        g.opacity    = 1e-4;
        s.set(i, g);
    }
    const CameraPose cam = test_support::lookingDownZ(24, 24, 24.0);
    const LensParams lens{3.0, 8.0};
    const RenderOutput full = render(s, cam, lens);
    Scene pruned            = s;
    pruned.compact(pruneMask(s, 0.005));
    EXPECT_EQ(pruned.size(), 20u);
    const RenderOutput cut = render(pruned, cam, lens);
    for (std::size_t i = 0; i < full.color.size(); ++i) {
        EXPECT_NEAR(full.color.data()[i], cut.color.data()[i], 1e-6);
    }
}

TEST(TrainState, ZeroGradientStepLeavesEveryGroupUnchanged) {
    std::mt19937_64 rng(4);
    TrainState st = makeTrainState(test_support::randomScene(rng, 5, 16, 16, 16.0),
                                   {LensParams{2, 3}, LensParams{3, 4}}, TrainConfig{});
    for (auto &[name, group] : st.optimizer.groups()) {
        std::vector<double> x(group.rows() * group.rowWidth, 0.25);
        const std::vector<double> before = x;
        st.optimizer.step(name, x, std::vector<double>(x.size(), 0.0), 1.0);
        EXPECT_EQ(x, before) << name;
    }
}

TEST(Train, SingleGaussianLossDecreases) {
    Scene truth;
    Gaussian3D g;
    g.center  = Vec3(0.0, 0.0, 3.0);
    g.scale   = Vec3(0.3, 0.2, 0.1);
    g.opacity = 0.9;
    g.sh[0]   = rgbToSh0(Vec3(0.8, 0.3, 0.2));
    truth.add(g);
    const CameraPose cam = test_support::lookingDownZ(16, 16, 16.0);
    TrainView v;
    v.pose  = cam;
    v.lens  = LensParams{3.0, 4.0};
    v.image = render(truth, cam, v.lens).color;

    Scene init = truth;
    Gaussian3D start = g;
    start.center += Vec3(0.15, -0.1, 0.0);
    start.scale   = Vec3(0.2, 0.2, 0.2);
    start.opacity = 0.5;
    start.sh[0]   = rgbToSh0(Vec3(0.5, 0.5, 0.5));
    init.set(0, start);

    TrainConfig cfg;
    cfg.schedule.totalIterations    = 200;
    cfg.schedule.warmupEnd          = 150;
    cfg.schedule.injectionIteration = 0;
    cfg.schedule.injectionCount     = 0;
    cfg.logEvery                    = 1;
    cfg.lr.means                    = 5e-3;
    cfg.lr.meansFinal               = 5e-4;
    TrainState st = makeTrainState(init, {v.lens}, cfg);
    const std::vector<MetricsRow> rows = train(st, {v}, cfg);
    ASSERT_EQ(rows.size(), 200u);
    double ema = rows[0].loss, first = 0.0;
    for (std::size_t i = 0; i < 150; ++i) {
        ema = 0.9 * ema + 0.1 * rows[i].loss;
        if (i == 20) {
            first = ema;
        }
    }
    EXPECT_LT(ema, 0.5 * first);
}

TEST(Train, SameSeedSameMetrics) {
    const TinyRun r = tinyRun(7);
    TrainState a    = makeTrainState(r.init, lensesOf(r.data), r.config);
    TrainState b    = makeTrainState(r.init, lensesOf(r.data), r.config);
    const std::string csvA = metricsCsv(train(a, r.data.views, r.config));
    const std::string csvB = metricsCsv(train(b, r.data.views, r.config));
    EXPECT_EQ(csvA, csvB);
    EXPECT_EQ(a.scene, b.scene);
    EXPECT_NE(csvA.find("refine"), std::string::npos);
}

TEST(Train, ResumeFromCheckpointMatchesUninterruptedRun) {
    const TinyRun r = tinyRun(8);
    TrainState full = makeTrainState(r.init, lensesOf(r.data), r.config);
    const std::vector<MetricsRow> all = train(full, r.data.views, r.config);

    std::vector<CameraPose> poses;
    for (const TrainView &v : r.data.views) {
        poses.push_back(v.pose);
    }
    for (int cut : {3, 30}) {
        TrainState first = makeTrainState(r.init, lensesOf(r.data), r.config);
        std::vector<MetricsRow> rows = train(first, r.data.views, r.config, {}, cut);
        const std::string bytes = encodeCheckpoint(toCheckpoint(first, poses, Vec3::Zero()));
        TrainState resumed      = fromCheckpoint(
            decodeCheckpoint(std::span(reinterpret_cast<const std::uint8_t *>(bytes.data()),
                                            bytes.size())),
            r.config);
        const std::vector<MetricsRow> rest = train(resumed, r.data.views, r.config);
        rows.insert(rows.end(), rest.begin(), rest.end());
        EXPECT_EQ(metricsCsv(rows), metricsCsv(all)) << "cut at " << cut;
        EXPECT_EQ(resumed.scene, full.scene);
        EXPECT_EQ(resumed.lenses, full.lenses);
    }
}

TEST(Train, CheckpointRoundTripRendersBitIdentical) {
    const TinyRun r = tinyRun(9);
    TrainState st   = makeTrainState(r.init, lensesOf(r.data), r.config);
    train(st, r.data.views, r.config, {}, 25);
    std::vector<CameraPose> poses;
    for (const TrainView &v : r.data.views) {
        poses.push_back(v.pose);
    }
    const Checkpoint c = toCheckpoint(st, poses, Vec3::Zero());
    const std::string bytes = encodeCheckpoint(c);
    const Checkpoint back   = decodeCheckpoint(
        std::span(reinterpret_cast<const std::uint8_t *>(bytes.data()), bytes.size()));
    for (std::size_t m = 0; m < poses.size(); ++m) {
        const RenderOutput a = render(c.scene, c.poses[m], c.lenses[m]);
        const RenderOutput b = render(back.scene, back.poses[m], back.lenses[m]);
        EXPECT_EQ(a.color, b.color);
        EXPECT_EQ(a.depth, b.depth);
        EXPECT_EQ(a.coc, b.coc);
    }
}

TEST(Train, InjectionAndPruningKeepOptimizerRowsInStep) {
    const TinyRun r = tinyRun(10);
    TrainState st   = makeTrainState(r.init, lensesOf(r.data), r.config);
    const std::size_t start = st.scene.size();
    train(st, r.data.views, r.config);
    EXPECT_NE(st.scene.size(), start);
    for (const char *g : {"means", "quats", "scales", "opacities", "sh"}) {
        EXPECT_EQ(st.optimizer.group(g).rows(), st.scene.size()) << g;
    }
    EXPECT_TRUE(validateScene(st.scene).empty());
}

TEST(Train, LensOnlyFreezesTheScene) {
    TinyRun r                 = tinyRun(11);
    r.config.lensOnly         = true;
    r.config.detailEnhancement = false;
    TrainState st             = makeTrainState(r.data.scene, lensesOf(r.data), r.config);
    for (LensParams &l : st.lenses) {
        l.aperture *= 1.1;
    }
    train(st, r.data.views, r.config);
    EXPECT_EQ(st.scene, r.data.scene);
    EXPECT_NE(st.lenses, lensesOf(r.data));
}

TEST(Train, NonFiniteLossRaisesTrainingError) {
    TinyRun r = tinyRun(12);
    std::vector<TrainView> views = r.data.views;
    views[0].image.at(3, 3, 1)   = std::numeric_limits<double>::quiet_NaN();
    views[1].image.at(3, 3, 1)   = std::numeric_limits<double>::quiet_NaN();
    views[2].image.at(3, 3, 1)   = std::numeric_limits<double>::quiet_NaN();
    TrainState st = makeTrainState(r.init, lensesOf(r.data), r.config);
    try {
        train(st, views, r.config);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError &e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("iteration 0"), std::string::npos) << msg;
        EXPECT_NE(msg.find("view"), std::string::npos) << msg;
    }
}

TEST(Train, InvalidInputsRejected) {
    const TinyRun r = tinyRun(13);
    TrainState st   = makeTrainState(r.init, {LensParams{2, 1}}, r.config);
    EXPECT_THROW(train(st, r.data.views, r.config), ValidationError);
    TrainState empty = makeTrainState(Scene{}, lensesOf(r.data), r.config);
    EXPECT_THROW(train(empty, r.data.views, r.config), ValidationError);
}

TEST(Metrics, CsvLayout) {
    MetricsRow row;
    row.iteration      = 3;
    row.stage          = Stage::Refine;
    row.view           = 1;
    row.loss           = 0.25;
    row.parts.detail   = 0.25;
    row.psnrAllInFocus = 30.5;
    row.gaussians      = 17;
    EXPECT_EQ(metricsCsv({row}),
              "iter,stage,view,loss,l_rec,l_detail,l_mk,l_reg,psnr_aif,gaussians\n"
              "3,refine,1,0.25,0,0.25,0,0,30.500000,17\n");
}
