// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"

#include <dofsplat/error.hpp>
#include <dofsplat/rasterizer.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <random>
#include <set>

using namespace dofsplat;
using namespace dofsplat::test_support;

namespace {

Scene
singleGaussian(double depth, double opacity, double sigmaPx, double focalPx) {
    Scene s;
    Gaussian3D g;
    g.center  = Vec3(0, 0, depth);
    g.scale   = Vec3::Constant(sigmaPx * depth / focalPx);
    g.opacity = opacity;
    g.sh[0]   = rgbToSh0(Vec3(0.8, 0.4, 0.2));
    s.add(g);
    return s;
}

/// Checkerboard plane of small Gaussians at a fixed depth, filling a 32x32 view.
Scene
checkerPlane(double depth, double focalPx, int width) {
    Scene s;
    const int n        = 48;
    const double pitch = (2.0 * width) / n * depth / focalPx;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            Gaussian3D g;
            g.center  = Vec3((i - (n - 1) / 2.0) * pitch, (j - (n - 1) / 2.0) * pitch, depth);
            g.scale   = Vec3(0.6 * pitch, 0.6 * pitch, 0.01 * pitch);
            g.opacity = 0.95;
            const bool white = ((i / 2) + (j / 2)) % 2 == 0;
            g.sh[0] = rgbToSh0(white ? Vec3(0.95, 0.95, 0.95) : Vec3(0.05, 0.05, 0.05));
            s.add(g);
        }
    }
    return s;
}

double
maxImageGradient(const Image &img, int margin) {
    double m = 0.0;
    for (int y = margin; y + 1 < img.height() - margin; ++y) {
        for (int x = margin; x + 1 < img.width() - margin; ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                m = std::max(m, std::abs(img.at(x + 1, y, c) - img.at(x, y, c)));
                m = std::max(m, std::abs(img.at(x, y + 1, c) - img.at(x, y, c)));
            }
        }
    }
    return m;
}

} // namespace

TEST(Render, EmptySceneIsBackground) {
    const CameraPose cam = lookingDownZ(20, 12, 20.0);
    RenderSettings settings;
    settings.background = Vec3(0.1, 0.2, 0.3);
    const RenderOutput out = render(Scene{}, cam, LensParams{2.0, 30.0}, settings);
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 20; ++x) {
            EXPECT_EQ(out.color.at(x, y, 0), 0.1);
            EXPECT_EQ(out.color.at(x, y, 2), 0.3);
            EXPECT_EQ(out.depth.at(x, y), 0.0);
            EXPECT_EQ(out.coc.at(x, y), 0.0);
            EXPECT_EQ(out.alpha.at(x, y), 0.0);
        }
    }
}

TEST(Render, PinholeApertureMatchesPlainSplatting) {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 10; ++t) {
        const Scene scene    = randomScene(rng, 20, 32, 32, 30.0);
        const CameraPose cam = lookingDownZ(32, 32, 30.0);
        RenderSettings plain;
        plain.depthOfField        = false;
        const RenderOutput a      = render(scene, cam, LensParams{2.5, 0.0});
        const RenderOutput b      = render(scene, cam, LensParams{2.5, 0.0}, plain);
        EXPECT_LT(maxAbsDiff(a.color, b.color), 1e-12);
        EXPECT_LT(maxAbsDiff(a.depth, b.depth), 1e-12);
        EXPECT_LT(maxAbsDiff(a.alpha, b.alpha), 1e-12);
    }
}

TEST(Render, FocalPlaneSingleGaussian) {
    const double F       = 40.0;
    const Scene scene    = singleGaussian(5.0, 0.999, 3.0, F);
    const CameraPose cam = lookingDownZ(33, 33, F);
    const RenderOutput out = render(scene, cam, LensParams{5.0, 80.0});
    const double alpha     = out.alpha.at(16, 16);
    EXPECT_GT(alpha, 0.95);
    EXPECT_NEAR(out.depth.at(16, 16), 5.0 * alpha, 1e-9);
    EXPECT_NEAR(out.coc.at(16, 16), 0.0, 1e-12);
}

TEST(Render, DefocusedSingleGaussianMatchesOracle) {
    const double F       = 40.0;
    const Scene scene    = singleGaussian(2.0, 0.9, 2.0, F);
    const CameraPose cam = lookingDownZ(64, 64, F);
    const LensParams lens{4.0, 100.0};
    const RenderOutput out     = render(scene, cam, lens);
    const OracleImages oracle  = bruteForceRender(scene, cam, lens);
    EXPECT_NEAR(out.coc.at(32, 32) / out.alpha.at(32, 32), 12.5, 1e-9);
    EXPECT_NEAR(oracle.coc.at(32, 32) / oracle.alpha.at(32, 32), 12.5, 1e-9);
    EXPECT_LT(maxAbsDiff(out.coc, oracle.coc), 1e-9);
    EXPECT_LT(maxAbsDiff(out.color, oracle.color), 1e-9);
}

TEST(Render, AllInFocus) {
    std::mt19937_64 rng(5);
    const Scene scene    = randomScene(rng, 12, 24, 24, 25.0);
    const CameraPose cam = lookingDownZ(24, 24, 25.0);
    const RenderOutput aif = renderAllInFocus(scene, cam);
    const RenderOutput q0  = render(scene, cam, LensParams{3.7, 0.0});
    const RenderOutput q0b = render(scene, cam, LensParams{0.4, 0.0});
    EXPECT_EQ(aif.color, q0.color);
    EXPECT_EQ(aif.depth, q0.depth);
    EXPECT_EQ(aif.color, q0b.color);
    for (double v : aif.coc.data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Render, TiledMatchesBruteForce) {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> uf(1.5, 5.0), uq(0.0, 40.0);
    for (int t = 0; t < 12; ++t) {
        const int count      = 1 + static_cast<int>(rng() % 64);
        const Scene scene    = randomScene(rng, count, 32, 32, 30.0, 0.995);
        const CameraPose cam = lookingDownZ(32, 32, 30.0);
        const LensParams lens{uf(rng), uq(rng)};
        RenderSettings settings;
        settings.tileSize = (t % 2 == 0) ? 16 : 8;
        const RenderOutput out    = render(scene, cam, lens, settings);
        const OracleImages oracle = bruteForceRender(scene, cam, lens, settings);
        EXPECT_LT(maxAbsDiff(out.color, oracle.color), 1e-9);
        EXPECT_LT(maxAbsDiff(out.depth, oracle.depth), 1e-9);
        EXPECT_LT(maxAbsDiff(out.coc, oracle.coc), 1e-9);
        EXPECT_LT(maxAbsDiff(out.alpha, oracle.alpha), 1e-9);
    }
}

TEST(Render, TileListsAreSortedAndUnique) {
    std::mt19937_64 rng(77);
    const Scene scene    = randomScene(rng, 40, 48, 40, 40.0);
    const CameraPose cam = lookingDownZ(48, 40, 40.0);
    const RenderOutput out = render(scene, cam, LensParams{3.0, 20.0});
    const auto &cache      = *out.cache;
    for (const auto &lst : cache.tiles.lists) {
        std::set<std::uint32_t> seen(lst.begin(), lst.end());
        EXPECT_EQ(seen.size(), lst.size());
        for (std::size_t e = 1; e < lst.size(); ++e) {
            EXPECT_LE(cache.prepared[lst[e - 1]].proj.depth, cache.prepared[lst[e]].proj.depth);
        }
    }
}

TEST(Render, AlphaAndContributorCounts) {
    std::mt19937_64 rng(8);
    const Scene scene    = randomScene(rng, 50, 32, 32, 30.0, 0.999);
    const CameraPose cam = lookingDownZ(32, 32, 30.0);
    const RenderOutput out = render(scene, cam, LensParams{2.0, 25.0});
    for (std::size_t i = 0; i < out.alpha.size(); ++i) {
        EXPECT_GE(out.alpha.data()[i], 0.0);
        EXPECT_LE(out.alpha.data()[i], 1.0);
        if (out.contributorCount[i] == 0) {
            EXPECT_EQ(out.alpha.data()[i], 0.0);
        }
    }
    for (double v : out.color.data()) {
        EXPECT_LE(v, 1.0 + 1e-12);
    }
    // Blur spreads footprints, so more pixels are touched.
    const RenderOutput sharp = render(scene, cam, LensParams{2.0, 0.0});
    std::size_t touchedSharp = 0, touchedBlur = 0;
    for (std::size_t i = 0; i < out.contributorCount.size(); ++i) {
        touchedSharp += sharp.contributorCount[i] > 0;
        touchedBlur += out.contributorCount[i] > 0;
    }
    EXPECT_GT(touchedBlur, touchedSharp);
}

TEST(Render, StorageOrderDoesNotMatter) {
    std::mt19937_64 rng(99);
    Scene scene          = randomScene(rng, 30, 32, 32, 30.0);
    const CameraPose cam = lookingDownZ(32, 32, 30.0);
    const LensParams lens{2.2, 35.0};
    const RenderOutput a = render(scene, cam, lens);

    std::vector<std::size_t> perm(scene.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Scene shuffled;
    for (std::size_t i : perm) {
        shuffled.means.push_back(scene.means[i]);
        shuffled.quats.push_back(scene.quats[i]);
        shuffled.logScales.push_back(scene.logScales[i]);
        shuffled.opacityLogits.push_back(scene.opacityLogits[i]);
        shuffled.sh.push_back(scene.sh[i]);
    }
    const RenderOutput b = render(shuffled, cam, lens);
    EXPECT_EQ(a.color, b.color);
    EXPECT_EQ(a.coc, b.coc);
}

TEST(Render, IndependentOfThreadCount) {
    std::mt19937_64 rng(31);
    const Scene scene    = randomScene(rng, 60, 48, 48, 40.0);
    const CameraPose cam = lookingDownZ(48, 48, 40.0);
    const LensParams lens{2.5, 30.0};
    const RenderUpstream up = randomUpstream(rng, 48, 48, true, true, true, true);

    ::setenv("DOFSPLAT_THREADS", "1", 1);
    const RenderOutput a  = render(scene, cam, lens);
    const GradientSet ga  = renderBackward(scene, cam, lens, a, up);
    ::setenv("DOFSPLAT_THREADS", "4", 1);
    const RenderOutput b  = render(scene, cam, lens);
    const GradientSet gb  = renderBackward(scene, cam, lens, b, up);
    ::unsetenv("DOFSPLAT_THREADS");
    EXPECT_EQ(a.color, b.color);
    EXPECT_EQ(ga.dMeans, gb.dMeans);
    EXPECT_EQ(ga.dFocalDistance, gb.dFocalDistance);
    EXPECT_EQ(ga.dAperture, gb.dAperture);
}

TEST(Render, BlurNeverSharpensOutOfFocusPlane) {
    const double F       = 30.0;
    const Scene plane    = checkerPlane(4.0, F, 32);
    const CameraPose cam = lookingDownZ(32, 32, F);
    double prev          = INFINITY;
    for (double Q : {0.0, 5.0, 10.0, 20.0, 40.0}) {
        const double g = maxImageGradient(render(plane, cam, LensParams{2.0, Q}).color, 8);
        EXPECT_LE(g, prev + 1e-12) << "Q=" << Q;
        prev = g;
    }
}

TEST(RenderBackward, RequiresForwardIntermediates) {
    std::mt19937_64 rng(2);
    const Scene scene    = randomScene(rng, 3, 8, 8, 10.0);
    const CameraPose cam = lookingDownZ(8, 8, 10.0);
    RenderOutput out;
    EXPECT_THROW(renderBackward(scene, cam, LensParams{2.0, 5.0}, out, {}), StateError);
    out = render(scene, cam, LensParams{2.0, 5.0});
    EXPECT_THROW(renderBackward(scene, cam, LensParams{2.5, 5.0}, out, {}), StateError);
}

TEST(RenderBackward, ZeroUpstreamGivesZeroGradients) {
    std::mt19937_64 rng(4);
    const Scene scene    = randomScene(rng, 5, 16, 16, 16.0);
    const CameraPose cam = lookingDownZ(16, 16, 16.0);
    const LensParams lens{2.0, 20.0};
    const RenderOutput out = render(scene, cam, lens);
    RenderUpstream up;
    up.dColor             = Image(16, 16, 3);
    const GradientSet g   = renderBackward(scene, cam, lens, out, up);
    EXPECT_EQ(g.dFocalDistance, 0.0);
    EXPECT_EQ(g.dAperture, 0.0);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        EXPECT_TRUE(g.dMeans[i].isZero(0.0));
        EXPECT_TRUE(g.dScales[i].isZero(0.0));
        EXPECT_TRUE(g.dQuats[i].isZero(0.0));
        EXPECT_EQ(g.dOpacities[i], 0.0);
    }
}

TEST(RenderBackward, ColorSumMatchesFiniteDifferences) {
    std::mt19937_64 rng(17);
    const Scene scene    = randomScene(rng, 3, 8, 8, 8.0);
    const CameraPose cam = lookingDownZ(8, 8, 8.0);
    const LensParams lens{2.5, 6.0};
    RenderUpstream up;
    up.dColor = Image(8, 8, 3, 1.0); // loss = sum of the color image
    for (const auto &c : checkRenderGradients(scene, cam, lens, up, smoothSettings())) {
        EXPECT_TRUE(c.passes(1e-3, 1e-6))
            << c.name << " analytic=" << c.analytic << " numeric=" << c.numeric;
    }
}

TEST(RenderBackward, AllOutputsMatchFiniteDifferences) {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 3; ++t) {
        const Scene scene    = randomScene(rng, 4, 12, 12, 12.0, 0.9, t == 2 ? 1 : 0);
        const CameraPose cam = randomPose(rng, 12, 12, 12.0);
        const LensParams lens{2.0 + t, 8.0};
        RenderSettings settings = smoothSettings();
        settings.background     = Vec3(0.3, 0.6, 0.9);
        const RenderUpstream up = randomUpstream(rng, 12, 12, true, true, true, true);
        for (const auto &c : checkRenderGradients(scene, cam, lens, up, settings)) {
            EXPECT_TRUE(c.passes(1e-3, 1e-6))
                << c.name << " analytic=" << c.analytic << " numeric=" << c.numeric;
        }
    }
}

TEST(RenderBackward, CocDepthGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(29);
    const Scene scene    = randomScene(rng, 4, 12, 12, 12.0);
    const CameraPose cam = lookingDownZ(12, 12, 12.0);
    const LensParams lens{3.0, 10.0};
    RenderSettings settings   = smoothSettings();
    settings.cocDepthGradient = true;
    const RenderUpstream up   = randomUpstream(rng, 12, 12, true, true, true, false);
    for (const auto &c : checkRenderGradients(scene, cam, lens, up, settings)) {
        EXPECT_TRUE(c.passes(1e-3, 1e-6))
            << c.name << " analytic=" << c.analytic << " numeric=" << c.numeric;
    }
    // The detached and attached gradients differ only in the center component.
    settings.cocDepthGradient = false;
    const RenderOutput out    = render(scene, cam, lens, settings);
    const GradientSet off     = renderBackward(scene, cam, lens, out, up, settings);
    settings.cocDepthGradient = true;
    const GradientSet on      = renderBackward(scene, cam, lens, out, up, settings);
    EXPECT_EQ(off.dAperture, on.dAperture);
    EXPECT_EQ(off.dScales, on.dScales);
    bool anyDifferent = false;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        anyDifferent |= off.dMeans[i] != on.dMeans[i];
    }
    EXPECT_TRUE(anyDifferent);
}
