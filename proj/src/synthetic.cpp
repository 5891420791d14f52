// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/error.hpp>
#include <dofsplat/rasterizer.hpp>
#include <dofsplat/synthetic.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace dofsplat {

void
SyntheticSpec::validate() const {
    if (gaussianCount <= 0 || width <= 0 || height <= 0 || !(focalPx > 0.0) || viewCount <= 0) {
        throw ValidationError("synthetic spec: counts and sizes must be positive");
    }
    if (!(nearDepth > 0.0) || !(farDepth > nearDepth)) {
        throw ValidationError("synthetic spec: need 0 < near depth < far depth");
    }
    if (focalDistances.empty() || apertures.empty()) {
        throw ValidationError("synthetic spec: lens lists must not be empty");
    }
    for (double f : focalDistances) {
        LensParams{f, 0.0}.validate();
    }
    for (double q : apertures) {
        LensParams{1.0, q}.validate();
    }
}

CameraPose
ringPose(const SyntheticSpec &spec, int m) {
    CameraPose pose;
    const double t = 2.0 * std::numbers::pi * m / spec.viewCount;
    const Vec3 c(spec.ringRadius * std::cos(t), spec.ringRadius * std::sin(t), 0.0);
    pose.worldToCamera.topRightCorner<3, 1>() = -c;
    pose.intrinsics = Intrinsics{spec.focalPx, spec.focalPx, spec.width / 2.0, spec.height / 2.0,
                                 spec.width, spec.height};
    return pose;
}

namespace {

/// Adds a textured grid of flat Gaussians covering [x0,x1] x [y0,y1] at depth z.
void
addPlane(Scene &scene, std::mt19937_64 &rng, int count, double x0, double x1, double y0,
         double y1, double z, const Vec3 &base) {
    const double area  = (x1 - x0) * (y1 - y0);
    const double pitch = std::sqrt(area / std::max(count, 1));
    const int nx       = std::max(1, static_cast<int>(std::round((x1 - x0) / pitch)));
    const int ny       = std::max(1, static_cast<int>(std::round((y1 - y0) / pitch)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            Gaussian3D g;
            g.center = Vec3(x0 + (i + 0.5) * (x1 - x0) / nx, y0 + (j + 0.5) * (y1 - y0) / ny, z);
            g.scale  = Vec3(0.8 * pitch, 0.8 * pitch, 0.05 * pitch);
            g.opacity = 0.99;
            const double check = ((i / 2 + j / 2) % 2 == 0) ? 1.0 : 0.35;
            const Vec3 jitter(0.08 * u(rng), 0.08 * u(rng), 0.08 * u(rng));
            g.sh[0] = rgbToSh0((check * base + jitter).cwiseMax(0.02).cwiseMin(0.98));
            scene.add(g);
        }
    }
}

Scene
twoPlaneScene(const SyntheticSpec &spec, std::mt19937_64 &rng) {
    // Half-extent of the frame per unit depth, padded for the ring offsets.
    const double hx = spec.width / (2.0 * spec.focalPx);
    const double hy = spec.height / (2.0 * spec.focalPx);
    const double pad = spec.ringRadius + 0.05;

    const double nz     = spec.nearDepth, fz = spec.farDepth;
    const int nearCount = spec.gaussianCount / 2;

    Scene scene;
    addPlane(scene, rng, nearCount, -hx * nz - pad, 0.0, -hy * nz - pad, hy * nz + pad, nz,
             Vec3(0.9, 0.55, 0.25));
    addPlane(scene, rng, spec.gaussianCount - nearCount, -hx * fz - pad, hx * fz + pad,
             -hy * fz - pad, hy * fz + pad, fz, Vec3(0.3, 0.6, 0.95));
    return scene;
}

Scene
randomBoxScene(const SyntheticSpec &spec, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    const double hx = spec.width / (2.0 * spec.focalPx);
    const double hy = spec.height / (2.0 * spec.focalPx);
    Scene scene;
    for (int i = 0; i < spec.gaussianCount; ++i) {
        Gaussian3D g;
        const double z = spec.nearDepth + (spec.farDepth - spec.nearDepth) * u(rng);
        g.center = Vec3((2.0 * u(rng) - 1.0) * hx * z, (2.0 * u(rng) - 1.0) * hy * z, z);
        g.rotation = Vec4(n(rng), n(rng), n(rng), n(rng)).normalized();
        const double px = z / spec.focalPx;
        g.scale = Vec3(px * (1.0 + 2.0 * u(rng)), px * (1.0 + 2.0 * u(rng)),
                       px * (1.0 + 2.0 * u(rng)));
        g.opacity = 0.5 + 0.45 * u(rng);
        g.sh[0]   = rgbToSh0(Vec3(0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng)));
        scene.add(g);
    }
    return scene;
}

} // namespace

SyntheticDataset
generateSynthetic(const SyntheticSpec &spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    SyntheticDataset out;
    out.background = spec.background;
    out.scene      = spec.layout == SyntheticLayout::TwoPlane ? twoPlaneScene(spec, rng)
                                                              : randomBoxScene(spec, rng);
    RenderSettings settings;
    settings.background = spec.background;
    for (int m = 0; m < spec.viewCount; ++m) {
        TrainView v;
        v.index = m;
        v.pose  = ringPose(spec, m);
        v.lens  = LensParams{spec.focalDistances[m % spec.focalDistances.size()],
                            spec.apertures[m % spec.apertures.size()]};
        v.image      = render(out.scene, v.pose, v.lens, settings).color;
        v.allInFocus = renderAllInFocus(out.scene, v.pose, settings).color;
        out.views.push_back(std::move(v));
    }
    return out;
}

PointCloud
samplePointCloud(const Scene &scene, double fraction, double noise, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0) || !(noise >= 0.0)) {
        throw ValidationError("samplePointCloud: fraction must be in (0,1] and noise >= 0");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    PointCloud cloud;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (u(rng) >= fraction) {
            continue;
        }
        const Vec3 &c      = scene.means[i];
        const double sigma = noise * std::abs(c[2]);
        cloud.positions.push_back(c + sigma * Vec3(n(rng), n(rng), n(rng)));
        cloud.colors.push_back(sh0ToRgb(scene.sh[i][0]).cwiseMax(0.0).cwiseMin(1.0));
    }
    if (cloud.positions.empty() && scene.size() > 0) {
        cloud.positions.push_back(scene.means[0]);
        cloud.colors.push_back(sh0ToRgb(scene.sh[0][0]).cwiseMax(0.0).cwiseMin(1.0));
    }
    return cloud;
}

} // namespace dofsplat
