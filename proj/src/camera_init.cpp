// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/camera_init.hpp>
#include <dofsplat/error.hpp>

#include <algorithm>
#include <cmath>

namespace dofsplat {

std::vector<double>
viewDepths(const Scene &scene, const CameraPose &pose) {
    std::vector<double> out;
    out.reserve(scene.size());
    const Mat3 r = pose.rotation();
    const Vec3 t = pose.translation();
    for (const Vec3 &m : scene.means) {
        const double z = r.row(2).dot(m) + t[2];
        if (z > 0.0) {
            out.push_back(z);
        }
    }
    return out;
}

double
nearestRankPercentile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw DomainError("percentile of an empty sample");
    }
    if (!(p >= 0.0 && p <= 100.0)) {
        throw DomainError("percentile must lie in [0, 100]");
    }
    std::sort(values.begin(), values.end());
    const auto n    = static_cast<double>(values.size());
    const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p / 100.0 * n)));
    return values[std::min(rank, values.size()) - 1];
}

double
initialFocalDistance(const std::vector<double> &depths) {
    if (depths.empty()) {
        throw DomainError("focal distance initialization needs at least one depth");
    }
    std::vector<double> d(depths.size());
    std::transform(depths.begin(), depths.end(), d.begin(), [](double z) { return 1.0 / z; });
    std::sort(d.begin(), d.end());
    const std::size_t n = d.size();
    const double median = n % 2 == 1 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
    return 1.0 / median;
}

double
initialAperture(const std::vector<double> &depths, double tau) {
    const double p10 = nearestRankPercentile(depths, 10.0);
    const double p90 = nearestRankPercentile(depths, 90.0);
    const double range = std::abs(1.0 / p10 - 1.0 / p90);
    if (range == 0.0) {
        return 0.0;
    }
    return tau / range;
}

DepthStats
depthStats(const std::vector<double> &depths) {
    return {nearestRankPercentile(depths, 10.0), nearestRankPercentile(depths, 50.0),
            nearestRankPercentile(depths, 90.0)};
}

LensInit
initializeLenses(const Scene &scene, const std::vector<CameraPose> &poses, double tau) {
    if (!(tau >= 0.0)) {
        throw ValidationError("camera_init.tau must be non-negative");
    }
    if (scene.size() == 0) {
        throw DomainError("camera initialization needs a non-empty scene");
    }
    LensInit out;
    for (std::size_t m = 0; m < poses.size(); ++m) {
        const std::vector<double> depths = viewDepths(scene, poses[m]);
        if (depths.empty()) {
            throw DomainError("view " + std::to_string(m) + " has no points in front of it");
        }
        LensParams lens;
        lens.focalDistance = initialFocalDistance(depths);
        lens.aperture      = initialAperture(depths, tau);
        if (lens.aperture == 0.0) {
            out.warnings.push_back("view " + std::to_string(m) +
                                   ": flat depth distribution, aperture initialized to 0");
        }
        out.lenses.push_back(lens);
    }
    return out;
}

} // namespace dofsplat
