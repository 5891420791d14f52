// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Initial lens parameters from the point cloud: each view focuses at the median diopter of the
// points in front of it, and its aperture is chosen so the 10th-90th percentile depth range
// spans a CoC radius of tau pixels.

#pragma once

#include <dofsplat/core.hpp>

#include <string>
#include <vector>

namespace dofsplat {

inline constexpr double kDefaultTau = 15.0;

/// Camera-space depths (z > 0 only) of every Gaussian center.
std::vector<double> viewDepths(const Scene &scene, const CameraPose &pose);

/// Nearest-rank percentile (p in [0, 100]) of an unsorted sample.
double nearestRankPercentile(std::vector<double> values, double p);

/// 1 / median(1 / z); an even count averages the two middle diopters.
double initialFocalDistance(const std::vector<double> &depths);

/// tau / |1/p10 - 1/p90|, or 0 when p10 == p90 (flat scene).
double initialAperture(const std::vector<double> &depths, double tau = kDefaultTau);

struct DepthStats {
    double p10 = 0.0;
    double p50 = 0.0;
    double p90 = 0.0;
};

DepthStats depthStats(const std::vector<double> &depths);

struct LensInit {
    std::vector<LensParams> lenses;
    std::vector<std::string> warnings;
};

/// Per-view initialization. Throws DomainError when a view sees no point in front of it.
LensInit initializeLenses(const Scene &scene, const std::vector<CameraPose> &poses,
                          double tau = kDefaultTau);

} // namespace dofsplat
