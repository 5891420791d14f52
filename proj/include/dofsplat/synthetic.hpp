// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic scenes with reference images rendered by this engine at known lens
// parameters, for self-consistent recovery experiments.
//
// Two-plane layout: a textured near plane fills the left half of the frame and a textured far
// plane fills the whole background. Cameras sit on a ring in the z = 0 plane and look down +z,
// so both planes have constant camera depth in every view.

#pragma once

#include <dofsplat/core.hpp>
#include <dofsplat/scene_io.hpp>

#include <cstdint>
#include <vector>

namespace dofsplat {

enum class SyntheticLayout { TwoPlane, RandomBox };

struct SyntheticSpec {
    SyntheticLayout layout = SyntheticLayout::TwoPlane;
    /// Approximate Gaussian count (grids are rounded to whole rows).
    int gaussianCount = 2000;
    int width         = 64;
    int height        = 64;
    double focalPx    = 64.0;
    int viewCount     = 4;
    double ringRadius = 0.15;
    double nearDepth  = 2.0;
    double farDepth   = 6.0;
    /// Ground-truth lens per view; shorter lists are cycled.
    std::vector<double> focalDistances = {2.0};
    std::vector<double> apertures      = {20.0};
    Vec3 background                    = Vec3::Zero();

    void validate() const;
};

struct SyntheticDataset {
    Scene scene;
    /// Each view carries its ground-truth lens, defocused reference and all-in-focus render.
    std::vector<TrainView> views;
    Vec3 background = Vec3::Zero();
};

SyntheticDataset generateSynthetic(const SyntheticSpec &spec, std::uint64_t seed);

/// A sparse, noisy stand-in for a structure-from-motion cloud: a random `fraction` of the
/// Gaussian centers, each jittered by N(0, (noise * depth)^2) per axis, with their colors.
PointCloud samplePointCloud(const Scene &scene, double fraction, double noise,
                            std::uint64_t seed);

/// Ring pose m of count looking down +z from (r cos t, r sin t, 0).
CameraPose ringPose(const SyntheticSpec &spec, int m);

} // namespace dofsplat
