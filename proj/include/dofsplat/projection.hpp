// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Local-affine (EWA) projection of 3D Gaussians to screen space.

#pragma once

#include <dofsplat/core.hpp>

namespace dofsplat {

/// Screen-space dilation added to every projected covariance (anti-aliasing low-pass).
inline constexpr double kLowPassDilation = 0.3;
inline constexpr double kDefaultNearPlane = 0.01;

struct ProjectionSettings {
    double nearPlane = kDefaultNearPlane;
    double dilation  = kLowPassDilation;
};

struct Projected2D {
    Vec2 mean        = Vec2::Zero(); ///< pixels
    Mat2 cov         = Mat2::Zero(); ///< J W Sigma W^T J^T + dilation * I, pixels^2
    double depth     = 0.0;          ///< camera-space z of the center
    double radius    = 0.0;          ///< 3 sigma of cov; the rasterizer recomputes it from Sigma''
    bool visible     = false;
};

/// Camera-space z of the transformed center.
double depthOf(const Vec3 &center, const CameraPose &cam);

/// Jacobian of the perspective projection (pixels per camera-space unit) at a camera-space
/// point.
Eigen::Matrix<double, 2, 3> projectionJacobian(const Vec3 &pointCam, const Intrinsics &k);

/// Projects a Gaussian. The result is flagged invisible (never dropped) when the center is at
/// or behind the near plane or the 3-sigma footprint misses the image.
Projected2D projectGaussian(const Vec3 &center, const Mat3 &cov3d, const CameraPose &cam,
                            const ProjectionSettings &settings = {});

Projected2D projectGaussian(const Gaussian3D &g, const CameraPose &cam,
                            const ProjectionSettings &settings = {});

/// Three times the square root of the largest eigenvalue of a symmetric 2x2 matrix.
double cutoffRadius(const Mat2 &cov, double sigmas = 3.0);

} // namespace dofsplat
