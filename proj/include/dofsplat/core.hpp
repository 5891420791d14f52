// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Domain types shared by the whole pipeline: scene primitives, cameras, lens parameters
// and training views.

#pragma once

#include <dofsplat/image.hpp>

#include <Eigen/Core>
#include <Eigen/LU>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace dofsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Real spherical-harmonics band constants for degrees 0 and 1.
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

/// Maximum supported SH degree. Degree 0 is a constant color, degree 1 adds a linear band.
inline constexpr int kMaxShDegree = 1;

/// SH coefficients per RGB channel; [0] is the DC term, [1..3] the degree-1 band.
using ShCoeffs = std::array<Vec3, 4>;

/// DC coefficient producing the given RGB color (degree-0 evaluation is 0.5 + C0*h).
Vec3 rgbToSh0(const Vec3 &rgb);
Vec3 sh0ToRgb(const Vec3 &sh0);

/// One scene primitive in physical units. Quaternions are stored (w, x, y, z).
struct Gaussian3D {
    Vec3 center = Vec3::Zero();
    Vec4 rotation{1.0, 0.0, 0.0, 0.0};
    Vec3 scale = Vec3::Constant(0.01);
    double opacity = 0.1;
    ShCoeffs sh{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
};

/// Parameter store for a set of Gaussians in optimizer space: scales are kept as log(s) and
/// opacities as logit(o), so positivity and the [0,1] bound are structural. Physical values
/// are exposed through gaussian()/set().
struct Scene {
    int shDegree = 0;
    std::vector<Vec3> means;
    std::vector<Vec4> quats;
    std::vector<Vec3> logScales;
    std::vector<double> opacityLogits;
    std::vector<ShCoeffs> sh;

    std::size_t
    size() const {
        return means.size();
    }
    bool
    empty() const {
        return means.empty();
    }

    Gaussian3D gaussian(std::size_t i) const;
    void set(std::size_t i, const Gaussian3D &g);
    void add(const Gaussian3D &g);
    void reserve(std::size_t n);

    /// Keeps only the rows whose flag is true, preserving order.
    void compact(const std::vector<bool> &keep);

    Vec3
    scale(std::size_t i) const {
        return logScales[i].array().exp();
    }
    double opacity(std::size_t i) const;

    bool operator==(const Scene &) const = default;
};

double sigmoid(double x);
double logit(double p);

/// Rotation matrix of a quaternion (w, x, y, z); the quaternion is normalized first.
Mat3 rotationFromQuaternion(const Vec4 &q);

/// Sigma = R(q) diag(s)^2 R(q)^T. Throws ValidationError if |q| deviates from 1 by more than
/// 1e-3 or if any scale component is not positive.
Mat3 covarianceFrom(const Vec4 &q, const Vec3 &s);

/// Pinhole intrinsics in pixels.
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width  = 0;
    int height = 0;

    bool operator==(const Intrinsics &) const = default;
};

/// World-to-camera rigid transform plus intrinsics. Camera looks down +z, x right, y down.
struct CameraPose {
    Mat4 worldToCamera = Mat4::Identity();
    Intrinsics intrinsics;

    Mat3
    rotation() const {
        return worldToCamera.topLeftCorner<3, 3>();
    }
    Vec3
    translation() const {
        return worldToCamera.topRightCorner<3, 1>();
    }
    /// Camera center in world coordinates.
    Vec3 position() const;

    /// Throws ValidationError if the rotation block is not orthonormal within 1e-6, the last
    /// row is not (0,0,0,1) or the intrinsics are degenerate.
    void validate() const;

    bool operator==(const CameraPose &) const = default;
};

/// Learnable thin-lens parameters of one view. aperture == 0 is the all-in-focus pinhole limit.
struct LensParams {
    double focalDistance = 1.0;
    double aperture      = 0.0;

    void validate() const;

    bool operator==(const LensParams &) const = default;
};

/// One training view: pose, learnable lens and the reference image.
struct TrainView {
    int index = 0;
    CameraPose pose;
    LensParams lens;
    Image image;
    /// Optional all-in-focus ground truth, used only for evaluation metrics.
    std::optional<Image> allInFocus;
};

struct SceneViolation {
    std::size_t gaussian;
    std::string message;
};

/// Lists invariant violations per Gaussian: non-finite values, non-unit quaternions,
/// non-positive scales and opacities outside [0,1]. Empty iff the scene is valid.
std::vector<SceneViolation> validateScene(const Scene &scene);

/// Same checks on physical Gaussians (used before they enter a Scene).
std::vector<SceneViolation> validateGaussians(const std::vector<Gaussian3D> &gaussians);

} // namespace dofsplat
