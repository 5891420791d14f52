// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/core.hpp>
#include <dofsplat/error.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dofsplat {

Vec3
rgbToSh0(const Vec3 &rgb) {
    return (rgb.array() - 0.5) / kShC0;
}

Vec3
sh0ToRgb(const Vec3 &sh0) {
    return (sh0.array() * kShC0 + 0.5).matrix();
}

double
sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

double
logit(double p) {
    constexpr double eps = 1e-12;
    p                    = std::clamp(p, eps, 1.0 - eps);
    return std::log(p / (1.0 - p));
}

Gaussian3D
Scene::gaussian(std::size_t i) const {
    Gaussian3D g;
    g.center   = means[i];
    g.rotation = quats[i];
    g.scale    = scale(i);
    g.opacity  = opacity(i);
    g.sh       = sh[i];
    return g;
}

double
Scene::opacity(std::size_t i) const {
    return sigmoid(opacityLogits[i]);
}

void
Scene::set(std::size_t i, const Gaussian3D &g) {
    means[i]         = g.center;
    quats[i]         = g.rotation;
    logScales[i]     = g.scale.array().log();
    opacityLogits[i] = logit(g.opacity);
    sh[i]            = g.sh;
}

void
Scene::add(const Gaussian3D &g) {
    means.push_back(g.center);
    quats.push_back(g.rotation);
    logScales.emplace_back(g.scale.array().log());
    opacityLogits.push_back(logit(g.opacity));
    sh.push_back(g.sh);
}

void
Scene::reserve(std::size_t n) {
    means.reserve(n);
    quats.reserve(n);
    logScales.reserve(n);
    opacityLogits.reserve(n);
    sh.reserve(n);
}

namespace {

template <typename T>
void
compactVector(std::vector<T> &v, const std::vector<bool> &keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (keep[i]) {
            v[out++] = v[i];
        }
    }
    v.resize(out);
}

} // namespace

void
Scene::compact(const std::vector<bool> &keep) {
    if (keep.size() != size()) {
        throw ValidationError("Scene::compact: mask size does not match scene size");
    }
    compactVector(means, keep);
    compactVector(quats, keep);
    compactVector(logScales, keep);
    compactVector(opacityLogits, keep);
    compactVector(sh, keep);
}

Mat3
rotationFromQuaternion(const Vec4 &qIn) {
    const Vec4 q    = qIn.normalized();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Mat3
covarianceFrom(const Vec4 &q, const Vec3 &s) {
    if (!q.allFinite() || std::abs(q.norm() - 1.0) > 1e-3) {
        throw ValidationError("covarianceFrom: quaternion is not unit length");
    }
    if (!s.allFinite() || (s.array() <= 0.0).any()) {
        throw ValidationError("covarianceFrom: scale components must be positive");
    }
    const Mat3 m = rotationFromQuaternion(q) * s.asDiagonal();
    return m * m.transpose();
}

Vec3
CameraPose::position() const {
    return -(rotation().transpose() * translation());
}

void
CameraPose::validate() const {
    if (!worldToCamera.allFinite()) {
        throw ValidationError("camera pose contains non-finite values");
    }
    const Mat3 r = rotation();
    if (((r * r.transpose()) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
        throw ValidationError("camera rotation block is not orthonormal");
    }
    if (r.determinant() < 0.0) {
        throw ValidationError("camera rotation block is a reflection");
    }
    const Eigen::RowVector4d lastRow = worldToCamera.row(3);
    if ((lastRow - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
        throw ValidationError("camera matrix last row must be (0,0,0,1)");
    }
    const auto &k = intrinsics;
    if (k.width <= 0 || k.height <= 0 || !(k.fx > 0.0) || !(k.fy > 0.0) ||
        !std::isfinite(k.cx) || !std::isfinite(k.cy)) {
        throw ValidationError("camera intrinsics are degenerate");
    }
}

void
LensParams::validate() const {
    if (!(focalDistance > 0.0) || !std::isfinite(focalDistance)) {
        throw ValidationError("lens focal distance must be positive");
    }
    if (!(aperture >= 0.0) || !std::isfinite(aperture)) {
        throw ValidationError("lens aperture parameter must be non-negative");
    }
}

namespace {

void
checkGaussian(std::size_t i, const Gaussian3D &g, std::vector<SceneViolation> &out) {
    auto flag = [&](const std::string &msg) { out.push_back({i, msg}); };
    if (!g.center.allFinite()) {
        flag("center is not finite");
    }
    if (!g.rotation.allFinite() || std::abs(g.rotation.norm() - 1.0) > 1e-6) {
        flag("rotation is not a unit quaternion");
    }
    if (!g.scale.allFinite() || (g.scale.array() <= 0.0).any()) {
        flag("scale must be positive and finite");
    }
    if (!std::isfinite(g.opacity) || g.opacity < 0.0 || g.opacity > 1.0) {
        flag("opacity outside [0,1]");
    }
    for (const auto &c : g.sh) {
        if (!c.allFinite()) {
            flag("color coefficients are not finite");
            break;
        }
    }
}

} // namespace

std::vector<SceneViolation>
validateGaussians(const std::vector<Gaussian3D> &gaussians) {
    std::vector<SceneViolation> out;
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        checkGaussian(i, gaussians[i], out);
    }
    return out;
}

std::vector<SceneViolation>
validateScene(const Scene &scene) {
    std::vector<SceneViolation> out;
    const std::size_t n = scene.size();
    if (scene.quats.size() != n || scene.logScales.size() != n ||
        scene.opacityLogits.size() != n || scene.sh.size() != n) {
        out.push_back({0, "attribute arrays have inconsistent lengths"});
        return out;
    }
    if (scene.shDegree < 0 || scene.shDegree > kMaxShDegree) {
        out.push_back({0, "unsupported SH degree " + std::to_string(scene.shDegree)});
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(scene.opacityLogits[i])) {
            out.push_back({i, "opacity is NaN"});
        }
        if (!scene.logScales[i].allFinite()) {
            out.push_back({i, "log-scale is not finite"});
        }
        Gaussian3D g = scene.gaussian(i);
        // Raw optimizer quaternions; only the direction matters.
        if (g.rotation.allFinite() && g.rotation.norm() > 0.0) {
            g.rotation.normalize();
        }
        g.opacity    = std::isnan(g.opacity) ? 0.0 : g.opacity;
        g.scale      = scene.logScales[i].allFinite() ? g.scale : Vec3::Ones();
        checkGaussian(i, g, out);
    }
    return out;
}

} // namespace dofsplat
