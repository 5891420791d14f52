// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/projection.hpp>

#include <algorithm>
#include <cmath>

namespace dofsplat {

double
depthOf(const Vec3 &center, const CameraPose &cam) {
    return cam.worldToCamera.row(2).head<3>().dot(center) + cam.worldToCamera(2, 3);
}

Eigen::Matrix<double, 2, 3>
projectionJacobian(const Vec3 &p, const Intrinsics &k) {
    const double invZ  = 1.0 / p.z();
    const double invZ2 = invZ * invZ;
    Eigen::Matrix<double, 2, 3> j;
    j << k.fx * invZ, 0.0, -k.fx * p.x() * invZ2, 0.0, k.fy * invZ, -k.fy * p.y() * invZ2;
    return j;
}

double
cutoffRadius(const Mat2 &cov, double sigmas) {
    const double mid  = 0.5 * (cov(0, 0) + cov(1, 1));
    const double disc = std::sqrt(std::max(0.0, mid * mid - (cov(0, 0) * cov(1, 1) -
                                                             cov(0, 1) * cov(1, 0))));
    return sigmas * std::sqrt(std::max(0.0, mid + disc));
}

Projected2D
projectGaussian(const Vec3 &center, const Mat3 &cov3d, const CameraPose &cam,
                const ProjectionSettings &settings) {
    Projected2D out;
    const Mat3 rot  = cam.rotation();
    const Vec3 pCam = rot * center + cam.translation();
    out.depth       = pCam.z();
    if (!(pCam.z() > settings.nearPlane)) {
        return out;
    }
    const auto &k = cam.intrinsics;
    out.mean      = Vec2(k.fx * pCam.x() / pCam.z() + k.cx, k.fy * pCam.y() / pCam.z() + k.cy);

    const Eigen::Matrix<double, 2, 3> t = projectionJacobian(pCam, k) * rot;
    out.cov                             = t * cov3d * t.transpose();
    out.cov(0, 1) = out.cov(1, 0) = 0.5 * (out.cov(0, 1) + out.cov(1, 0));
    out.cov(0, 0) += settings.dilation;
    out.cov(1, 1) += settings.dilation;

    out.radius = cutoffRadius(out.cov);
    out.visible = out.mean.x() + out.radius > 0.0 && out.mean.x() - out.radius < k.width &&
                  out.mean.y() + out.radius > 0.0 && out.mean.y() - out.radius < k.height;
    return out;
}

Projected2D
projectGaussian(const Gaussian3D &g, const CameraPose &cam, const ProjectionSettings &settings) {
    return projectGaussian(g.center, covarianceFrom(g.rotation.normalized(), g.scale), cam,
                           settings);
}

} // namespace dofsplat
