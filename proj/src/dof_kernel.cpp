// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/dof_kernel.hpp>
#include <dofsplat/error.hpp>

#include <cmath>

namespace dofsplat::dof {

double
cocRadiusFull(double lensFocalLength, double apertureDiameter, double focalDistance,
              double depth) {
    if (!(depth > 0.0)) {
        throw DomainError("cocRadiusFull: depth must be positive");
    }
    if (!(lensFocalLength > 0.0) || !(focalDistance > lensFocalLength)) {
        throw DomainError("cocRadiusFull: requires f > F > 0");
    }
    if (!(apertureDiameter >= 0.0)) {
        throw DomainError("cocRadiusFull: aperture diameter must be non-negative");
    }
    return 0.5 * lensFocalLength * apertureDiameter * std::abs(depth - focalDistance) /
           (depth * (focalDistance - lensFocalLength));
}

double
cocRadius(double aperture, double focalDistance, double depth) {
    if (!(depth > 0.0)) {
        throw DomainError("cocRadius: depth must be positive");
    }
    if (!(focalDistance > 0.0)) {
        throw DomainError("cocRadius: focal distance must be positive");
    }
    if (!(aperture >= 0.0)) {
        throw DomainError("cocRadius: aperture parameter must be non-negative");
    }
    return 0.5 * aperture * std::abs(1.0 / depth - 1.0 / focalDistance);
}

double
kernelVariance(double radius) {
    return radius * radius / kTwoLn4;
}

Mat2
convolveCov(const Mat2 &cov, double variance) {
    Mat2 out = cov;
    out(0, 0) += variance;
    out(1, 1) += variance;
    return out;
}

CoCKernel
makeKernel(const Mat2 &cov, double aperture, double focalDistance, double depth) {
    CoCKernel k;
    k.radius    = cocRadius(aperture, focalDistance, depth);
    k.variance  = kernelVariance(k.radius);
    k.convolved = convolveCov(cov, k.variance);
    return k;
}

double
daDf(double radius, double aperture, double focalDistance, double depth) {
    if (depth == focalDistance) {
        return 0.0;
    }
    const double mag = radius * aperture / (kTwoLn4 * focalDistance * focalDistance);
    return depth > focalDistance ? -mag : mag;
}

double
daDQ(double radius, double focalDistance, double depth) {
    if (depth == focalDistance) {
        return 0.0;
    }
    return radius / kTwoLn4 * std::abs(1.0 / depth - 1.0 / focalDistance);
}

double
daDz(double radius, double aperture, double focalDistance, double depth) {
    if (depth == focalDistance) {
        return 0.0;
    }
    const double mag = radius * aperture / (kTwoLn4 * depth * depth);
    return depth < focalDistance ? -mag : mag;
}

double
dRDf(double aperture, double focalDistance, double depth) {
    if (depth == focalDistance) {
        return 0.0;
    }
    const double mag = 0.5 * aperture / (focalDistance * focalDistance);
    return depth > focalDistance ? -mag : mag;
}

double
dRDQ(double focalDistance, double depth) {
    if (depth == focalDistance) {
        return 0.0;
    }
    return 0.5 * std::abs(1.0 / depth - 1.0 / focalDistance);
}

double
dRDz(double aperture, double focalDistance, double depth) {
    if (depth == focalDistance) {
        return 0.0;
    }
    const double mag = 0.5 * aperture / (depth * depth);
    return depth < focalDistance ? -mag : mag;
}

} // namespace dofsplat::dof
