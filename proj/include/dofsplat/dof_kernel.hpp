// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Thin-lens circle-of-confusion math. CoC radii are in pixels: the aperture parameter Q
// (lens focal length times aperture diameter) absorbs the depth-to-pixel conversion.

#pragma once

#include <dofsplat/core.hpp>

namespace dofsplat::dof {

/// 2 ln 4: a Gaussian with variance R^2 / (2 ln 4) drops to 1/4 of its peak at radius R.
inline constexpr double kTwoLn4 = 2.0 * 1.3862943611198906;

/// Isotropic blur kernel fitted to a circle of confusion.
struct CoCKernel {
    double radius   = 0.0; ///< R, pixels
    double variance = 0.0; ///< a = R^2 / (2 ln 4), pixels^2
    Mat2 convolved  = Mat2::Zero(); ///< Sigma'' = Sigma' + a I
};

/// Full thin-lens CoC radius 0.5 * F * A * |z - f| / (z (f - F)).
/// Throws DomainError unless z > 0, f > F > 0 and A >= 0.
double cocRadiusFull(double lensFocalLength, double apertureDiameter, double focalDistance,
                     double depth);

/// Simplified CoC radius 0.5 * Q * |1/z - 1/f|. Throws DomainError if z <= 0, f <= 0 or Q < 0.
double cocRadius(double aperture, double focalDistance, double depth);

/// Variance of the Gaussian that best fits a uniform disk of radius R in L2: R^2 / (2 ln 4).
double kernelVariance(double radius);

/// Sigma' + a I.
Mat2 convolveCov(const Mat2 &cov, double variance);

/// Builds the complete kernel for one primitive.
CoCKernel makeKernel(const Mat2 &cov, double aperture, double focalDistance, double depth);

// Closed-form partials of the kernel variance a(R(Q, f, z)). All of them are defined as 0 at
// z == f where |1/z - 1/f| has its kink (R = 0 there, so this is a valid subgradient).

double daDf(double radius, double aperture, double focalDistance, double depth);
double daDQ(double radius, double focalDistance, double depth);
double daDz(double radius, double aperture, double focalDistance, double depth);

// Partials of the CoC radius itself; the CoC map is linear in R.

double dRDf(double aperture, double focalDistance, double depth);
double dRDQ(double focalDistance, double depth);
double dRDz(double aperture, double focalDistance, double depth);

} // namespace dofsplat::dof
