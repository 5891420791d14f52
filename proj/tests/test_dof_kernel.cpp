// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "kernel_fit_oracle.hpp"

#include <dofsplat/dof_kernel.hpp>
#include <dofsplat/error.hpp>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dofsplat;

namespace {

double
varianceOf(double Q, double f, double z) {
    return dof::kernelVariance(dof::cocRadius(Q, f, z));
}

double
central(auto &&fn, double x) {
    const double h = 1e-4 * std::max(1.0, std::abs(x));
    return (fn(x + h) - fn(x - h)) / (2.0 * h);
}

} // namespace

TEST(CocRadius, FullModel) {
    EXPECT_EQ(dof::cocRadiusFull(0.05, 2.0, 4.0, 4.0), 0.0);
    EXPECT_EQ(dof::cocRadiusFull(0.05, 0.0, 4.0, 2.0), 0.0);
    EXPECT_NEAR(dof::cocRadiusFull(0.05, 2.0, 4.0, 2.0), 0.5 * 0.05 * 2.0 * 2.0 / (2.0 * 3.95),
                1e-15);
    EXPECT_NEAR(dof::cocRadiusFull(0.05, 2.0, 4.0, 2.0), 0.0126582278, 1e-9);
    EXPECT_THROW(dof::cocRadiusFull(0.05, 2.0, 0.05, 2.0), DomainError);
    EXPECT_THROW(dof::cocRadiusFull(0.05, 2.0, 0.01, 2.0), DomainError);
}

TEST(CocRadius, Simplified) {
    EXPECT_DOUBLE_EQ(dof::cocRadius(100.0, 4.0, 2.0), 12.5);
    EXPECT_EQ(dof::cocRadius(0.0, 4.0, 2.0), 0.0);
    EXPECT_EQ(dof::cocRadius(0.0, 0.3, 17.0), 0.0);
    EXPECT_NEAR(dof::cocRadius(100.0, 4.0, 1e12), 12.5, 1e-9);
    EXPECT_THROW(dof::cocRadius(100.0, 4.0, 0.0), DomainError);
    EXPECT_THROW(dof::cocRadius(100.0, 4.0, -1.0), DomainError);
}

TEST(CocRadius, FullApproachesSimplifiedForSmallLensFocalLength) {
    const double Q = 50.0;
    for (double F : {1e-4, 1e-3, 1e-2}) {
        for (double f : {1.0, 3.0, 10.0}) {
            for (double z : {0.5, 2.0, 7.0, 30.0}) {
                if (z == f) {
                    continue;
                }
                const double full = dof::cocRadiusFull(F, Q / F, f, z);
                const double simp = dof::cocRadius(Q, f, z);
                EXPECT_LT(std::abs(full - simp) / simp, 2.0 * F / f) << F << " " << f << " " << z;
            }
        }
    }
}

TEST(KernelVariance, Values) {
    EXPECT_EQ(dof::kernelVariance(0.0), 0.0);
    EXPECT_NEAR(dof::kernelVariance(1.0), 0.36067376, 1e-8);
}

TEST(KernelVariance, MatchesGridSearchOfDiskFit) {
    for (double R : {0.5, 1.0, 3.0}) {
        const double oracle = test_support::gridSearchKernelVariance(R);
        EXPECT_NEAR(dof::kernelVariance(R), oracle, 1e-4 * R * R) << "R=" << R;
    }
}

TEST(ConvolveCov, AddsScaledIdentity) {
    Mat2 cov;
    cov << 3.0, 1.0, 1.0, 2.0;
    EXPECT_EQ(dof::convolveCov(cov, 0.0), cov);
    EXPECT_EQ(dof::convolveCov(Mat2::Identity(), 3.0), Mat2(Vec2(4.0, 4.0).asDiagonal()));

    const Mat2 out = dof::convolveCov(cov, 2.5);
    EXPECT_EQ(out - cov, 2.5 * Mat2::Identity());
    Eigen::SelfAdjointEigenSolver<Mat2> a(cov), b(out);
    for (int i = 0; i < 2; ++i) {
        const double align = std::abs(a.eigenvectors().col(i).dot(b.eigenvectors().col(i)));
        EXPECT_NEAR(align, 1.0, 1e-12);
    }
}

TEST(KernelDerivatives, SpecExamples) {
    const double Q = 100.0, f = 4.0, z = 2.0;
    const double R = dof::cocRadius(Q, f, z);
    ASSERT_DOUBLE_EQ(R, 12.5);

    const double df = dof::daDf(R, Q, f, z);
    EXPECT_NEAR(df, 28.18, 5e-3);
    EXPECT_NEAR(df, central([&](double v) { return varianceOf(Q, v, z); }, f), 1e-5 * df);

    const double dq = dof::daDQ(R, f, z);
    EXPECT_NEAR(dq, 1.1271, 5e-5);
    EXPECT_NEAR(dq, central([&](double v) { return varianceOf(v, f, z); }, Q), 1e-5 * dq);

    const double dz = dof::daDz(R, Q, f, z);
    EXPECT_NEAR(dz, -112.7, 5e-2);
    EXPECT_NEAR(dz, central([&](double v) { return varianceOf(Q, f, v); }, z),
                1e-5 * std::abs(dz));

    const double R8  = dof::cocRadius(Q, f, 8.0);
    const double dz8 = dof::daDz(R8, Q, f, 8.0);
    EXPECT_GT(dz8, 0.0);
    EXPECT_NEAR(dz8, central([&](double v) { return varianceOf(Q, f, v); }, 8.0), 1e-5 * dz8);
}

TEST(KernelDerivatives, ZeroAtFocalPlaneAndPinhole) {
    EXPECT_EQ(dof::daDf(0.0, 100.0, 4.0, 4.0), 0.0);
    EXPECT_EQ(dof::daDQ(0.0, 4.0, 4.0), 0.0);
    EXPECT_EQ(dof::daDz(0.0, 100.0, 4.0, 4.0), 0.0);
    EXPECT_EQ(dof::daDQ(dof::cocRadius(0.0, 4.0, 2.0), 4.0, 2.0), 0.0);
}

TEST(KernelDerivatives, SignFlipsAcrossFocalPlane) {
    // 1/z = 1/f +- 0.25 gives the same |1/z - 1/f| on both sides of f = 2.
    const double Q = 30.0, f = 2.0;
    const double zNear = 1.0 / (0.5 + 0.25), zFar = 1.0 / (0.5 - 0.25);
    const double Rn = dof::cocRadius(Q, f, zNear), Rf = dof::cocRadius(Q, f, zFar);
    ASSERT_NEAR(Rn, Rf, 1e-12);
    const double fdNear = central([&](double v) { return varianceOf(Q, v, zNear); }, f);
    const double fdFar  = central([&](double v) { return varianceOf(Q, v, zFar); }, f);
    EXPECT_GT(fdNear, 0.0);
    EXPECT_LT(fdFar, 0.0);
    EXPECT_NEAR(dof::daDf(Rn, Q, f, zNear), fdNear, 1e-5 * std::abs(fdNear));
    EXPECT_NEAR(dof::daDf(Rf, Q, f, zFar), fdFar, 1e-5 * std::abs(fdFar));
}

TEST(KernelDerivatives, MatchFiniteDifferencesOnRandomInputs) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uQ(0.5, 200.0), uf(0.3, 20.0), uz(0.2, 40.0);
    int checked = 0;
    while (checked < 500) {
        const double Q = uQ(rng), f = uf(rng), z = uz(rng);
        if (std::abs(1.0 / z - 1.0 / f) < 1e-2) {
            continue; // stay away from the kink at z == f
        }
        const double R  = dof::cocRadius(Q, f, z);
        const double fa = central([&](double v) { return varianceOf(Q, v, z); }, f);
        const double qa = central([&](double v) { return varianceOf(v, f, z); }, Q);
        const double za = central([&](double v) { return varianceOf(Q, f, v); }, z);
        EXPECT_LT(std::abs(dof::daDf(R, Q, f, z) - fa), 1e-5 * std::abs(fa));
        EXPECT_LT(std::abs(dof::daDQ(R, f, z) - qa), 1e-5 * std::abs(qa));
        EXPECT_LT(std::abs(dof::daDz(R, Q, f, z) - za), 1e-5 * std::abs(za));

        const double rf = central([&](double v) { return dof::cocRadius(Q, v, z); }, f);
        const double rz = central([&](double v) { return dof::cocRadius(Q, f, v); }, z);
        EXPECT_LT(std::abs(dof::dRDf(Q, f, z) - rf), 1e-5 * std::abs(rf));
        EXPECT_LT(std::abs(dof::dRDz(Q, f, z) - rz), 1e-5 * std::abs(rz));
        EXPECT_NEAR(dof::dRDQ(f, z), 0.5 * std::abs(1.0 / z - 1.0 / f), 1e-15);
        ++checked;
    }
}

TEST(KernelVariance, MonotoneInAperture) {
    for (double z : {0.5, 2.0, 9.0}) {
        double prev = -1.0;
        for (double Q = 0.0; Q < 300.0; Q += 7.5) {
            const double a = varianceOf(Q, 3.0, z);
            EXPECT_GE(a, prev);
            prev = a;
        }
    }
}

TEST(CoCKernel, ZeroRadiusLeavesCovarianceUnchanged) {
    Mat2 cov;
    cov << 2.0, 0.3, 0.3, 1.0;
    const auto k = dof::makeKernel(cov, 50.0, 3.0, 3.0);
    EXPECT_EQ(k.radius, 0.0);
    EXPECT_EQ(k.variance, 0.0);
    EXPECT_EQ(k.convolved, cov);
}
