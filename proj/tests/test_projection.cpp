// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"

#include <dofsplat/projection.hpp>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <random>

using namespace dofsplat;

TEST(Projection, OnAxisIsotropic) {
    const double F = 50.0, sigma = 0.1, z = 2.0;
    CameraPose cam = test_support::lookingDownZ(64, 48, F);
    const Projected2D p = projectGaussian(Vec3(0, 0, z), sigma * sigma * Mat3::Identity(), cam);
    EXPECT_TRUE(p.visible);
    EXPECT_DOUBLE_EQ(p.mean.x(), 32.0);
    EXPECT_DOUBLE_EQ(p.mean.y(), 24.0);
    // J = diag(F/z, F/z) on the optical axis; the dilation is added on top.
    const double expected = (F * sigma / z) * (F * sigma / z) + kLowPassDilation;
    EXPECT_NEAR(p.cov(0, 0), expected, 1e-12);
    EXPECT_NEAR(p.cov(1, 1), expected, 1e-12);
    EXPECT_NEAR(p.cov(0, 1), 0.0, 1e-15);
    EXPECT_NEAR(p.depth, z, 1e-15);
}

TEST(Projection, BehindCameraIsInvisible) {
    CameraPose cam = test_support::lookingDownZ(32, 32, 30.0);
    EXPECT_FALSE(projectGaussian(Vec3(0, 0, -1), Mat3::Identity() * 0.01, cam).visible);
    EXPECT_FALSE(projectGaussian(Vec3(0, 0, 0.005), Mat3::Identity() * 0.01, cam).visible);
    EXPECT_FALSE(projectGaussian(Vec3(50, 0, 1), Mat3::Identity() * 1e-4, cam).visible);
}

TEST(Projection, RigidTranslationInvariance) {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
        CameraPose cam = test_support::randomPose(rng, 40, 30, 35.0);
        const Vec3 c(0.1, -0.2, 3.0);
        Mat3 cov;
        cov << 0.02, 0.005, 0.0, 0.005, 0.03, 0.001, 0.0, 0.001, 0.01;
        const Vec3 offset(0.7 * t, -1.3, 2.1);
        CameraPose moved                          = cam;
        // Camera at position p + offset: t' = t - R offset.
        moved.worldToCamera.topRightCorner<3, 1>() = cam.translation() - cam.rotation() * offset;
        const Projected2D a = projectGaussian(c, cov, cam);
        const Projected2D b = projectGaussian(c + offset, cov, moved);
        EXPECT_LT((a.mean - b.mean).norm(), 1e-9);
        EXPECT_LT((a.cov - b.cov).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(a.depth, b.depth, 1e-12);
        EXPECT_EQ(a.visible, b.visible);
    }
}

TEST(Projection, DepthOf) {
    CameraPose cam;
    EXPECT_EQ(depthOf(Vec3(0, 0, 5), cam), 5.0);
    cam.worldToCamera(2, 3) = -1.0;
    EXPECT_EQ(depthOf(Vec3(0, 0, 5), cam), 4.0);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    for (int t = 0; t < 50; ++t) {
        const CameraPose pose = test_support::randomPose(rng, 8, 8, 10.0);
        const Vec3 u(n(rng), n(rng), n(rng));
        const Eigen::Vector4d h = pose.worldToCamera * Eigen::Vector4d(u.x(), u.y(), u.z(), 1.0);
        EXPECT_NEAR(depthOf(u, pose), h.z(), 1e-12);
    }
}

TEST(Projection, CovarianceSymmetricAndDilationRaisesEigenvalues) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    for (int t = 0; t < 100; ++t) {
        const CameraPose cam = test_support::randomPose(rng, 32, 32, 40.0);
        const Mat3 cov3 = covarianceFrom(Vec4(n(rng), n(rng), n(rng), n(rng)).normalized(),
                                         Vec3(0.05, 0.1, 0.02).array() * (1.0 + 0.5 * std::abs(n(rng))));
        const Vec3 c(0.3 * n(rng), 0.3 * n(rng), 3.0 + std::abs(n(rng)));
        const Projected2D withDil = projectGaussian(c, cov3, cam);
        const Projected2D without = projectGaussian(c, cov3, cam, ProjectionSettings{0.01, 0.0});
        EXPECT_LT(std::abs(withDil.cov(0, 1) - withDil.cov(1, 0)), 1e-12);
        Eigen::SelfAdjointEigenSolver<Mat2> a(without.cov), b(withDil.cov);
        EXPECT_GE(a.eigenvalues()[0], -1e-12);
        for (int i = 0; i < 2; ++i) {
            EXPECT_GE(b.eigenvalues()[i], a.eigenvalues()[i]);
        }
    }
}

TEST(Projection, CutoffRadius) {
    Mat2 cov;
    cov << 4.0, 0.0, 0.0, 1.0;
    EXPECT_DOUBLE_EQ(cutoffRadius(cov), 6.0);
}
