// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Central finite differences over every entry of an image.

#pragma once

#include <dofsplat/image.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace dofsplat::test_support {

inline Image
randomImage(std::mt19937_64 &rng, int w, int h, int c, double lo = 0.05, double hi = 0.95) {
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(w, h, c);
    for (double &v : img.data()) {
        v = u(rng);
    }
    return img;
}

inline double
relativeError(double analytic, double numeric, double floor = 1e-6) {
    const double diff = std::abs(analytic - numeric);
    if (diff < floor) {
        return 0.0;
    }
    return diff / std::max(std::abs(analytic), std::abs(numeric));
}

/// Worst relative error between `grad` and central differences of f around x.
inline double
worstGradError(const std::function<double(const Image &)> &f, const Image &x, const Image &grad,
               double h = 1e-6, double floor = 1e-8) {
    double worst = 0.0;
    Image probe  = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = probe.data()[i];
        probe.data()[i]   = keep + h;
        const double fp   = f(probe);
        probe.data()[i]   = keep - h;
        const double fm   = f(probe);
        probe.data()[i]   = keep;
        worst = std::max(worst, relativeError(grad.data()[i], (fp - fm) / (2.0 * h), floor));
    }
    return worst;
}

} // namespace dofsplat::test_support
