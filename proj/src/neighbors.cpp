// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/neighbors.hpp>
#include <dofsplat/parallel.hpp>

#include <algorithm>
#include <limits>
#include <numeric>

namespace dofsplat {

PointIndex::PointIndex(std::vector<Vec3> points) : mPoints(std::move(points)) {
    mOrder.resize(mPoints.size());
    std::iota(mOrder.begin(), mOrder.end(), std::size_t{0});
    std::sort(mOrder.begin(), mOrder.end(), [&](std::size_t a, std::size_t b) {
        return mPoints[a][0] < mPoints[b][0] || (mPoints[a][0] == mPoints[b][0] && a < b);
    });
    mSortedX.resize(mOrder.size());
    for (std::size_t i = 0; i < mOrder.size(); ++i) {
        mSortedX[i] = mPoints[mOrder[i]][0];
    }
}

std::vector<Neighbor>
PointIndex::nearest(const Vec3 &query, std::size_t k, std::size_t exclude) const {
    std::vector<Neighbor> best;
    if (k == 0 || mPoints.empty()) {
        return best;
    }
    auto before = [](const Neighbor &a, const Neighbor &b) {
        return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    };
    auto consider = [&](std::size_t idx) {
        if (idx == exclude) {
            return;
        }
        const Neighbor cand{idx, (mPoints[idx] - query).norm()};
        if (best.size() < k) {
            best.insert(std::upper_bound(best.begin(), best.end(), cand, before), cand);
        } else if (before(cand, best.back())) {
            best.pop_back();
            best.insert(std::upper_bound(best.begin(), best.end(), cand, before), cand);
        }
    };
    auto bound = [&] {
        return best.size() < k ? std::numeric_limits<double>::infinity() : best.back().distance;
    };

    const auto start = static_cast<std::ptrdiff_t>(
        std::lower_bound(mSortedX.begin(), mSortedX.end(), query[0]) - mSortedX.begin());
    std::ptrdiff_t lo = start - 1, hi = start;
    const auto n      = static_cast<std::ptrdiff_t>(mSortedX.size());
    while (lo >= 0 || hi < n) {
        const double dLo = lo >= 0 ? query[0] - mSortedX[lo] : std::numeric_limits<double>::infinity();
        const double dHi = hi < n ? mSortedX[hi] - query[0] : std::numeric_limits<double>::infinity();
        // Ties on the gap are still visited so equal-distance neighbors resolve by index.
        if (std::min(dLo, dHi) > bound()) {
            break;
        }
        if (dLo <= dHi) {
            consider(mOrder[lo--]);
        } else {
            consider(mOrder[hi++]);
        }
    }
    return best;
}

std::vector<double>
meanNeighborDistance(const std::vector<Vec3> &points, std::size_t k) {
    const PointIndex index(points);
    std::vector<double> out(points.size(), 0.0);
    parallelFor(static_cast<std::ptrdiff_t>(points.size()), [&](std::ptrdiff_t i) {
        const auto nn = index.nearest(points[i], k, static_cast<std::size_t>(i));
        double sum    = 0.0;
        for (const Neighbor &n : nn) {
            sum += n.distance;
        }
        out[i] = nn.empty() ? 0.0 : sum / nn.size();
    });
    return out;
}

} // namespace dofsplat
