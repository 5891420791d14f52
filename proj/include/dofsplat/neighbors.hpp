// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <dofsplat/core.hpp>

#include <cstddef>
#include <vector>

namespace dofsplat {

struct Neighbor {
    std::size_t index = 0;
    double distance   = 0.0;
};

/// Exact k-nearest-neighbor queries over a fixed point set. Points are kept sorted along x and
/// each query sweeps outward until the x gap exceeds the current k-th distance.
class PointIndex {
  public:
    explicit PointIndex(std::vector<Vec3> points);

    /// Up to k neighbors sorted by (distance, index). `exclude` skips one point index, used
    /// when querying a member of the set against the others.
    std::vector<Neighbor> nearest(const Vec3 &query, std::size_t k,
                                  std::size_t exclude = static_cast<std::size_t>(-1)) const;

    std::size_t
    size() const {
        return mPoints.size();
    }

  private:
    std::vector<Vec3> mPoints;
    std::vector<std::size_t> mOrder;
    std::vector<double> mSortedX;
};

/// Mean distance to the (up to) k nearest other points, for every point.
std::vector<double> meanNeighborDistance(const std::vector<Vec3> &points, std::size_t k);

} // namespace dofsplat
