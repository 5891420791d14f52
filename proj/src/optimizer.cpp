// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/error.hpp>
#include <dofsplat/optimizer.hpp>

#include <cmath>
#include <utility>

namespace dofsplat {

void
Adam::addGroup(const std::string &name, int rowWidth, std::size_t rows) {
    if (rowWidth <= 0) {
        throw ValidationError("Adam: row width must be positive");
    }
    AdamGroup g;
    g.rowWidth = rowWidth;
    g.m.assign(rows * rowWidth, 0.0);
    g.v.assign(rows * rowWidth, 0.0);
    g.steps.assign(rows, 0);
    mGroups[name] = std::move(g);
}

bool
Adam::hasGroup(const std::string &name) const {
    return mGroups.count(name) != 0;
}

const AdamGroup &
Adam::group(const std::string &name) const {
    const auto it = mGroups.find(name);
    if (it == mGroups.end()) {
        throw StateError("Adam: unknown parameter group '" + name + "'");
    }
    return it->second;
}

AdamGroup &
Adam::group(const std::string &name) {
    return const_cast<AdamGroup &>(std::as_const(*this).group(name));
}

void
Adam::updateRow(AdamGroup &g, std::size_t row, double *params, const double *grads,
                double lr) {
    const std::uint64_t t = ++g.steps[row];
    const double c1       = 1.0 - std::pow(mSettings.beta1, static_cast<double>(t));
    const double c2       = 1.0 - std::pow(mSettings.beta2, static_cast<double>(t));
    const std::size_t off = row * g.rowWidth;
    for (int k = 0; k < g.rowWidth; ++k) {
        double &m = g.m[off + k];
        double &v = g.v[off + k];
        m         = mSettings.beta1 * m + (1.0 - mSettings.beta1) * grads[k];
        v         = mSettings.beta2 * v + (1.0 - mSettings.beta2) * grads[k] * grads[k];
        params[k] -= lr * (m / c1) / (std::sqrt(v / c2) + mSettings.epsilon);
    }
}

void
Adam::step(const std::string &name, std::span<double> params, std::span<const double> grads,
           double lr) {
    AdamGroup &g = group(name);
    if (params.size() != g.m.size() || grads.size() != g.m.size()) {
        throw ValidationError("Adam: parameter/gradient size does not match group '" + name +
                              "'");
    }
    for (std::size_t r = 0; r < g.rows(); ++r) {
        updateRow(g, r, params.data() + r * g.rowWidth, grads.data() + r * g.rowWidth, lr);
    }
}

void
Adam::stepRow(const std::string &name, std::size_t row, std::span<double> params,
              std::span<const double> grads, double lr) {
    AdamGroup &g = group(name);
    if (row >= g.rows() || params.size() != static_cast<std::size_t>(g.rowWidth) ||
        grads.size() != params.size()) {
        throw ValidationError("Adam: bad row update for group '" + name + "'");
    }
    updateRow(g, row, params.data(), grads.data(), lr);
}

void
Adam::appendRows(const std::string &name, std::size_t count) {
    AdamGroup &g = group(name);
    g.m.resize(g.m.size() + count * g.rowWidth, 0.0);
    g.v.resize(g.v.size() + count * g.rowWidth, 0.0);
    g.steps.resize(g.steps.size() + count, 0);
}

void
Adam::compactRows(const std::string &name, const std::vector<bool> &keep) {
    AdamGroup &g = group(name);
    if (keep.size() != g.rows()) {
        throw ValidationError("Adam: keep mask does not match group '" + name + "'");
    }
    std::size_t out = 0;
    for (std::size_t r = 0; r < keep.size(); ++r) {
        if (!keep[r]) {
            continue;
        }
        for (int k = 0; k < g.rowWidth; ++k) {
            g.m[out * g.rowWidth + k] = g.m[r * g.rowWidth + k];
            g.v[out * g.rowWidth + k] = g.v[r * g.rowWidth + k];
        }
        g.steps[out++] = g.steps[r];
    }
    g.m.resize(out * g.rowWidth);
    g.v.resize(out * g.rowWidth);
    g.steps.resize(out);
}

} // namespace dofsplat
