// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dofsplat {

struct AdamSettings {
    double beta1   = 0.9;
    double beta2   = 0.999;
    double epsilon = 1e-15;
};

/// Moment buffers for one parameter group laid out as rows of fixed width.
struct AdamGroup {
    int rowWidth = 1;
    std::vector<double> m;
    std::vector<double> v;
    /// Per-row step counts so rows that skip a step (sparse updates, injected rows) get their
    /// own bias correction.
    std::vector<std::uint64_t> steps;

    std::size_t
    rows() const {
        return steps.size();
    }
    bool operator==(const AdamGroup &) const = default;
};

/// Bias-corrected adaptive-moment optimizer over named row-structured parameter groups.
class Adam {
  public:
    explicit Adam(AdamSettings settings = {}) : mSettings(settings) {}

    /// Creates (or replaces) a zero-moment group with `rows` rows of `rowWidth` values.
    void addGroup(const std::string &name, int rowWidth, std::size_t rows);
    bool hasGroup(const std::string &name) const;
    const AdamGroup &group(const std::string &name) const;
    AdamGroup &group(const std::string &name);

    /// Dense update of every row.
    void step(const std::string &name, std::span<double> params, std::span<const double> grads,
              double lr);
    /// Update of one row only; the other rows keep their moments and counters.
    void stepRow(const std::string &name, std::size_t row, std::span<double> params,
                 std::span<const double> grads, double lr);

    /// Appends zero-moment rows.
    void appendRows(const std::string &name, std::size_t count);
    /// Keeps the rows whose mask entry is true, in order.
    void compactRows(const std::string &name, const std::vector<bool> &keep);

    const AdamSettings &
    settings() const {
        return mSettings;
    }
    const std::map<std::string, AdamGroup> &
    groups() const {
        return mGroups;
    }
    std::map<std::string, AdamGroup> &
    groups() {
        return mGroups;
    }

  private:
    void updateRow(AdamGroup &g, std::size_t row, double *params, const double *grads,
                   double lr);

    AdamSettings mSettings;
    std::map<std::string, AdamGroup> mGroups;
};

} // namespace dofsplat
