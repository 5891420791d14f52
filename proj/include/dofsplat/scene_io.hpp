// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Persistence: the binary checkpoint container, PLY point clouds and the JSON view container.
//
// Checkpoint layout (little endian, doubles stored bit-exact):
//   "DOFSPLAT" u32 version u32 reserved
//   u32 shDegree u64 N, N x {mean[3] quat[4] logScale[3] opacityLogit sh[12]}
//   background[3]
//   u64 M, M x {W[16 row-major] fx fy cx cy i32 width i32 height f Q}
//   u8 hasIln [i32 pixelFreqs viewFreqs width1 width2 width3, u64 count, double[count]]
//   u64 groups, groups x {u32 len name[len] i32 rowWidth u64 rows u64 steps[rows]
//                         m[rows*rowWidth] v[rows*rowWidth]}
//   u64 iteration

#pragma once

#include <dofsplat/core.hpp>
#include <dofsplat/iln.hpp>
#include <dofsplat/optimizer.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dofsplat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Scene scene;
    Vec3 background = Vec3::Zero();
    std::vector<CameraPose> poses;
    std::vector<LensParams> lenses;
    std::optional<ILNParams> iln;
    std::map<std::string, AdamGroup> optimizer;
    std::uint64_t iteration = 0;
};

std::string encodeCheckpoint(const Checkpoint &ckpt);
/// Throws FormatError (with the byte offset) on bad magic, newer version or truncation.
Checkpoint decodeCheckpoint(std::span<const std::uint8_t> bytes);

void saveCheckpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint loadCheckpoint(const std::filesystem::path &path);

struct PointCloud {
    std::vector<Vec3> positions;
    /// Linear [0,1] RGB; empty when the file has no color properties.
    std::vector<Vec3> colors;
};

/// ASCII or binary little-endian PLY; reads x, y, z and optional red, green, blue of the
/// vertex element.
PointCloud readPly(const std::filesystem::path &path);
void writePly(const std::filesystem::path &path, const PointCloud &cloud, bool binary = false);

inline constexpr double kInitialOpacity = 0.1;
inline constexpr double kDefaultGray    = 0.5;

/// Degree-0 Gaussians at the given points: isotropic scale = mean distance to the 3 nearest
/// neighbors, opacity 0.1, gray where no color is given.
Scene sceneFromPoints(const PointCloud &cloud);
Scene loadPlyPoints(const std::filesystem::path &path);

/// One entry of the JSON view container.
struct ViewEntry {
    int index = 0;
    CameraPose pose;
    std::optional<double> focalDistance;
    std::optional<double> aperture;
    /// Paths relative to the JSON file's directory.
    std::optional<std::string> image;
    std::optional<std::string> allInFocus;
};

std::vector<ViewEntry> loadViews(const std::filesystem::path &path);
void saveViews(const std::filesystem::path &path, const std::vector<ViewEntry> &views);

/// Views with their reference images loaded. Lens parameters come from the file when both f
/// and Q are present, otherwise they are left at their defaults for camera initialization.
struct LoadedViews {
    std::vector<TrainView> views;
    /// True when every entry supplied both f and Q.
    bool hasLens = false;
};
LoadedViews loadTrainViews(const std::filesystem::path &path);

} // namespace dofsplat
