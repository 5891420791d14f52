// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage optimization. The warm-up stage fits the defocused references with the
// reconstruction loss. The refinement stage additionally renders the all-in-focus image, runs
// the ILN on the defocused render, and fits the mask composite of the two renders, with the
// mask supervised by the rendered CoC map.

#pragma once

#include <dofsplat/core.hpp>
#include <dofsplat/iln.hpp>
#include <dofsplat/losses.hpp>
#include <dofsplat/optimizer.hpp>
#include <dofsplat/rasterizer.hpp>
#include <dofsplat/scene_io.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace dofsplat {

struct Schedule {
    int totalIterations    = 40000;
    int warmupEnd          = 5000;
    int injectionIteration = 2000;
    int injectionCount     = 60000;
    int pruneInterval      = 1000;
    /// Multiplies every count above; desk runs use 0.01 - 0.05.
    double scale = 1.0;

    /// The schedule with the scale applied (rounded, scale reset to 1).
    Schedule scaled() const;
    /// Requires 0 <= injection < warmup end < total after scaling.
    void validate() const;
};

struct LearningRates {
    double means      = 5e-4;
    double meansFinal = 5e-6;
    double scales     = 1e-2;
    double focal      = 5e-2;
    double aperture   = 1e-2;
    double iln        = 5e-4;
    double rotation   = 1e-3;
    double opacity    = 5e-2;
    double color      = 2.5e-3;

    /// Center learning rate at iteration it of total (linear decay).
    double meansAt(int it, int total) const;
};

struct TrainConfig {
    Schedule schedule;
    LearningRates lr;
    LossWeights loss;
    RenderSettings raster;
    ILNConfig iln;
    /// false keeps the reconstruction loss in the refinement stage (no ILN, no composite).
    bool detailEnhancement = true;
    /// Freeze the scene and optimize only the per-view lens parameters.
    bool lensOnly     = false;
    bool optimizeLens = true;
    double pruneThreshold = 0.005;
    int logEvery          = 10;
    std::uint64_t seed    = 0;

    void validate() const;
};

struct MetricsRow {
    int iteration = 0;
    Stage stage   = Stage::Warmup;
    int view      = 0;
    double loss   = 0.0;
    LossParts parts;
    /// PSNR of the all-in-focus render against the view's ground truth, NaN when absent.
    double psnrAllInFocus = 0.0;
    std::size_t gaussians = 0;
};

struct TrainState {
    Scene scene;
    std::vector<LensParams> lenses;
    ILNParams iln;
    Adam optimizer;
    std::uint64_t iteration = 0;
};

/// Optimizer groups for the scene, the per-view lens rows and the ILN, plus seeded ILN weights.
TrainState makeTrainState(Scene scene, std::vector<LensParams> lenses, const TrainConfig &config);

/// Runs from state.iteration to the scaled total. Throws TrainingError on a non-finite loss or
/// gradient, naming the iteration and view. `onRow` sees every logged metrics row. A
/// non-negative stopAt ends the run early at that iteration; resuming from the saved state
/// continues exactly as the uninterrupted run would.
std::vector<MetricsRow> train(TrainState &state, const std::vector<TrainView> &views,
                              const TrainConfig &config,
                              const std::function<void(const MetricsRow &)> &onRow = {},
                              int stopAt = -1);

/// Adds `count` points uniform in the scene bounding box (each side pushed out by 5% of the
/// extent). Each copies scale, opacity and color from its nearest existing center and gets the
/// identity rotation. Returns the number added.
std::size_t injectPoints(Scene &scene, std::size_t count, std::mt19937_64 &rng);

/// Keep mask for Gaussians with opacity >= threshold.
std::vector<bool> pruneMask(const Scene &scene, double threshold);

/// Applies injection/pruning to the optimizer rows of every scene group.
void appendSceneRows(Adam &adam, std::size_t count);
void compactSceneRows(Adam &adam, const std::vector<bool> &keep);

std::string metricsCsv(const std::vector<MetricsRow> &rows);
void writeMetricsCsv(const std::filesystem::path &path, const std::vector<MetricsRow> &rows);

Checkpoint toCheckpoint(const TrainState &state, const std::vector<CameraPose> &poses,
                        const Vec3 &background);
TrainState fromCheckpoint(const Checkpoint &ckpt, const TrainConfig &config);

} // namespace dofsplat
