// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// JSON configuration with dotted keys. Nested objects are flattened, so
// {"train": {"scale": 0.01}} and {"train.scale": 0.01} are equivalent. Unknown keys are
// rejected; relative paths are resolved against the config file's directory.

#pragma once

#include <dofsplat/trainer.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dofsplat {

struct AppConfig {
    std::filesystem::path points;
    std::filesystem::path views;
    std::filesystem::path checkpoint = "checkpoint.dsp";
    std::filesystem::path metrics    = "metrics.csv";
    double tau                       = 15.0;
    int shDegree                     = 0;
    TrainConfig train;
    int serveWorkers   = 4;
    int servePort      = 8080;
    int serveCacheSize = 64;
};

/// Parses JSON text; relative paths are resolved against baseDir.
AppConfig parseConfig(const std::string &text, const std::filesystem::path &baseDir = {});
AppConfig loadConfig(const std::filesystem::path &path);

/// Every accepted key with a one-line description, in documentation order.
std::vector<std::pair<std::string, std::string>> configKeys();

} // namespace dofsplat
