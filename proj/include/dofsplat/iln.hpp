// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// In-focus localization network: four 3x3 convolutions (stride 1, zero padding 1) with
// leaky-ReLU between layers and a sigmoid on the single output channel. Input is the rendered
// defocused image (3), depth (1) and CoC (1) maps; a sin/cos positional encoding of the pixel
// coordinates and view index is concatenated to the second layer's output before layer three.

#pragma once

#include <dofsplat/image.hpp>

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace dofsplat {

struct PEConfig {
    int pixelFrequencies = 10;
    int viewFrequencies  = 4;

    int
    channels() const {
        return 4 * pixelFrequencies + 2 * viewFrequencies;
    }
};

struct ILNConfig {
    int width1 = 48;
    int width2 = 16;
    int width3 = 16;
    PEConfig pe;

    void validate() const;
};

inline constexpr int kIlnInputChannels = 5;
inline constexpr int kIlnLayers        = 4;
inline constexpr double kLeakySlope    = 0.01;

/// Channel-major feature map: rows are channels, columns are pixels in row-major order.
using FeatureMap = Eigen::MatrixXd;

struct ConvLayer {
    int in  = 0;
    int out = 0;
    /// out x (in * 9); column index is (ic * 3 + ky) * 3 + kx.
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
};

struct ILNParams {
    ILNConfig config;
    std::array<ConvLayer, kIlnLayers> layers;

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases from a seeded generator.
    static ILNParams initialize(const ILNConfig &config, std::uint64_t seed);
    /// All weights and biases zero.
    static ILNParams zeros(const ILNConfig &config);

    std::size_t parameterCount() const;
    /// Flat views in a fixed order (w1, b1, ..., w4, b4); used by the optimizer and checkpoints.
    void flatten(std::vector<double> &out) const;
    void unflatten(const std::vector<double> &in);
    bool allFinite() const;
};

/// channels() x H*W encoding. Pixel centers map to [-1, 1]; view m of M maps to
/// 2 m / (M - 1) - 1 (0 when M == 1). Frequencies are 2^k * pi.
FeatureMap positionalEncoding(int width, int height, int view, int viewCount,
                              const PEConfig &config = {});

/// Forward intermediates for the backward pass.
struct ILNCache {
    int width  = 0;
    int height = 0;
    std::array<FeatureMap, kIlnLayers> inputs;
    std::array<FeatureMap, kIlnLayers> preActivations;
};

struct ILNOutput {
    Image mask;
    std::shared_ptr<const ILNCache> cache;
};

struct ILNGradients {
    std::array<ConvLayer, kIlnLayers> layers;
    Image dImage;
    Image dDepth;
    Image dCoc;
};

/// pe must come from positionalEncoding() for the same size and config.
ILNOutput ilnForward(const ILNParams &params, const Image &image, const Image &depth,
                     const Image &coc, const FeatureMap &pe);

/// Backpropagates dL/dmask. Throws StateError when the output carries no cache.
ILNGradients ilnBackward(const ILNParams &params, const ILNOutput &forward, const Image &dMask);

} // namespace dofsplat
