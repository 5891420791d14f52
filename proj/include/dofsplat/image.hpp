// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dofsplat {

/// Row-major, channel-interleaved image of doubles (HxWxC).
class Image {
  public:
    Image() = default;
    Image(int width, int height, int channels, double fill = 0.0)
        : mWidth(width), mHeight(height), mChannels(channels),
          mData(static_cast<std::size_t>(width) * height * channels, fill) {}

    int
    width() const {
        return mWidth;
    }
    int
    height() const {
        return mHeight;
    }
    int
    channels() const {
        return mChannels;
    }
    std::size_t
    pixelCount() const {
        return static_cast<std::size_t>(mWidth) * mHeight;
    }
    std::size_t
    size() const {
        return mData.size();
    }
    bool
    empty() const {
        return mData.empty();
    }

    double &
    at(int x, int y, int c = 0) {
        return mData[(static_cast<std::size_t>(y) * mWidth + x) * mChannels + c];
    }
    double
    at(int x, int y, int c = 0) const {
        return mData[(static_cast<std::size_t>(y) * mWidth + x) * mChannels + c];
    }

    std::span<double>
    data() {
        return mData;
    }
    std::span<const double>
    data() const {
        return mData;
    }

    bool
    sameShape(const Image &other) const {
        return mWidth == other.mWidth && mHeight == other.mHeight && mChannels == other.mChannels;
    }

    bool
    operator==(const Image &other) const = default;

  private:
    int mWidth    = 0;
    int mHeight   = 0;
    int mChannels = 0;
    std::vector<double> mData;
};

/// Throws ValidationError unless a and b share width, height and channel count.
void requireSameShape(const Image &a, const Image &b, const char *what);

/// Quantizes a linear [0,1] value to 8 bits with rounding (values are clamped first).
std::uint8_t toByte(double v);

/// Writes an 8-bit image. The format is chosen from the extension: .ppm (ASCII P3, RGB only,
/// the bit-exact golden format), .pgm (ASCII P2, single channel) or .png (RGB or gray).
void writeImage(const std::filesystem::path &path, const Image &image);

/// Reads a .ppm/.pgm (ASCII) or .png file into a linear [0,1] image.
Image readImage(const std::filesystem::path &path);

/// Encodes an 8-bit PNG in memory (1 or 3 channels).
std::string encodePng(const Image &image);

/// Decodes an in-memory PNG into a linear [0,1] image (gray or RGB; alpha is dropped).
Image decodePng(std::span<const std::uint8_t> bytes);

/// Peak signal-to-noise ratio in dB for images in [0,1]. Identical images give +inf.
double psnr(const Image &a, const Image &b);

} // namespace dofsplat
