// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/error.hpp>
#include <dofsplat/iln.hpp>
#include <dofsplat/parallel.hpp>

#include <cmath>
#include <numbers>
#include <random>

namespace dofsplat {

void
ILNConfig::validate() const {
    if (width1 <= 0 || width2 <= 0 || width3 <= 0) {
        throw ValidationError("ILN layer widths must be positive");
    }
    if (pe.pixelFrequencies < 0 || pe.viewFrequencies < 0) {
        throw ValidationError("positional encoding frequency counts must be non-negative");
    }
}

namespace {

std::array<std::pair<int, int>, kIlnLayers>
layerShapes(const ILNConfig &c) {
    return {{{kIlnInputChannels, c.width1},
             {c.width1, c.width2},
             {c.width2 + c.pe.channels(), c.width3},
             {c.width3, 1}}};
}

} // namespace

ILNParams
ILNParams::zeros(const ILNConfig &config) {
    config.validate();
    ILNParams p;
    p.config          = config;
    const auto shapes = layerShapes(config);
    for (int l = 0; l < kIlnLayers; ++l) {
        auto &layer  = p.layers[l];
        layer.in     = shapes[l].first;
        layer.out    = shapes[l].second;
        layer.weight = Eigen::MatrixXd::Zero(layer.out, layer.in * 9);
        layer.bias   = Eigen::VectorXd::Zero(layer.out);
    }
    return p;
}

ILNParams
ILNParams::initialize(const ILNConfig &config, std::uint64_t seed) {
    ILNParams p = zeros(config);
    std::mt19937_64 rng(seed);
    for (auto &layer : p.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in * 9));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
            layer.weight.data()[i] = u(rng);
        }
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
            layer.bias[i] = u(rng);
        }
    }
    return p;
}

std::size_t
ILNParams::parameterCount() const {
    std::size_t n = 0;
    for (const auto &layer : layers) {
        n += layer.weight.size() + layer.bias.size();
    }
    return n;
}

void
ILNParams::flatten(std::vector<double> &out) const {
    out.clear();
    out.reserve(parameterCount());
    for (const auto &layer : layers) {
        out.insert(out.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
        out.insert(out.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    }
}

void
ILNParams::unflatten(const std::vector<double> &in) {
    if (in.size() != parameterCount()) {
        throw ValidationError("ILN parameter vector has the wrong length");
    }
    std::size_t k = 0;
    for (auto &layer : layers) {
        std::copy_n(in.begin() + k, layer.weight.size(), layer.weight.data());
        k += layer.weight.size();
        std::copy_n(in.begin() + k, layer.bias.size(), layer.bias.data());
        k += layer.bias.size();
    }
}

bool
ILNParams::allFinite() const {
    for (const auto &layer : layers) {
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
            return false;
        }
    }
    return true;
}

FeatureMap
positionalEncoding(int width, int height, int view, int viewCount, const PEConfig &config) {
    if (width <= 0 || height <= 0 || viewCount <= 0 || view < 0 || view >= viewCount) {
        throw ValidationError("positionalEncoding: invalid size or view index");
    }
    FeatureMap pe(config.channels(), static_cast<Eigen::Index>(width) * height);
    const double v = viewCount == 1 ? 0.0 : 2.0 * view / (viewCount - 1) - 1.0;
    for (int y = 0; y < height; ++y) {
        const double cy = 2.0 * (y + 0.5) / height - 1.0;
        for (int x = 0; x < width; ++x) {
            const double cx     = 2.0 * (x + 0.5) / width - 1.0;
            const Eigen::Index p = static_cast<Eigen::Index>(y) * width + x;
            int ch              = 0;
            for (int k = 0; k < config.pixelFrequencies; ++k) {
                const double freq = std::ldexp(std::numbers::pi, k);
                pe(ch++, p)       = std::sin(freq * cx);
                pe(ch++, p)       = std::cos(freq * cx);
                pe(ch++, p)       = std::sin(freq * cy);
                pe(ch++, p)       = std::cos(freq * cy);
            }
            for (int k = 0; k < config.viewFrequencies; ++k) {
                const double freq = std::ldexp(std::numbers::pi, k);
                pe(ch++, p)       = std::sin(freq * v);
                pe(ch++, p)       = std::cos(freq * v);
            }
        }
    }
    return pe;
}

namespace {

FeatureMap
im2col(const FeatureMap &in, int w, int h) {
    const Eigen::Index channels = in.rows();
    FeatureMap col              = FeatureMap::Zero(channels * 9, in.cols());
    parallelFor(channels, [&](std::ptrdiff_t c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const Eigen::Index row = (c * 3 + ky) * 3 + kx;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) {
                        continue;
                    }
                    for (int x = 0; x < w; ++x) {
                        const int sx = x + kx - 1;
                        if (sx >= 0 && sx < w) {
                            col(row, static_cast<Eigen::Index>(y) * w + x) =
                                in(c, static_cast<Eigen::Index>(sy) * w + sx);
                        }
                    }
                }
            }
        }
    });
    return col;
}

/// Adjoint of im2col.
FeatureMap
col2im(const FeatureMap &col, Eigen::Index channels, int w, int h) {
    FeatureMap out = FeatureMap::Zero(channels, col.cols());
    parallelFor(channels, [&](std::ptrdiff_t c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const Eigen::Index row = (c * 3 + ky) * 3 + kx;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) {
                        continue;
                    }
                    for (int x = 0; x < w; ++x) {
                        const int sx = x + kx - 1;
                        if (sx >= 0 && sx < w) {
                            out(c, static_cast<Eigen::Index>(sy) * w + sx) +=
                                col(row, static_cast<Eigen::Index>(y) * w + x);
                        }
                    }
                }
            }
        }
    });
    return out;
}

double
leaky(double z) {
    return z > 0.0 ? z : kLeakySlope * z;
}

double
leakyGrad(double z) {
    return z > 0.0 ? 1.0 : kLeakySlope;
}

double
stableSigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void
requirePlane(const Image &img, int w, int h, int channels, const char *what) {
    if (img.width() != w || img.height() != h || img.channels() != channels) {
        throw ValidationError(std::string("ilnForward: ") + what + " has the wrong shape");
    }
}

} // namespace

ILNOutput
ilnForward(const ILNParams &params, const Image &image, const Image &depth, const Image &coc,
           const FeatureMap &pe) {
    const int w = image.width(), h = image.height();
    requirePlane(image, w, h, 3, "image");
    requirePlane(depth, w, h, 1, "depth map");
    requirePlane(coc, w, h, 1, "CoC map");
    const Eigen::Index n = static_cast<Eigen::Index>(w) * h;
    if (n == 0) {
        throw ValidationError("ilnForward: empty input");
    }
    if (pe.rows() != params.config.pe.channels() || pe.cols() != n) {
        throw ValidationError("ilnForward: positional encoding does not match the input");
    }

    auto cache    = std::make_shared<ILNCache>();
    cache->width  = w;
    cache->height = h;

    FeatureMap x(kIlnInputChannels, n);
    for (Eigen::Index p = 0; p < n; ++p) {
        x(0, p) = image.data()[p * 3 + 0];
        x(1, p) = image.data()[p * 3 + 1];
        x(2, p) = image.data()[p * 3 + 2];
        x(3, p) = depth.data()[p];
        x(4, p) = coc.data()[p];
    }
    for (int l = 0; l < kIlnLayers; ++l) {
        const ConvLayer &layer = params.layers[l];
        if (l == 2) {
            FeatureMap joined(x.rows() + pe.rows(), n);
            joined << x, pe;
            x = std::move(joined);
        }
        FeatureMap z = layer.weight * im2col(x, w, h);
        z.colwise() += layer.bias;
        cache->inputs[l]         = std::move(x);
        cache->preActivations[l] = z;
        x = (l + 1 < kIlnLayers) ? FeatureMap(z.unaryExpr(&leaky)) : FeatureMap(z);
    }

    ILNOutput out;
    out.mask = Image(w, h, 1);
    for (Eigen::Index p = 0; p < n; ++p) {
        out.mask.data()[p] = stableSigmoid(x(0, p));
    }
    out.cache = std::move(cache);
    return out;
}

ILNGradients
ilnBackward(const ILNParams &params, const ILNOutput &forward, const Image &dMask) {
    if (!forward.cache) {
        throw StateError("ilnBackward: forward output carries no intermediates");
    }
    const ILNCache &cache = *forward.cache;
    const int w = cache.width, h = cache.height;
    if (dMask.width() != w || dMask.height() != h || dMask.channels() != 1) {
        throw ValidationError("ilnBackward: upstream gradient has the wrong shape");
    }
    const Eigen::Index n = static_cast<Eigen::Index>(w) * h;

    ILNGradients g;
    FeatureMap dz(1, n);
    for (Eigen::Index p = 0; p < n; ++p) {
        const double s = forward.mask.data()[p];
        dz(0, p)       = dMask.data()[p] * s * (1.0 - s);
    }
    FeatureMap dx;
    for (int l = kIlnLayers - 1; l >= 0; --l) {
        const ConvLayer &layer = params.layers[l];
        const FeatureMap col   = im2col(cache.inputs[l], w, h);
        g.layers[l].in         = layer.in;
        g.layers[l].out        = layer.out;
        g.layers[l].weight     = dz * col.transpose();
        g.layers[l].bias       = dz.rowwise().sum();
        dx = col2im(layer.weight.transpose() * dz, layer.in, w, h);
        if (l == 0) {
            break;
        }
        if (l == 2) {
            dx = FeatureMap(dx.topRows(params.config.width2));
        }
        const FeatureMap &zPrev = cache.preActivations[l - 1];
        dz = dx.cwiseProduct(FeatureMap(zPrev.unaryExpr(&leakyGrad)));
    }

    g.dImage = Image(w, h, 3);
    g.dDepth = Image(w, h, 1);
    g.dCoc   = Image(w, h, 1);
    for (Eigen::Index p = 0; p < n; ++p) {
        g.dImage.data()[p * 3 + 0] = dx(0, p);
        g.dImage.data()[p * 3 + 1] = dx(1, p);
        g.dImage.data()[p * 3 + 2] = dx(2, p);
        g.dDepth.data()[p]         = dx(3, p);
        g.dCoc.data()[p]           = dx(4, p);
    }
    return g;
}

} // namespace dofsplat
