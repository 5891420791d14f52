// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/error.hpp>
#include <dofsplat/losses.hpp>

#include <array>
#include <cmath>
#include <vector>

namespace dofsplat {

void
LossWeights::validate() const {
    if (!(dssim >= 0.0) || !(mask >= 0.0) || !(reg >= 0.0)) {
        throw ValidationError("loss weights must be non-negative");
    }
}

namespace {

using Plane = std::vector<double>;

constexpr int kRadius = kSsimWindow / 2;

std::array<double, kSsimWindow>
gaussianWindow() {
    std::array<double, kSsimWindow> w{};
    double sum = 0.0;
    for (int k = 0; k < kSsimWindow; ++k) {
        const double d = k - kRadius;
        w[k]           = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[k];
    }
    for (auto &v : w) {
        v /= sum;
    }
    return w;
}

const std::array<double, kSsimWindow> &
window() {
    static const auto w = gaussianWindow();
    return w;
}

/// Reflect without repeating the edge sample (…2 1 | 0 1 2 … n-1 | n-2 …).
int
reflect(int i, int n) {
    if (n == 1) {
        return 0;
    }
    const int period = 2 * (n - 1);
    i                = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

Plane
blur(const Plane &in, int w, int h) {
    const auto &k = window();
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = 0; t < kSsimWindow; ++t) {
                s += k[t] * in[static_cast<std::size_t>(y) * w + reflect(x + t - kRadius, w)];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = 0; t < kSsimWindow; ++t) {
                s += k[t] * tmp[static_cast<std::size_t>(reflect(y + t - kRadius, h)) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    return out;
}

/// Adjoint of blur().
Plane
blurTranspose(const Plane &g, int w, int h) {
    const auto &k = window();
    Plane tmp(g.size(), 0.0), out(g.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = g[static_cast<std::size_t>(y) * w + x];
            for (int t = 0; t < kSsimWindow; ++t) {
                tmp[static_cast<std::size_t>(reflect(y + t - kRadius, h)) * w + x] += k[t] * v;
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = tmp[static_cast<std::size_t>(y) * w + x];
            for (int t = 0; t < kSsimWindow; ++t) {
                out[static_cast<std::size_t>(y) * w + reflect(x + t - kRadius, w)] += k[t] * v;
            }
        }
    }
    return out;
}

Plane
channel(const Image &img, int c) {
    Plane p(img.pixelCount());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = img.data()[i * img.channels() + c];
    }
    return p;
}

double
ssimImpl(const Image &a, const Image &b, Image *grad) {
    requireSameShape(a, b, "ssim");
    const int w = a.width(), h = a.height();
    const double n = static_cast<double>(a.size());
    if (grad) {
        *grad = Image(w, h, a.channels());
    }
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        const Plane x = channel(a, c), y = channel(b, c);
        Plane xx(x.size()), yy(x.size()), xy(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const Plane mx = blur(x, w, h), my = blur(y, w, h);
        const Plane exx = blur(xx, w, h), eyy = blur(yy, w, h), exy = blur(xy, w, h);
        Plane gMu(x.size()), gExx(x.size()), gExy(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double sx  = exx[i] - mx[i] * mx[i];
            const double sy  = eyy[i] - my[i] * my[i];
            const double sxy = exy[i] - mx[i] * my[i];
            const double a1  = 2.0 * mx[i] * my[i] + kSsimC1;
            const double a2  = 2.0 * sxy + kSsimC2;
            const double b1  = mx[i] * mx[i] + my[i] * my[i] + kSsimC1;
            const double b2  = sx + sy + kSsimC2;
            const double s   = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad) {
                const double dMu  = 2.0 * my[i] * a2 / (b1 * b2) - s * 2.0 * mx[i] / b1;
                const double dSx  = -s / b2;
                const double dSxy = 2.0 * a1 / (b1 * b2);
                gMu[i]            = (dMu - 2.0 * mx[i] * dSx - my[i] * dSxy) / n;
                gExx[i]           = dSx / n;
                gExy[i]           = dSxy / n;
            }
        }
        if (grad) {
            const Plane tMu = blurTranspose(gMu, w, h);
            const Plane tXx = blurTranspose(gExx, w, h);
            const Plane tXy = blurTranspose(gExy, w, h);
            for (std::size_t i = 0; i < x.size(); ++i) {
                grad->data()[i * a.channels() + c] = tMu[i] + 2.0 * x[i] * tXx[i] + y[i] * tXy[i];
            }
        }
    }
    return total / n;
}

} // namespace

double
ssim(const Image &a, const Image &b) {
    return ssimImpl(a, b, nullptr);
}

LossValue
ssimWithGrad(const Image &a, const Image &b) {
    LossValue out;
    out.value = ssimImpl(a, b, &out.grad);
    return out;
}

LossValue
reconstructionLoss(const Image &rendered, const Image &reference, const LossWeights &weights) {
    requireSameShape(rendered, reference, "reconstructionLoss");
    if (rendered.empty()) {
        throw ValidationError("reconstructionLoss: empty image");
    }
    const double n = static_cast<double>(rendered.size());
    LossValue out;
    out.grad = Image(rendered.width(), rendered.height(), rendered.channels());
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const double d = rendered.data()[i] - reference.data()[i];
        if (weights.norm == ReconstructionNorm::L1) {
            out.value += std::abs(d);
            out.grad.data()[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
        } else {
            out.value += d * d;
            out.grad.data()[i] = 2.0 * d / n;
        }
    }
    out.value /= n;
    if (weights.dssim != 0.0) {
        const LossValue s = ssimWithGrad(rendered, reference);
        out.value += weights.dssim * (1.0 - s.value);
        for (std::size_t i = 0; i < rendered.size(); ++i) {
            out.grad.data()[i] -= weights.dssim * s.grad.data()[i];
        }
    }
    return out;
}

namespace {

void
checkMask(const Image &mask, const Image &img, const char *what) {
    if (mask.channels() != 1 || mask.width() != img.width() || mask.height() != img.height()) {
        throw ValidationError(std::string(what) + ": mask must be a single-channel image of the "
                                                  "same size");
    }
}

} // namespace

Image
compositeImage(const Image &mask, const Image &aif, const Image &defocused) {
    requireSameShape(aif, defocused, "compositeImage");
    checkMask(mask, aif, "compositeImage");
    Image out(aif.width(), aif.height(), aif.channels());
    const int ch = aif.channels();
    for (std::size_t p = 0; p < aif.pixelCount(); ++p) {
        const double m = mask.data()[p];
        for (int c = 0; c < ch; ++c) {
            const std::size_t i = p * ch + c;
            out.data()[i]       = m * aif.data()[i] + (1.0 - m) * defocused.data()[i];
        }
    }
    return out;
}

DetailLoss
detailLoss(const Image &mask, const Image &aif, const Image &defocused, const Image &reference,
           const LossWeights &weights) {
    DetailLoss out;
    out.composite     = compositeImage(mask, aif, defocused);
    const LossValue r = reconstructionLoss(out.composite, reference, weights);
    out.value         = r.value;
    const int ch      = aif.channels();
    out.dMask         = Image(mask.width(), mask.height(), 1);
    out.dAif          = Image(aif.width(), aif.height(), ch);
    out.dDefocused    = Image(aif.width(), aif.height(), ch);
    for (std::size_t p = 0; p < aif.pixelCount(); ++p) {
        const double m = mask.data()[p];
        double dm      = 0.0;
        for (int c = 0; c < ch; ++c) {
            const std::size_t i    = p * ch + c;
            const double g         = r.grad.data()[i];
            out.dAif.data()[i]       = m * g;
            out.dDefocused.data()[i] = (1.0 - m) * g;
            dm += g * (aif.data()[i] - defocused.data()[i]);
        }
        out.dMask.data()[p] = dm;
    }
    return out;
}

MaskLoss
maskCorrelationLoss(const Image &mask, const Image &coc) {
    requireSameShape(mask, coc, "maskCorrelationLoss");
    if (mask.channels() != 1 || mask.empty()) {
        throw ValidationError("maskCorrelationLoss: expected non-empty single-channel maps");
    }
    const std::size_t n = mask.size();
    double meanA = 0.0, meanB = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        meanA += 1.0 - mask.data()[i];
        meanB += coc.data()[i];
    }
    meanA /= n;
    meanB /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 1.0 - mask.data()[i] - meanA;
        const double b = coc.data()[i] - meanB;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    MaskLoss out;
    out.grad = Image(mask.width(), mask.height(), 1);
    constexpr double eps = 1e-12;
    if (saa / n <= eps || sbb / n <= eps) {
        out.skipped = true;
        return out;
    }
    const double denom = std::sqrt(saa * sbb);
    const double r     = sab / denom;
    out.value          = 1.0 - r;
    for (std::size_t i = 0; i < n; ++i) {
        const double a   = 1.0 - mask.data()[i] - meanA;
        const double b   = coc.data()[i] - meanB;
        const double dRa = b / denom - r * a / saa;
        // d(1-r)/dm = -dr/da * da/dm = dr/da
        out.grad.data()[i] = dRa;
    }
    return out;
}

LossValue
maskEntropyReg(const Image &mask, bool symmetric) {
    if (mask.empty()) {
        throw ValidationError("maskEntropyReg: empty mask");
    }
    constexpr double eps = 1e-8;
    const double n       = static_cast<double>(mask.size());
    LossValue out;
    out.grad = Image(mask.width(), mask.height(), mask.channels());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const double m = mask.data()[i];
        double v       = -m * std::log(m + eps);
        double g       = -(std::log(m + eps) + m / (m + eps));
        if (symmetric) {
            const double k = 1.0 - m;
            v += -k * std::log(k + eps);
            g += std::log(k + eps) + k / (k + eps);
        }
        out.value += v;
        out.grad.data()[i] = g / n;
    }
    out.value /= n;
    return out;
}

double
totalObjective(Stage stage, const LossParts &parts, const LossWeights &weights) {
    if (stage == Stage::Warmup) {
        return parts.rec;
    }
    return parts.detail + weights.mask * parts.mask + weights.reg * parts.reg;
}

const char *
stageName(Stage stage) {
    return stage == Stage::Warmup ? "warmup" : "refine";
}

} // namespace dofsplat
