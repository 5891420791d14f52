// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Image-space losses with their gradients. Every function returns the scalar and the gradient
// of that scalar w.r.t. its first image argument (or the named arguments for the composite).

#pragma once

#include <dofsplat/image.hpp>

namespace dofsplat {

enum class ReconstructionNorm { L1, MSE };

struct LossWeights {
    double dssim = 0.2;
    double mask  = 0.001;
    double reg   = 0.0001;
    ReconstructionNorm norm = ReconstructionNorm::L1;
    /// Adds -(1-m) log(1-m) to the mask regularizer so both 0 and 1 are attractors.
    bool symmetricReg = false;

    void validate() const;
};

struct LossValue {
    double value = 0.0;
    Image grad;
};

/// SSIM window and stability constants (dynamic range 1).
inline constexpr int kSsimWindow     = 11;
inline constexpr double kSsimSigma   = 1.5;
inline constexpr double kSsimC1      = 0.01 * 0.01;
inline constexpr double kSsimC2      = 0.03 * 0.03;

/// Mean SSIM over all pixels and channels; borders use reflected padding.
double ssim(const Image &a, const Image &b);

/// SSIM(a, b) with its gradient w.r.t. a.
LossValue ssimWithGrad(const Image &a, const Image &b);

/// Mean absolute (or squared) error plus dssim * (1 - SSIM), gradient w.r.t. rendered.
LossValue reconstructionLoss(const Image &rendered, const Image &reference,
                             const LossWeights &weights = {});

/// mask * aif + (1 - mask) * defocused. mask has one channel and is broadcast over colors.
Image compositeImage(const Image &mask, const Image &aif, const Image &defocused);

struct DetailLoss {
    double value = 0.0;
    Image composite;
    Image dMask;
    Image dAif;
    Image dDefocused;
};

/// reconstructionLoss of the composite, with the gradient split onto its three inputs.
DetailLoss detailLoss(const Image &mask, const Image &aif, const Image &defocused,
                      const Image &reference, const LossWeights &weights = {});

struct MaskLoss {
    double value = 0.0;
    Image grad;
    /// True when one argument had no variance; value and grad are zero.
    bool skipped = false;
};

/// 1 - Pearson(1 - mask, coc); gradient w.r.t. mask only.
MaskLoss maskCorrelationLoss(const Image &mask, const Image &coc);

/// mean(-m log(m + 1e-8)), plus the mirrored term when symmetric.
LossValue maskEntropyReg(const Image &mask, bool symmetric = false);

enum class Stage { Warmup, Refine };

struct LossParts {
    double rec    = 0.0;
    double detail = 0.0;
    double mask   = 0.0;
    double reg    = 0.0;
};

/// Warm-up optimizes L_rec alone; refinement drops it for the detail and mask terms.
double totalObjective(Stage stage, const LossParts &parts, const LossWeights &weights = {});

const char *stageName(Stage stage);

} // namespace dofsplat
