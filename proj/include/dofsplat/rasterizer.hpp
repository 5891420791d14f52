// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Tile-based depth-of-field splatting. Every projected Gaussian is convolved with an isotropic
// Gaussian fitted to its circle of confusion before it is binned and composited front to
// back, so the per-pixel contributor sets are those of the blurred footprints. Alongside the
// color image the renderer produces depth and CoC maps (alpha-weighted sums of the per-
// primitive depth and CoC radius) and keeps what the analytic backward pass needs.

#pragma once

#include <dofsplat/core.hpp>
#include <dofsplat/dof_kernel.hpp>
#include <dofsplat/projection.hpp>

#include <cstdint>
#include <memory>
#include <vector>

namespace dofsplat {

struct RenderSettings {
    int tileSize      = 16;
    Vec3 background   = Vec3::Zero();
    double nearPlane  = kDefaultNearPlane;
    double dilation   = kLowPassDilation;
    /// Footprint and per-pixel evaluation cutoff in standard deviations of Sigma''.
    double cutoffSigma = 3.0;
    double alphaMin    = 1.0 / 255.0;
    double alphaMax    = 0.99;
    /// Blending at a pixel stops before the transmittance would drop below this value.
    double transmittanceMin = 1e-4;
    /// false selects the plain splatting path: no CoC kernel, zero CoC map, no lens gradients.
    bool depthOfField = true;
    /// Scale the convolved footprint's peak by sqrt(det Sigma' / det Sigma'') so blurring
    /// preserves each splat's integrated opacity.
    bool normalizeBlur = true;
    /// Let gradients flow from the CoC kernel (and CoC map) back to the primitive depth.
    bool cocDepthGradient = false;
    /// When non-empty, per-Gaussian depths used for the CoC radius instead of the live
    /// camera-space depth. Their gradient is never propagated.
    std::vector<double> fixedCocDepths;
};

/// Per-primitive quantities computed once per render.
struct PreparedGaussian {
    Projected2D proj;
    Vec3 pointCam = Vec3::Zero();
    double cocDepth = 0.0;
    dof::CoCKernel kernel;
    /// Upper triangle of inverse(Sigma''): (xx, xy, yy).
    Vec3 conic      = Vec3::Zero();
    double opacity  = 0.0;
    /// sqrt(det Sigma' / det Sigma''), 1 when blur normalization is off or a == 0.
    double amplitude = 1.0;
    Vec3 color       = Vec3::Zero();
    std::array<bool, 3> colorClamped{false, false, false};
    Vec3 viewDir = Vec3::Zero();
    double footprint = 0.0;
};

/// Per-tile contributor lists sorted by ascending depth (ties by Gaussian index).
struct TileIndex {
    int tileSize = 16;
    int tilesX   = 0;
    int tilesY   = 0;
    std::vector<std::vector<std::uint32_t>> lists;

    const std::vector<std::uint32_t> &
    list(int tx, int ty) const {
        return lists[static_cast<std::size_t>(ty) * tilesX + tx];
    }
};

/// Forward intermediates retained for renderBackward.
struct RenderCache {
    std::size_t sceneSize = 0;
    LensParams lens;
    std::vector<PreparedGaussian> prepared;
    TileIndex tiles;
    /// Per pixel: number of entries of its tile list walked before blending stopped.
    std::vector<std::uint32_t> walked;
    std::vector<double> finalTransmittance;
};

struct RenderOutput {
    Image color; ///< HxWx3, composited over the background
    Image depth; ///< HxW, sum T' alpha' z (not normalized)
    Image coc;   ///< HxW, sum T' alpha' R_coc in pixels (not normalized)
    Image alpha; ///< HxW, accumulated alpha = 1 - final transmittance
    /// N'_x: Gaussians actually blended at each pixel.
    std::vector<std::uint32_t> contributorCount;
    std::shared_ptr<const RenderCache> cache;

    /// depth / alpha, 0 where alpha is 0.
    Image normalizedDepth() const;
    /// coc / alpha, 0 where alpha is 0.
    Image normalizedCoc() const;
};

/// Upstream gradients of a scalar loss w.r.t. the render outputs. Empty images mean zero.
struct RenderUpstream {
    Image dColor;
    Image dDepth;
    Image dCoc;
    Image dAlpha;
};

/// Gradients w.r.t. physical Gaussian attributes (center, raw quaternion, scale, opacity, SH)
/// and the lens parameters of the rendered view.
struct GradientSet {
    std::vector<Vec3> dMeans;
    std::vector<Vec4> dQuats;
    std::vector<Vec3> dScales;
    std::vector<double> dOpacities;
    std::vector<ShCoeffs> dSh;
    double dFocalDistance = 0.0;
    double dAperture      = 0.0;

    void resize(std::size_t n);
    std::size_t
    size() const {
        return dMeans.size();
    }
    GradientSet &operator+=(const GradientSet &other);
    bool allFinite() const;
};

RenderOutput render(const Scene &scene, const CameraPose &cam, const LensParams &lens,
                    const RenderSettings &settings = {});

/// render() with the aperture forced to 0; the focal distance is irrelevant.
RenderOutput renderAllInFocus(const Scene &scene, const CameraPose &cam,
                              const RenderSettings &settings = {});

/// Analytic backward pass. `forward` must come from render() on the same scene, camera, lens
/// and settings; throws StateError when it carries no intermediates or does not match.
GradientSet renderBackward(const Scene &scene, const CameraPose &cam, const LensParams &lens,
                           const RenderOutput &forward, const RenderUpstream &upstream,
                           const RenderSettings &settings = {});

/// Color of a Gaussian seen along a unit view direction (before the clamp at 0).
Vec3 evalSh(int degree, const ShCoeffs &sh, const Vec3 &dir);

} // namespace dofsplat
