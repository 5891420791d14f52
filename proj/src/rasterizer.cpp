// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/error.hpp>
#include <dofsplat/parallel.hpp>
#include <dofsplat/rasterizer.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dofsplat {

Vec3
evalSh(int degree, const ShCoeffs &sh, const Vec3 &dir) {
    Vec3 c = kShC0 * sh[0] + Vec3::Constant(0.5);
    if (degree >= 1) {
        c += kShC1 * (-dir.y() * sh[1] + dir.z() * sh[2] - dir.x() * sh[3]);
    }
    return c;
}

void
GradientSet::resize(std::size_t n) {
    dMeans.assign(n, Vec3::Zero());
    dQuats.assign(n, Vec4::Zero());
    dScales.assign(n, Vec3::Zero());
    dOpacities.assign(n, 0.0);
    dSh.assign(n, ShCoeffs{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()});
    dFocalDistance = 0.0;
    dAperture      = 0.0;
}

GradientSet &
GradientSet::operator+=(const GradientSet &other) {
    if (other.size() != size()) {
        throw ValidationError("GradientSet::operator+=: size mismatch");
    }
    for (std::size_t i = 0; i < size(); ++i) {
        dMeans[i] += other.dMeans[i];
        dQuats[i] += other.dQuats[i];
        dScales[i] += other.dScales[i];
        dOpacities[i] += other.dOpacities[i];
        for (int k = 0; k < 4; ++k) {
            dSh[i][k] += other.dSh[i][k];
        }
    }
    dFocalDistance += other.dFocalDistance;
    dAperture += other.dAperture;
    return *this;
}

bool
GradientSet::allFinite() const {
    if (!std::isfinite(dFocalDistance) || !std::isfinite(dAperture)) {
        return false;
    }
    for (std::size_t i = 0; i < size(); ++i) {
        if (!dMeans[i].allFinite() || !dQuats[i].allFinite() || !dScales[i].allFinite() ||
            !std::isfinite(dOpacities[i])) {
            return false;
        }
        for (const auto &c : dSh[i]) {
            if (!c.allFinite()) {
                return false;
            }
        }
    }
    return true;
}

namespace {

Image
divideByAlpha(const Image &map, const Image &alpha) {
    Image out(map.width(), map.height(), 1);
    for (std::size_t i = 0; i < map.size(); ++i) {
        const double a = alpha.data()[i];
        out.data()[i]  = a > 0.0 ? map.data()[i] / a : 0.0;
    }
    return out;
}

struct TileRect {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1; // inclusive

    bool
    empty() const {
        return x1 < x0 || y1 < y0;
    }
};

TileRect
tileRect(const Vec2 &mean, double radius, int tileSize, int tilesX, int tilesY) {
    // Pixel centers sit at (i + 0.5); the one-pixel margin keeps rounding on the safe side.
    TileRect r;
    const double lo[2] = {mean.x() - radius - 1.5, mean.y() - radius - 1.5};
    const double hi[2] = {mean.x() + radius + 0.5, mean.y() + radius + 0.5};
    if (!std::isfinite(lo[0]) || !std::isfinite(lo[1]) || !std::isfinite(hi[0]) ||
        !std::isfinite(hi[1])) {
        return r;
    }
    auto toTile = [&](double v, int limit) {
        const double t = std::floor(v / tileSize);
        return static_cast<int>(std::clamp(t, -1.0, static_cast<double>(limit)));
    };
    r.x0 = std::max(0, toTile(lo[0], tilesX));
    r.y0 = std::max(0, toTile(lo[1], tilesY));
    r.x1 = std::min(tilesX - 1, toTile(hi[0], tilesX));
    r.y1 = std::min(tilesY - 1, toTile(hi[1], tilesY));
    return r;
}

/// Shared per-pixel evaluation so forward and backward make identical decisions.
struct PixelSample {
    double dx, dy, gauss, alphaRaw, alpha;
};

inline bool
samplePixel(const PreparedGaussian &g, double px, double py, double cutoffSq, double alphaMin,
            double alphaMax, PixelSample &s) {
    s.dx           = px - g.proj.mean.x();
    s.dy           = py - g.proj.mean.y();
    const double q = g.conic[0] * s.dx * s.dx + 2.0 * g.conic[1] * s.dx * s.dy +
                     g.conic[2] * s.dy * s.dy;
    if (!(q <= cutoffSq)) {
        return false;
    }
    s.gauss    = std::exp(-0.5 * q);
    s.alphaRaw = g.opacity * g.amplitude * s.gauss;
    s.alpha    = std::min(alphaMax, s.alphaRaw);
    return s.alpha >= alphaMin;
}

std::shared_ptr<RenderCache>
prepare(const Scene &scene, const CameraPose &cam, const LensParams &lens,
        const RenderSettings &settings) {
    cam.validate();
    if (settings.depthOfField) {
        lens.validate();
    }
    if (settings.tileSize <= 0) {
        throw ValidationError("render: tile size must be positive");
    }
    if (!settings.fixedCocDepths.empty() && settings.fixedCocDepths.size() != scene.size()) {
        throw ValidationError("render: fixedCocDepths must have one entry per Gaussian");
    }

    auto cache       = std::make_shared<RenderCache>();
    cache->sceneSize = scene.size();
    cache->lens      = lens;

    const auto &k        = cam.intrinsics;
    TileIndex &tiles     = cache->tiles;
    tiles.tileSize       = settings.tileSize;
    tiles.tilesX         = (k.width + settings.tileSize - 1) / settings.tileSize;
    tiles.tilesY         = (k.height + settings.tileSize - 1) / settings.tileSize;
    tiles.lists.assign(static_cast<std::size_t>(tiles.tilesX) * tiles.tilesY, {});

    const std::size_t n = scene.size();
    cache->prepared.resize(n);
    std::vector<TileRect> rects(n);
    const Vec3 camPos = cam.position();
    const ProjectionSettings projSettings{settings.nearPlane, settings.dilation};

    parallelFor(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t ii) {
        const auto i        = static_cast<std::size_t>(ii);
        PreparedGaussian &p = cache->prepared[i];
        const Mat3 m        = rotationFromQuaternion(scene.quats[i]) * scene.scale(i).asDiagonal();
        const Mat3 cov3d    = m * m.transpose();
        p.proj              = projectGaussian(scene.means[i], cov3d, cam, projSettings);
        p.pointCam          = cam.rotation() * scene.means[i] + cam.translation();
        p.proj.visible      = false;
        if (!(p.pointCam.z() > settings.nearPlane)) {
            return;
        }
        p.cocDepth =
            settings.fixedCocDepths.empty() ? p.proj.depth : settings.fixedCocDepths[i];
        if (settings.depthOfField) {
            p.kernel = dof::makeKernel(p.proj.cov, lens.aperture, lens.focalDistance, p.cocDepth);
        } else {
            p.kernel           = dof::CoCKernel{};
            p.kernel.convolved = p.proj.cov;
        }
        const Mat2 &cov2 = p.kernel.convolved;
        const double det2 = cov2(0, 0) * cov2(1, 1) - cov2(0, 1) * cov2(1, 0);
        if (!(det2 > 0.0) || !std::isfinite(det2)) {
            return;
        }
        p.conic = Vec3(cov2(1, 1) / det2, -cov2(0, 1) / det2, cov2(0, 0) / det2);
        if (settings.depthOfField && settings.normalizeBlur) {
            const Mat2 &cov1  = p.proj.cov;
            const double det1 = cov1(0, 0) * cov1(1, 1) - cov1(0, 1) * cov1(1, 0);
            p.amplitude       = std::sqrt(det1 / det2);
        } else {
            p.amplitude = 1.0;
        }
        p.opacity   = scene.opacity(i);
        p.footprint = cutoffRadius(cov2, settings.cutoffSigma);

        p.viewDir       = (scene.means[i] - camPos).normalized();
        const Vec3 raw  = evalSh(scene.shDegree, scene.sh[i], p.viewDir);
        for (int c = 0; c < 3; ++c) {
            p.colorClamped[c] = raw[c] < 0.0;
            p.color[c]        = std::max(raw[c], 0.0);
        }

        rects[i]       = tileRect(p.proj.mean, p.footprint, tiles.tileSize, tiles.tilesX,
                                  tiles.tilesY);
        p.proj.visible = !rects[i].empty();
    });

    std::vector<std::uint32_t> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (cache->prepared[i].proj.visible) {
            order.push_back(static_cast<std::uint32_t>(i));
        }
    }
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return cache->prepared[a].proj.depth < cache->prepared[b].proj.depth;
    });
    for (const std::uint32_t i : order) {
        const TileRect &r = rects[i];
        for (int ty = r.y0; ty <= r.y1; ++ty) {
            for (int tx = r.x0; tx <= r.x1; ++tx) {
                tiles.lists[static_cast<std::size_t>(ty) * tiles.tilesX + tx].push_back(i);
            }
        }
    }
    return cache;
}

} // namespace

Image
RenderOutput::normalizedDepth() const {
    return divideByAlpha(depth, alpha);
}

Image
RenderOutput::normalizedCoc() const {
    return divideByAlpha(coc, alpha);
}

RenderOutput
render(const Scene &scene, const CameraPose &cam, const LensParams &lens,
       const RenderSettings &settings) {
    auto cache       = prepare(scene, cam, lens, settings);
    const auto &k    = cam.intrinsics;
    const int width  = k.width;
    const int height = k.height;

    RenderOutput out;
    out.color = Image(width, height, 3);
    out.depth = Image(width, height, 1);
    out.coc   = Image(width, height, 1);
    out.alpha = Image(width, height, 1);
    out.contributorCount.assign(static_cast<std::size_t>(width) * height, 0);
    cache->walked.assign(static_cast<std::size_t>(width) * height, 0);
    cache->finalTransmittance.assign(static_cast<std::size_t>(width) * height, 1.0);

    const TileIndex &tiles = cache->tiles;
    const double cutoffSq  = settings.cutoffSigma * settings.cutoffSigma;

    parallelFor(static_cast<std::ptrdiff_t>(tiles.lists.size()), [&](std::ptrdiff_t t) {
        const int tx    = static_cast<int>(t % tiles.tilesX);
        const int ty    = static_cast<int>(t / tiles.tilesX);
        const auto &lst = tiles.lists[static_cast<std::size_t>(t)];
        const int xEnd  = std::min(width, (tx + 1) * tiles.tileSize);
        const int yEnd  = std::min(height, (ty + 1) * tiles.tileSize);
        for (int y = ty * tiles.tileSize; y < yEnd; ++y) {
            for (int x = tx * tiles.tileSize; x < xEnd; ++x) {
                const double px = x + 0.5;
                const double py = y + 0.5;
                double T        = 1.0;
                Vec3 color      = Vec3::Zero();
                double depth = 0.0, coc = 0.0;
                std::uint32_t count = 0;
                std::size_t walked  = lst.size();
                PixelSample s;
                for (std::size_t e = 0; e < lst.size(); ++e) {
                    const PreparedGaussian &g = cache->prepared[lst[e]];
                    if (!samplePixel(g, px, py, cutoffSq, settings.alphaMin, settings.alphaMax,
                                     s)) {
                        continue;
                    }
                    const double nextT = T * (1.0 - s.alpha);
                    if (nextT < settings.transmittanceMin) {
                        walked = e;
                        break;
                    }
                    const double w = s.alpha * T;
                    color += w * g.color;
                    depth += w * g.proj.depth;
                    coc += w * g.kernel.radius;
                    T = nextT;
                    ++count;
                }
                const std::size_t pix = static_cast<std::size_t>(y) * width + x;
                color += T * settings.background;
                for (int c = 0; c < 3; ++c) {
                    out.color.at(x, y, c) = color[c];
                }
                out.depth.at(x, y)           = depth;
                out.coc.at(x, y)             = coc;
                out.alpha.at(x, y)           = 1.0 - T;
                out.contributorCount[pix]    = count;
                cache->walked[pix]           = static_cast<std::uint32_t>(walked);
                cache->finalTransmittance[pix] = T;
            }
        }
    });

    out.cache = std::move(cache);
    return out;
}

RenderOutput
renderAllInFocus(const Scene &scene, const CameraPose &cam, const RenderSettings &settings) {
    return render(scene, cam, LensParams{1.0, 0.0}, settings);
}

namespace {

/// Gradient accumulated per (tile, list entry) and reduced per Gaussian afterwards.
struct SplatGrad {
    double mean[2]  = {0.0, 0.0};
    double conic[3] = {0.0, 0.0, 0.0}; // d/d(xx), d/d(xy) (single symmetric entry), d/d(yy)
    double opacity   = 0.0;
    double amplitude = 0.0;
    double color[3]  = {0.0, 0.0, 0.0};
    double depth     = 0.0;
    double coc       = 0.0;

    SplatGrad &
    operator+=(const SplatGrad &o) {
        for (int i = 0; i < 2; ++i) {
            mean[i] += o.mean[i];
        }
        for (int i = 0; i < 3; ++i) {
            conic[i] += o.conic[i];
            color[i] += o.color[i];
        }
        opacity += o.opacity;
        amplitude += o.amplitude;
        depth += o.depth;
        coc += o.coc;
        return *this;
    }
};

double
upstreamAt(const Image &img, int x, int y, int c) {
    return img.empty() ? 0.0 : img.at(x, y, c);
}

void
checkUpstream(const Image &img, int width, int height, int channels, const char *name) {
    if (!img.empty() &&
        (img.width() != width || img.height() != height || img.channels() != channels)) {
        throw ValidationError(std::string("renderBackward: upstream ") + name +
                              " has the wrong shape");
    }
}

/// d(R(q/|q|))/dq contracted with dL/dR.
Vec4
quaternionGradient(const Vec4 &qRaw, const Mat3 &gR) {
    const double norm = qRaw.norm();
    const Vec4 q      = qRaw / norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 dw, dx, dy, dz;
    dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
    dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
    dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
    dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
    const Vec4 gUnit(gR.cwiseProduct(dw).sum(), gR.cwiseProduct(dx).sum(),
                     gR.cwiseProduct(dy).sum(), gR.cwiseProduct(dz).sum());
    return (gUnit - q * q.dot(gUnit)) / norm;
}

} // namespace

GradientSet
renderBackward(const Scene &scene, const CameraPose &cam, const LensParams &lens,
               const RenderOutput &forward, const RenderUpstream &upstream,
               const RenderSettings &settings) {
    if (!forward.cache) {
        throw StateError("renderBackward: forward output carries no intermediates");
    }
    const RenderCache &cache = *forward.cache;
    const auto &k            = cam.intrinsics;
    const int width          = k.width;
    const int height         = k.height;
    if (cache.sceneSize != scene.size() || cache.walked.size() !=
                                               static_cast<std::size_t>(width) * height ||
        !(cache.lens == lens)) {
        throw StateError("renderBackward: forward intermediates do not match this call");
    }
    checkUpstream(upstream.dColor, width, height, 3, "dColor");
    checkUpstream(upstream.dDepth, width, height, 1, "dDepth");
    checkUpstream(upstream.dCoc, width, height, 1, "dCoc");
    checkUpstream(upstream.dAlpha, width, height, 1, "dAlpha");

    const TileIndex &tiles = cache.tiles;
    const double cutoffSq  = settings.cutoffSigma * settings.cutoffSigma;
    const Vec3 bg          = settings.background;

    std::vector<std::vector<SplatGrad>> tileGrads(tiles.lists.size());
    parallelFor(static_cast<std::ptrdiff_t>(tiles.lists.size()), [&](std::ptrdiff_t t) {
        const auto &lst = tiles.lists[static_cast<std::size_t>(t)];
        auto &grads     = tileGrads[static_cast<std::size_t>(t)];
        grads.assign(lst.size(), SplatGrad{});
        if (lst.empty()) {
            return;
        }
        const int tx   = static_cast<int>(t % tiles.tilesX);
        const int ty   = static_cast<int>(t / tiles.tilesX);
        const int xEnd = std::min(width, (tx + 1) * tiles.tileSize);
        const int yEnd = std::min(height, (ty + 1) * tiles.tileSize);
        for (int y = ty * tiles.tileSize; y < yEnd; ++y) {
            for (int x = tx * tiles.tileSize; x < xEnd; ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * width + x;
                const Vec3 gC(upstreamAt(upstream.dColor, x, y, 0),
                              upstreamAt(upstream.dColor, x, y, 1),
                              upstreamAt(upstream.dColor, x, y, 2));
                const double gD = upstreamAt(upstream.dDepth, x, y, 0);
                const double gK = upstreamAt(upstream.dCoc, x, y, 0);
                const double gA = upstreamAt(upstream.dAlpha, x, y, 0);
                if (gC.isZero(0.0) && gD == 0.0 && gK == 0.0 && gA == 0.0) {
                    continue;
                }
                const double px = x + 0.5;
                const double py = y + 0.5;
                double T        = cache.finalTransmittance[pix];
                // Contribution of everything behind the current entry (background included).
                Vec3 afterC     = T * bg;
                double afterD = 0.0, afterK = 0.0, afterA = 0.0;
                PixelSample s;
                for (std::size_t e = cache.walked[pix]; e-- > 0;) {
                    const PreparedGaussian &g = cache.prepared[lst[e]];
                    if (!samplePixel(g, px, py, cutoffSq, settings.alphaMin, settings.alphaMax,
                                     s)) {
                        continue;
                    }
                    const double oneMinus = 1.0 - s.alpha;
                    const double Ti       = T / oneMinus;
                    const double w        = s.alpha * Ti;
                    SplatGrad &sg         = grads[e];
                    for (int c = 0; c < 3; ++c) {
                        sg.color[c] += w * gC[c];
                    }
                    sg.depth += w * gD;
                    sg.coc += w * gK;

                    const double dAlpha =
                        gC.dot(Ti * g.color - afterC / oneMinus) +
                        gD * (Ti * g.proj.depth - afterD / oneMinus) +
                        gK * (Ti * g.kernel.radius - afterK / oneMinus) +
                        gA * (Ti - afterA / oneMinus);
                    afterC += w * g.color;
                    afterD += w * g.proj.depth;
                    afterK += w * g.kernel.radius;
                    afterA += w;
                    T = Ti;

                    if (s.alphaRaw >= settings.alphaMax) {
                        continue; // clamped: alpha does not depend on the parameters
                    }
                    sg.opacity += dAlpha * g.amplitude * s.gauss;
                    sg.amplitude += dAlpha * g.opacity * s.gauss;
                    const double dPower = dAlpha * s.alphaRaw;
                    sg.mean[0] += dPower * (g.conic[0] * s.dx + g.conic[1] * s.dy);
                    sg.mean[1] += dPower * (g.conic[1] * s.dx + g.conic[2] * s.dy);
                    sg.conic[0] += dPower * (-0.5 * s.dx * s.dx);
                    sg.conic[1] += dPower * (-s.dx * s.dy);
                    sg.conic[2] += dPower * (-0.5 * s.dy * s.dy);
                }
            }
        }
    });

    // Deterministic reduction: tiles in index order regardless of thread count.
    const std::size_t n = scene.size();
    std::vector<SplatGrad> perGaussian(n);
    for (std::size_t t = 0; t < tiles.lists.size(); ++t) {
        const auto &lst = tiles.lists[t];
        for (std::size_t e = 0; e < lst.size(); ++e) {
            perGaussian[lst[e]] += tileGrads[t][e];
        }
    }

    GradientSet out;
    out.resize(n);
    std::vector<double> lensDf(n, 0.0), lensDQ(n, 0.0);
    const Mat3 rot       = cam.rotation();
    const bool zFromCoc  = settings.cocDepthGradient && settings.fixedCocDepths.empty();

    parallelFor(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t ii) {
        const auto i              = static_cast<std::size_t>(ii);
        const PreparedGaussian &p = cache.prepared[i];
        if (!p.proj.visible) {
            return;
        }
        const SplatGrad &sg = perGaussian[i];

        // inverse(Sigma'') -> Sigma''
        Mat2 con;
        con << p.conic[0], p.conic[1], p.conic[1], p.conic[2];
        Mat2 gCon;
        gCon << sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2];
        Mat2 gCov2 = -con * gCon * con;
        Mat2 gCov1 = Mat2::Zero();

        if (settings.depthOfField && settings.normalizeBlur) {
            const double dAmp = sg.amplitude * p.amplitude * 0.5;
            gCov2 -= dAmp * con;
            gCov1 += dAmp * p.proj.cov.inverse();
        }
        gCov1 += gCov2;

        // Sigma'' = Sigma' + a I, a = R^2 / (2 ln 4), R = 0.5 Q |1/z - 1/f|
        double dZ = sg.depth;
        if (settings.depthOfField) {
            const double da = gCov2.trace();
            const double R  = p.kernel.radius;
            const double zc = p.cocDepth;
            const double Q  = lens.aperture;
            const double f  = lens.focalDistance;
            lensDf[i] = da * dof::daDf(R, Q, f, zc) + sg.coc * dof::dRDf(Q, f, zc);
            lensDQ[i] = da * dof::daDQ(R, f, zc) + sg.coc * dof::dRDQ(f, zc);
            if (zFromCoc) {
                dZ += da * dof::daDz(R, Q, f, zc) + sg.coc * dof::dRDz(Q, f, zc);
            }
        }

        // Sigma' = T Sigma3 T^T + dilation, T = J W
        const Vec3 &pc                        = p.pointCam;
        const Eigen::Matrix<double, 2, 3> jac = projectionJacobian(pc, k);
        const Eigen::Matrix<double, 2, 3> tm  = jac * rot;
        const Vec4 &qRaw                      = scene.quats[i];
        const Mat3 rq                         = rotationFromQuaternion(qRaw);
        const Vec3 s                          = scene.scale(i);
        const Mat3 m                          = rq * s.asDiagonal();
        const Mat3 cov3d                      = m * m.transpose();
        const Eigen::Matrix<double, 2, 3> gT  = 2.0 * gCov1 * tm * cov3d;
        const Mat3 gCov3                      = tm.transpose() * gCov1 * tm;
        const Eigen::Matrix<double, 2, 3> gJ  = gT * rot.transpose();

        const double invZ  = 1.0 / pc.z();
        const double invZ2 = invZ * invZ;
        const double invZ3 = invZ2 * invZ;
        Vec3 gPc(0.0, 0.0, dZ);
        gPc.z() += gJ(0, 0) * (-k.fx * invZ2) + gJ(1, 1) * (-k.fy * invZ2);
        gPc.x() += gJ(0, 2) * (-k.fx * invZ2);
        gPc.z() += gJ(0, 2) * (2.0 * k.fx * pc.x() * invZ3);
        gPc.y() += gJ(1, 2) * (-k.fy * invZ2);
        gPc.z() += gJ(1, 2) * (2.0 * k.fy * pc.y() * invZ3);
        // 2D mean
        gPc.x() += sg.mean[0] * k.fx * invZ;
        gPc.y() += sg.mean[1] * k.fy * invZ;
        gPc.z() -= sg.mean[0] * k.fx * pc.x() * invZ2 + sg.mean[1] * k.fy * pc.y() * invZ2;

        Vec3 gMean = rot.transpose() * gPc;

        // Color through the SH evaluation.
        Vec3 gColor(sg.color[0], sg.color[1], sg.color[2]);
        for (int c = 0; c < 3; ++c) {
            if (p.colorClamped[c]) {
                gColor[c] = 0.0;
            }
        }
        ShCoeffs &gSh = out.dSh[i];
        gSh[0]        = kShC0 * gColor;
        if (scene.shDegree >= 1) {
            const Vec3 &d = p.viewDir;
            gSh[1]        = -kShC1 * d.y() * gColor;
            gSh[2]        = kShC1 * d.z() * gColor;
            gSh[3]        = -kShC1 * d.x() * gColor;
            const auto &h = scene.sh[i];
            const Vec3 gDir(-kShC1 * gColor.dot(h[3]), -kShC1 * gColor.dot(h[1]),
                            kShC1 * gColor.dot(h[2]));
            const double dist = (scene.means[i] - cam.position()).norm();
            gMean += (gDir - d * d.dot(gDir)) / dist;
        }
        out.dMeans[i] = gMean;

        // Sigma3 = M M^T, M = R(q) diag(s)
        const Mat3 gM = 2.0 * gCov3 * m;
        for (int j = 0; j < 3; ++j) {
            out.dScales[i][j] = gM.col(j).dot(rq.col(j));
        }
        const Mat3 gR    = gM * s.asDiagonal();
        out.dQuats[i]    = quaternionGradient(qRaw, gR);
        out.dOpacities[i] = sg.opacity;
    });

    for (std::size_t i = 0; i < n; ++i) {
        out.dFocalDistance += lensDf[i];
        out.dAperture += lensDQ[i];
    }
    return out;
}

} // namespace dofsplat
