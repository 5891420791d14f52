// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/error.hpp>
#include <dofsplat/neighbors.hpp>
#include <dofsplat/trainer.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

namespace dofsplat {

namespace {

constexpr const char *kMeans     = "means";
constexpr const char *kQuats     = "quats";
constexpr const char *kScales    = "scales";
constexpr const char *kOpacities = "opacities";
constexpr const char *kSh        = "sh";
constexpr const char *kFocal     = "focal";
constexpr const char *kAperture  = "aperture";
constexpr const char *kIln       = "iln";

constexpr double kMinFocalDistance = 1e-3;

int
scaleCount(int n, double s) {
    return static_cast<int>(std::lround(n * s));
}

template <typename T>
std::span<double>
flat(std::vector<T> &v, std::size_t width) {
    return {reinterpret_cast<double *>(v.data()), v.size() * width};
}

template <typename T>
std::span<const double>
flat(const std::vector<T> &v, std::size_t width) {
    return {reinterpret_cast<const double *>(v.data()), v.size() * width};
}

} // namespace

Schedule
Schedule::scaled() const {
    Schedule s;
    s.totalIterations    = scaleCount(totalIterations, scale);
    s.warmupEnd          = scaleCount(warmupEnd, scale);
    s.injectionIteration = scaleCount(injectionIteration, scale);
    s.injectionCount     = scaleCount(injectionCount, scale);
    s.pruneInterval      = std::max(1, scaleCount(pruneInterval, scale));
    s.scale              = 1.0;
    return s;
}

void
Schedule::validate() const {
    if (!(scale > 0.0)) {
        throw ValidationError("train.scale must be positive");
    }
    const Schedule s = scaled();
    if (s.injectionCount < 0 || pruneInterval <= 0) {
        throw ValidationError("schedule counts must be non-negative");
    }
    if (!(0 <= s.injectionIteration && s.injectionIteration < s.warmupEnd &&
          s.warmupEnd < s.totalIterations)) {
        throw ValidationError("schedule needs 0 <= injection < warmup end < total iterations "
                              "(after scaling: " +
                              std::to_string(s.injectionIteration) + ", " +
                              std::to_string(s.warmupEnd) + ", " +
                              std::to_string(s.totalIterations) + ")");
    }
}

double
LearningRates::meansAt(int it, int total) const {
    if (total <= 1) {
        return means;
    }
    const double t = std::clamp(static_cast<double>(it) / (total - 1), 0.0, 1.0);
    return means + (meansFinal - means) * t;
}

void
TrainConfig::validate() const {
    schedule.validate();
    loss.validate();
    iln.validate();
    for (double v : {lr.means, lr.meansFinal, lr.scales, lr.focal, lr.aperture, lr.iln,
                     lr.rotation, lr.opacity, lr.color}) {
        if (!(v >= 0.0)) {
            throw ValidationError("learning rates must be non-negative");
        }
    }
    if (raster.tileSize <= 0) {
        throw ValidationError("raster.tile_size must be positive");
    }
    if (logEvery <= 0) {
        throw ValidationError("train.log_every must be positive");
    }
    if (!(pruneThreshold >= 0.0 && pruneThreshold < 1.0)) {
        throw ValidationError("train.prune_threshold must be in [0, 1)");
    }
}

void
appendSceneRows(Adam &adam, std::size_t count) {
    for (const char *g : {kMeans, kQuats, kScales, kOpacities, kSh}) {
        adam.appendRows(g, count);
    }
}

void
compactSceneRows(Adam &adam, const std::vector<bool> &keep) {
    for (const char *g : {kMeans, kQuats, kScales, kOpacities, kSh}) {
        adam.compactRows(g, keep);
    }
}

TrainState
makeTrainState(Scene scene, std::vector<LensParams> lenses, const TrainConfig &config) {
    TrainState s;
    s.scene  = std::move(scene);
    s.lenses = std::move(lenses);
    s.iln    = ILNParams::initialize(config.iln, config.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::size_t n = s.scene.size();
    s.optimizer.addGroup(kMeans, 3, n);
    s.optimizer.addGroup(kQuats, 4, n);
    s.optimizer.addGroup(kScales, 3, n);
    s.optimizer.addGroup(kOpacities, 1, n);
    s.optimizer.addGroup(kSh, 12, n);
    s.optimizer.addGroup(kFocal, 1, s.lenses.size());
    s.optimizer.addGroup(kAperture, 1, s.lenses.size());
    s.optimizer.addGroup(kIln, static_cast<int>(s.iln.parameterCount()), 1);
    return s;
}

std::size_t
injectPoints(Scene &scene, std::size_t count, std::mt19937_64 &rng) {
    if (scene.size() == 0) {
        throw DomainError("injectPoints: the scene is empty");
    }
    if (count == 0) {
        return 0;
    }
    Vec3 lo = scene.means[0], hi = scene.means[0];
    for (const Vec3 &m : scene.means) {
        lo = lo.cwiseMin(m);
        hi = hi.cwiseMax(m);
    }
    const Vec3 pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    const PointIndex index(scene.means);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t base = scene.size();
    scene.reserve(base + count);
    for (std::size_t k = 0; k < count; ++k) {
        Vec3 p;
        for (int a = 0; a < 3; ++a) {
            p[a] = lo[a] + (hi[a] - lo[a]) * u(rng);
        }
        const std::size_t nn = index.nearest(p, 1).front().index;
        scene.means.push_back(p);
        scene.quats.emplace_back(1.0, 0.0, 0.0, 0.0);
        scene.logScales.push_back(scene.logScales[nn]);
        scene.opacityLogits.push_back(scene.opacityLogits[nn]);
        scene.sh.push_back(scene.sh[nn]);
    }
    return count;
}

std::vector<bool>
pruneMask(const Scene &scene, double threshold) {
    std::vector<bool> keep(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        keep[i] = scene.opacity(i) >= threshold;
    }
    return keep;
}

namespace {

double
maxValue(const Image &img) {
    double m = 0.0;
    for (double v : img.data()) {
        m = std::max(m, v);
    }
    return m;
}

Image
scaled(const Image &img, double s) {
    Image out = img;
    for (double &v : out.data()) {
        v *= s;
    }
    return out;
}

Image
sum(const Image &a, const Image &b) {
    Image out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] += b.data()[i];
    }
    return out;
}

std::string
diagnostic(int it, int view, Stage stage, const LensParams &lens, double loss,
           std::size_t gaussians) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "non-finite loss or gradient at iteration " << it << " (stage " << stageName(stage)
        << ", view " << view << ", f=" << lens.focalDistance << ", Q=" << lens.aperture
        << ", loss=" << loss << ", gaussians=" << gaussians << ")";
    return msg.str();
}

/// Converts physical gradients to the optimizer's parameterization and steps every scene group.
void
stepScene(TrainState &state, const GradientSet &g, const TrainConfig &config, int it,
          int total) {
    Scene &scene        = state.scene;
    const std::size_t n = scene.size();
    std::vector<Vec3> dLogScales(n);
    std::vector<double> dLogits(n);
    for (std::size_t i = 0; i < n; ++i) {
        dLogScales[i] = g.dScales[i].cwiseProduct(scene.scale(i));
        const double o = scene.opacity(i);
        dLogits[i]     = g.dOpacities[i] * o * (1.0 - o);
    }
    Adam &adam = state.optimizer;
    adam.step(kMeans, flat(scene.means, 3), flat(g.dMeans, 3), config.lr.meansAt(it, total));
    adam.step(kQuats, flat(scene.quats, 4), flat(g.dQuats, 4), config.lr.rotation);
    adam.step(kScales, flat(scene.logScales, 3), flat(dLogScales, 3), config.lr.scales);
    adam.step(kOpacities, flat(scene.opacityLogits, 1), flat(dLogits, 1), config.lr.opacity);
    adam.step(kSh, flat(scene.sh, 12), flat(g.dSh, 12), config.lr.color);
}

void
stepLens(TrainState &state, int view, const GradientSet &g, const TrainConfig &config) {
    LensParams &lens = state.lenses[view];
    double f = lens.focalDistance, q = lens.aperture;
    const double df = g.dFocalDistance, dq = g.dAperture;
    state.optimizer.stepRow(kFocal, view, {&f, 1}, {&df, 1}, config.lr.focal);
    state.optimizer.stepRow(kAperture, view, {&q, 1}, {&dq, 1}, config.lr.aperture);
    lens.focalDistance = std::max(f, kMinFocalDistance);
    lens.aperture      = std::max(q, 0.0);
}

void
stepIln(TrainState &state, const ILNGradients &g, const TrainConfig &config) {
    std::vector<double> params, grads;
    state.iln.flatten(params);
    grads.reserve(params.size());
    for (const auto &layer : g.layers) {
        grads.insert(grads.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
        grads.insert(grads.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    }
    state.optimizer.step(kIln, params, grads, config.lr.iln);
    state.iln.unflatten(params);
}

} // namespace

std::vector<MetricsRow>
train(TrainState &state, const std::vector<TrainView> &views, const TrainConfig &config,
      const std::function<void(const MetricsRow &)> &onRow, int stopAt) {
    config.validate();
    if (views.empty()) {
        throw ValidationError("train: no views");
    }
    if (state.lenses.size() != views.size()) {
        throw ValidationError("train: one lens per view is required");
    }
    if (state.scene.size() == 0) {
        throw ValidationError("train: the scene is empty");
    }
    if (!validateScene(state.scene).empty()) {
        throw ValidationError("train: the initial scene violates its invariants");
    }
    for (const TrainView &v : views) {
        v.pose.validate();
        if (v.image.width() != v.pose.intrinsics.width ||
            v.image.height() != v.pose.intrinsics.height || v.image.channels() != 3) {
            throw ValidationError("train: view " + std::to_string(v.index) +
                                  " image does not match its intrinsics");
        }
    }

    const Schedule sched = config.schedule.scaled();
    const int total      = sched.totalIterations;
    const int viewCount  = static_cast<int>(views.size());
    RenderSettings settings = config.raster;

    // One generator drives view order and injection; replaying from iteration 0 with the same
    // seed reproduces every draw.
    std::mt19937_64 rng(config.seed);
    std::vector<int> order;
    std::size_t cursor = 0;
    auto nextView      = [&] {
        if (cursor == order.size()) {
            order.resize(viewCount);
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        return order[cursor++];
    };
    // Replay the draws of the iterations already done when resuming.
    for (std::uint64_t k = 0; k < state.iteration; ++k) {
        if (!config.lensOnly && static_cast<int>(k) == sched.injectionIteration) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (int d = 0; d < 3 * sched.injectionCount; ++d) {
                u(rng);
            }
        }
        nextView();
    }

    std::vector<std::optional<FeatureMap>> peCache(viewCount);
    std::vector<MetricsRow> rows;

    const int end = stopAt >= 0 ? std::min(stopAt, total) : total;
    for (int it = static_cast<int>(state.iteration); it < end; ++it) {
        if (!config.lensOnly && it == sched.injectionIteration && sched.injectionCount > 0) {
            const std::size_t added =
                injectPoints(state.scene, static_cast<std::size_t>(sched.injectionCount), rng);
            appendSceneRows(state.optimizer, added);
        }

        const int m           = nextView();
        const TrainView &view = views[m];
        const bool detail     = it >= sched.warmupEnd && config.detailEnhancement;
        const Stage stage     = it < sched.warmupEnd ? Stage::Warmup : Stage::Refine;
        const LensParams lens = state.lenses[m];

        const RenderOutput out = render(state.scene, view.pose, lens, settings);
        LossParts parts;
        double loss = 0.0;
        GradientSet grads;
        std::optional<RenderOutput> aif;
        std::optional<ILNGradients> ilnGrads;

        if (!detail) {
            const LossValue rec = reconstructionLoss(out.color, view.image, config.loss);
            parts.rec           = rec.value;
            loss                = rec.value;
            RenderUpstream up;
            up.dColor = rec.grad;
            grads     = renderBackward(state.scene, view.pose, lens, out, up, settings);
        } else {
            aif = renderAllInFocus(state.scene, view.pose, settings);
            if (!peCache[m]) {
                peCache[m] = positionalEncoding(out.color.width(), out.color.height(), m,
                                                viewCount, config.iln.pe);
            }
            // Depth and CoC enter the network rescaled by their (detached) frame maxima.
            const double depthMax = maxValue(out.depth);
            const double cocMax   = maxValue(out.coc);
            const double ds       = depthMax > 0.0 ? 1.0 / depthMax : 1.0;
            const double cs       = cocMax > 0.0 ? 1.0 / cocMax : 1.0;
            const ILNOutput mask  = ilnForward(state.iln, out.color, scaled(out.depth, ds),
                                               scaled(out.coc, cs), *peCache[m]);
            const DetailLoss det =
                detailLoss(mask.mask, aif->color, out.color, view.image, config.loss);
            const MaskLoss mk   = maskCorrelationLoss(mask.mask, out.coc);
            const LossValue reg = maskEntropyReg(mask.mask, config.loss.symmetricReg);
            parts.detail        = det.value;
            parts.mask          = mk.value;
            parts.reg           = reg.value;
            loss                = totalObjective(Stage::Refine, parts, config.loss);

            Image dMask = det.dMask;
            for (std::size_t i = 0; i < dMask.size(); ++i) {
                dMask.data()[i] += config.loss.mask * mk.grad.data()[i] +
                                   config.loss.reg * reg.grad.data()[i];
            }
            ilnGrads = ilnBackward(state.iln, mask, dMask);

            RenderUpstream up;
            up.dColor = sum(det.dDefocused, ilnGrads->dImage);
            up.dDepth = scaled(ilnGrads->dDepth, ds);
            up.dCoc   = scaled(ilnGrads->dCoc, cs);
            grads     = renderBackward(state.scene, view.pose, lens, out, up, settings);

            RenderUpstream upAif;
            upAif.dColor = det.dAif;
            GradientSet gAif =
                renderBackward(state.scene, view.pose, LensParams{1.0, 0.0}, *aif, upAif, settings);
            gAif.dFocalDistance = 0.0;
            gAif.dAperture      = 0.0;
            grads += gAif;
        }

        if (!std::isfinite(loss) || !grads.allFinite()) {
            throw TrainingError(diagnostic(it, m, stage, lens, loss, state.scene.size()));
        }

        if (!config.lensOnly) {
            stepScene(state, grads, config, it, total);
            if (ilnGrads) {
                stepIln(state, *ilnGrads, config);
            }
        }
        if (config.optimizeLens && settings.depthOfField) {
            stepLens(state, m, grads, config);
        }

        if (!config.lensOnly && config.pruneThreshold > 0.0 && (it + 1) % sched.pruneInterval == 0) {
            const std::vector<bool> keep = pruneMask(state.scene, config.pruneThreshold);
            if (std::find(keep.begin(), keep.end(), false) != keep.end()) {
                state.scene.compact(keep);
                compactSceneRows(state.optimizer, keep);
            }
        }
        state.iteration = static_cast<std::uint64_t>(it + 1);

        if (it % config.logEvery == 0 || it + 1 == total) {
            MetricsRow row;
            row.iteration      = it;
            row.stage          = stage;
            row.view           = m;
            row.loss           = loss;
            row.parts          = parts;
            row.gaussians      = state.scene.size();
            row.psnrAllInFocus = std::numeric_limits<double>::quiet_NaN();
            if (view.allInFocus) {
                row.psnrAllInFocus =
                    psnr(renderAllInFocus(state.scene, view.pose, settings).color,
                         *view.allInFocus);
            }
            rows.push_back(row);
            if (onRow) {
                onRow(row);
            }
        }
    }
    return rows;
}

std::string
metricsCsv(const std::vector<MetricsRow> &rows) {
    std::string out = "iter,stage,view,loss,l_rec,l_detail,l_mk,l_reg,psnr_aif,gaussians\n";
    char buf[512];
    for (const MetricsRow &r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.6f,%zu\n",
                      r.iteration, stageName(r.stage), r.view, r.loss, r.parts.rec,
                      r.parts.detail, r.parts.mask, r.parts.reg, r.psnrAllInFocus, r.gaussians);
        out += buf;
    }
    return out;
}

void
writeMetricsCsv(const std::filesystem::path &path, const std::vector<MetricsRow> &rows) {
    std::ofstream out(path, std::ios::binary);
    const std::string text = metricsCsv(rows);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw Error("failed writing " + path.string());
    }
}

Checkpoint
toCheckpoint(const TrainState &state, const std::vector<CameraPose> &poses,
             const Vec3 &background) {
    Checkpoint c;
    c.scene      = state.scene;
    c.background = background;
    c.poses      = poses;
    c.lenses     = state.lenses;
    c.iln        = state.iln;
    c.optimizer  = state.optimizer.groups();
    c.iteration  = state.iteration;
    return c;
}

TrainState
fromCheckpoint(const Checkpoint &ckpt, const TrainConfig &config) {
    TrainState s = makeTrainState(ckpt.scene, ckpt.lenses, config);
    if (ckpt.iln) {
        s.iln = *ckpt.iln;
    }
    for (const auto &[name, group] : ckpt.optimizer) {
        s.optimizer.groups()[name] = group;
    }
    s.iteration = ckpt.iteration;
    return s;
}

} // namespace dofsplat
