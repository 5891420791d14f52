// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/config.hpp>
#include <dofsplat/error.hpp>

#include <json.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dofsplat {

namespace {

using nlohmann::json;

struct Key {
    const char *name;
    const char *help;
    std::function<void(AppConfig &, const json &, const std::filesystem::path &)> apply;
};

template <typename T>
T
as(const json &v, const char *key) {
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) {
        ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
        ok = v.is_number_integer() && (std::is_signed_v<T> || v.is_number_unsigned());
    } else if constexpr (std::is_floating_point_v<T>) {
        ok = v.is_number();
    }
    if (ok) {
        try {
            return v.get<T>();
        } catch (const json::exception &) {
        }
    }
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
}

std::filesystem::path
resolve(const json &v, const char *key, const std::filesystem::path &base) {
    const std::filesystem::path p = as<std::string>(v, key);
    return p.is_relative() && !base.empty() ? base / p : p;
}

#define DOFSPLAT_NUM(KEY, FIELD, TYPE, HELP)                                                     \
    Key {                                                                                        \
        KEY, HELP, [](AppConfig &c, const json &v, const std::filesystem::path &) {              \
            c.FIELD = as<TYPE>(v, KEY);                                                          \
        }                                                                                        \
    }

const std::vector<Key> &
keys() {
    static const std::vector<Key> table = {
        {"data.points", "PLY point cloud used to initialize the Gaussians",
         [](AppConfig &c, const json &v, const std::filesystem::path &b) {
             c.points = resolve(v, "data.points", b);
         }},
        {"data.views", "JSON view container with poses and reference images",
         [](AppConfig &c, const json &v, const std::filesystem::path &b) {
             c.views = resolve(v, "data.views", b);
         }},
        {"output.checkpoint", "checkpoint written after training",
         [](AppConfig &c, const json &v, const std::filesystem::path &b) {
             c.checkpoint = resolve(v, "output.checkpoint", b);
         }},
        {"output.metrics", "metrics CSV written after training",
         [](AppConfig &c, const json &v, const std::filesystem::path &b) {
             c.metrics = resolve(v, "output.metrics", b);
         }},
        DOFSPLAT_NUM("camera_init.tau", tau, double, "target CoC radius (px) over p10-p90 depth"),
        DOFSPLAT_NUM("loss.dssim", train.loss.dssim, double, "DSSIM weight in L_rec"),
        DOFSPLAT_NUM("loss.mk", train.loss.mask, double, "mask correlation weight"),
        DOFSPLAT_NUM("loss.reg", train.loss.reg, double, "mask entropy weight"),
        {"loss.norm", "\"l1\" (default) or \"mse\" pixel term",
         [](AppConfig &c, const json &v, const std::filesystem::path &) {
             const std::string s = as<std::string>(v, "loss.norm");
             if (s == "l1") {
                 c.train.loss.norm = ReconstructionNorm::L1;
             } else if (s == "mse") {
                 c.train.loss.norm = ReconstructionNorm::MSE;
             } else {
                 throw ValidationError("loss.norm must be \"l1\" or \"mse\"");
             }
         }},
        DOFSPLAT_NUM("loss.symmetric_reg", train.loss.symmetricReg, bool,
                     "add -(1-m)log(1-m) to the mask regularizer"),
        DOFSPLAT_NUM("train.iterations", train.schedule.totalIterations, int,
                     "total iterations before scaling"),
        DOFSPLAT_NUM("train.warmup", train.schedule.warmupEnd, int, "warm-up end before scaling"),
        DOFSPLAT_NUM("train.injection_iter", train.schedule.injectionIteration, int,
                     "point injection iteration before scaling"),
        DOFSPLAT_NUM("train.injection_count", train.schedule.injectionCount, int,
                     "injected points before scaling"),
        DOFSPLAT_NUM("train.prune_interval", train.schedule.pruneInterval, int,
                     "pruning period before scaling"),
        DOFSPLAT_NUM("train.scale", train.schedule.scale, double, "schedule scale factor"),
        DOFSPLAT_NUM("train.seed", train.seed, std::uint64_t, "random seed"),
        DOFSPLAT_NUM("train.coc_z_grad", train.raster.cocDepthGradient, bool,
                     "let CoC gradients reach Gaussian depth"),
        DOFSPLAT_NUM("train.detail_enhancement", train.detailEnhancement, bool,
                     "use the ILN composite loss in the refinement stage"),
        DOFSPLAT_NUM("train.lens_only", train.lensOnly, bool,
                     "freeze the scene and fit only f and Q"),
        DOFSPLAT_NUM("train.optimize_lens", train.optimizeLens, bool, "optimize f and Q"),
        DOFSPLAT_NUM("train.prune_threshold", train.pruneThreshold, double,
                     "opacity below which Gaussians are pruned"),
        DOFSPLAT_NUM("train.log_every", train.logEvery, int, "metrics row period"),
        DOFSPLAT_NUM("train.sh_degree", shDegree, int, "SH degree of the scene (0 or 1)"),
        DOFSPLAT_NUM("train.lr.means", train.lr.means, double, "initial center learning rate"),
        DOFSPLAT_NUM("train.lr.means_final", train.lr.meansFinal, double,
                     "final center learning rate"),
        DOFSPLAT_NUM("train.lr.scales", train.lr.scales, double, "log-scale learning rate"),
        DOFSPLAT_NUM("train.lr.focal", train.lr.focal, double, "focal distance learning rate"),
        DOFSPLAT_NUM("train.lr.aperture", train.lr.aperture, double, "aperture learning rate"),
        DOFSPLAT_NUM("train.lr.iln", train.lr.iln, double, "ILN learning rate"),
        DOFSPLAT_NUM("train.lr.rotation", train.lr.rotation, double, "quaternion learning rate"),
        DOFSPLAT_NUM("train.lr.opacity", train.lr.opacity, double, "opacity-logit learning rate"),
        DOFSPLAT_NUM("train.lr.color", train.lr.color, double, "SH learning rate"),
        DOFSPLAT_NUM("raster.tile_size", train.raster.tileSize, int, "tile edge in pixels"),
        {"raster.background", "background RGB triple",
         [](AppConfig &c, const json &v, const std::filesystem::path &) {
             const auto bg = as<std::vector<double>>(v, "raster.background");
             if (bg.size() != 3) {
                 throw ValidationError("raster.background needs three values");
             }
             c.train.raster.background = Vec3(bg[0], bg[1], bg[2]);
         }},
        DOFSPLAT_NUM("raster.normalize_blur", train.raster.normalizeBlur, bool,
                     "preserve splat mass when blurring"),
        DOFSPLAT_NUM("raster.cutoff_sigma", train.raster.cutoffSigma, double,
                     "footprint cutoff in standard deviations"),
        DOFSPLAT_NUM("iln.pixel_freqs", train.iln.pe.pixelFrequencies, int,
                     "PE frequencies per pixel axis"),
        DOFSPLAT_NUM("iln.view_freqs", train.iln.pe.viewFrequencies, int,
                     "PE frequencies for the view index"),
        DOFSPLAT_NUM("iln.width1", train.iln.width1, int, "ILN layer 1 width"),
        DOFSPLAT_NUM("iln.width2", train.iln.width2, int, "ILN layer 2 width"),
        DOFSPLAT_NUM("iln.width3", train.iln.width3, int, "ILN layer 3 width"),
        DOFSPLAT_NUM("serve.workers", serveWorkers, int, "render worker threads"),
        DOFSPLAT_NUM("serve.port", servePort, int, "HTTP port"),
        DOFSPLAT_NUM("serve.cache_entries", serveCacheSize, int, "cached responses"),
    };
    return table;
}

#undef DOFSPLAT_NUM

void
flatten(const json &node, const std::string &prefix, std::map<std::string, json> &out) {
    for (auto it = node.begin(); it != node.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it.value().is_object()) {
            flatten(it.value(), key, out);
        } else if (!out.emplace(key, it.value()).second) {
            throw ValidationError("config key '" + key + "' is given twice");
        }
    }
}

} // namespace

AppConfig
parseConfig(const std::string &text, const std::filesystem::path &baseDir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error &e) {
        throw FormatError(std::string("invalid config JSON: ") + e.what(), e.byte);
    }
    if (!doc.is_object()) {
        throw ValidationError("config must be a JSON object");
    }
    std::map<std::string, json> flat;
    flatten(doc, "", flat);

    std::map<std::string, const Key *> index;
    for (const Key &k : keys()) {
        index[k.name] = &k;
    }
    AppConfig cfg;
    for (const auto &[name, value] : flat) {
        const auto it = index.find(name);
        if (it == index.end()) {
            throw ValidationError("unknown config key '" + name + "'");
        }
        it->second->apply(cfg, value, baseDir);
    }
    if (cfg.shDegree < 0 || cfg.shDegree > kMaxShDegree) {
        throw ValidationError("train.sh_degree must be 0 or 1");
    }
    if (!(cfg.tau >= 0.0)) {
        throw ValidationError("camera_init.tau must be non-negative");
    }
    if (cfg.serveWorkers <= 0 || cfg.serveCacheSize < 0 || cfg.servePort < 0 ||
        cfg.servePort > 65535) {
        throw ValidationError("serve.* values are out of range");
    }
    cfg.train.validate();
    return cfg;
}

AppConfig
loadConfig(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open config " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parseConfig(ss.str(), path.parent_path());
}

std::vector<std::pair<std::string, std::string>>
configKeys() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const Key &k : keys()) {
        out.emplace_back(k.name, k.help);
    }
    return out;
}

} // namespace dofsplat
