// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/camera_init.hpp>
#include <dofsplat/config.hpp>
#include <dofsplat/error.hpp>
#include <dofsplat/image.hpp>
#include <dofsplat/scene_io.hpp>
#include <dofsplat/service.hpp>
#include <dofsplat/synthetic.hpp>
#include <dofsplat/trainer.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace dofsplat;

namespace {

constexpr int kExitOk      = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage   = 2;

struct UsageError {
    std::string message;
};

int
cmdTrain(const fs::path &configPath, const fs::path &resume, bool quiet) {
    if (!fs::is_regular_file(configPath)) {
        throw UsageError{"config not found: " + configPath.string()};
    }
    const AppConfig cfg = loadConfig(configPath);
    if (cfg.points.empty() || cfg.views.empty()) {
        throw UsageError{"config needs data.points and data.views"};
    }
    const LoadedViews loaded = loadTrainViews(cfg.views);
    std::vector<CameraPose> poses;
    for (const TrainView &v : loaded.views) {
        poses.push_back(v.pose);
    }

    TrainState state;
    if (!resume.empty()) {
        state = fromCheckpoint(loadCheckpoint(resume), cfg.train);
        if (state.lenses.size() != loaded.views.size()) {
            throw ValidationError("resume checkpoint has a different view count");
        }
    } else {
        Scene scene    = loadPlyPoints(cfg.points);
        scene.shDegree = cfg.shDegree;
        std::vector<LensParams> lenses;
        if (loaded.hasLens) {
            for (const TrainView &v : loaded.views) {
                lenses.push_back(v.lens);
            }
        } else {
            LensInit init = initializeLenses(scene, poses, cfg.tau);
            for (const std::string &w : init.warnings) {
                std::cerr << "warning: " << w << "\n";
            }
            lenses = std::move(init.lenses);
        }
        if (!quiet) {
            for (std::size_t m = 0; m < lenses.size(); ++m) {
                std::printf("view %zu: initial f=%.6g Q=%.6g\n", m, lenses[m].focalDistance,
                            lenses[m].aperture);
            }
        }
        state = makeTrainState(std::move(scene), std::move(lenses), cfg.train);
    }

    const int every = std::max(1, cfg.train.logEvery) * 10;
    const std::vector<MetricsRow> rows =
        train(state, loaded.views, cfg.train, [&](const MetricsRow &r) {
            if (!quiet && r.iteration % every == 0) {
                std::printf("iter %6d %-7s loss %.6f psnr_aif %7.3f gaussians %zu\n", r.iteration,
                            stageName(r.stage), r.loss, r.psnrAllInFocus, r.gaussians);
                std::fflush(stdout);
            }
        });
    writeMetricsCsv(cfg.metrics, rows);
    saveCheckpoint(cfg.checkpoint, toCheckpoint(state, poses, cfg.train.raster.background));
    if (!quiet) {
        for (std::size_t m = 0; m < state.lenses.size(); ++m) {
            std::printf("view %zu: f=%.6g Q=%.6g\n", m, state.lenses[m].focalDistance,
                        state.lenses[m].aperture);
        }
        std::printf("wrote %s and %s\n", cfg.checkpoint.string().c_str(),
                    cfg.metrics.string().c_str());
    }
    return kExitOk;
}

fs::path
suffixed(const fs::path &out, const std::string &suffix, bool gray) {
    std::string ext = out.extension().string();
    if (gray && ext == ".ppm") {
        ext = ".pgm";
    }
    return out.parent_path() / (out.stem().string() + suffix + ext);
}

struct RenderArgs {
    fs::path checkpoint;
    int view = 0;
    std::optional<double> f;
    std::optional<double> q;
    bool aif   = false;
    bool coc   = false;
    bool depth = false;
    fs::path poses;
    fs::path output = "render.png";
};

int
cmdRender(const RenderArgs &a) {
    const Checkpoint ckpt = loadCheckpoint(a.checkpoint);
    CameraPose pose;
    std::optional<LensParams> lens;
    if (!a.poses.empty()) {
        const std::vector<ViewEntry> entries = loadViews(a.poses);
        if (a.view < 0 || a.view >= static_cast<int>(entries.size())) {
            throw ValidationError("view " + std::to_string(a.view) + " out of range (pose file has " +
                                  std::to_string(entries.size()) + ")");
        }
        const ViewEntry &e = entries[a.view];
        pose = e.pose;
        if (e.focalDistance && e.aperture) {
            lens = LensParams{*e.focalDistance, *e.aperture};
        } else if (a.view < static_cast<int>(ckpt.lenses.size())) {
            lens = ckpt.lenses[a.view];
        }
    } else {
        if (a.view < 0 || a.view >= static_cast<int>(ckpt.poses.size())) {
            throw ValidationError("view " + std::to_string(a.view) + " out of range (checkpoint has " +
                                  std::to_string(ckpt.poses.size()) + ")");
        }
        pose = ckpt.poses[a.view];
        lens = ckpt.lenses[a.view];
    }
    if (!lens) {
        lens = LensParams{};
        if (!a.f || !(a.q || a.aif)) {
            throw ValidationError("no trained lens for this pose; pass --f and --Q");
        }
    }
    if (a.f) {
        lens->focalDistance = *a.f;
    }
    if (a.q) {
        lens->aperture = *a.q;
    }
    if (a.aif) {
        lens->aperture = 0.0;
    }
    lens->validate();

    RenderSettings settings;
    settings.background   = ckpt.background;
    const RenderOutput out = render(ckpt.scene, pose, *lens, settings);
    writeImage(a.output, out.color);
    std::printf("%s  f=%.6g Q=%.6g\n", a.output.string().c_str(), lens->focalDistance,
                lens->aperture);
    if (a.depth) {
        double lo = 0.0, hi = 0.0;
        const fs::path p = suffixed(a.output, "_depth", true);
        writeImage(p, displayMap(out.normalizedDepth(), out.alpha, lo, hi));
        std::printf("%s  min=%.17g max=%.17g\n", p.string().c_str(), lo, hi);
    }
    if (a.coc) {
        double lo = 0.0, hi = 0.0;
        const fs::path p = suffixed(a.output, "_coc", true);
        writeImage(p, displayMap(out.normalizedCoc(), out.alpha, lo, hi));
        std::printf("%s  min=%.17g max=%.17g\n", p.string().c_str(), lo, hi);
    }
    return kExitOk;
}

RefocusServer *gServer = nullptr;

void
onSignal(int) {
    if (gServer != nullptr) {
        gServer->stop();
    }
}

int
cmdServe(const fs::path &checkpoint, ServeOptions options, int cacheEntries) {
    const RefocusService service(loadCheckpoint(checkpoint),
                                 static_cast<std::size_t>(std::max(cacheEntries, 0)));
    RefocusServer server(service, std::move(options));
    const int port = server.bind();
    std::printf("serving %zu views on port %d\n", service.viewCount(), port);
    std::fflush(stdout);
    gServer = &server;
    std::signal(SIGINT, onSignal);
    std::signal(SIGTERM, onSignal);
    server.run();
    gServer = nullptr;
    return kExitOk;
}

struct SynthArgs {
    std::string layout = "two-plane";
    int views          = 4;
    int size           = 64;
    int gaussians      = 2000;
    std::uint64_t seed = 0;
    std::vector<double> focal{2.0, 6.0};
    std::vector<double> aperture{20.0};
    double fraction = 0.3;
    double noise    = 0.01;
    bool withLens   = false;
    fs::path out    = "synthetic";
};

int
cmdSynth(const SynthArgs &a) {
    SyntheticSpec spec;
    if (a.layout == "two-plane") {
        spec.layout = SyntheticLayout::TwoPlane;
    } else if (a.layout == "random-box") {
        spec.layout = SyntheticLayout::RandomBox;
    } else {
        throw UsageError{"--layout must be two-plane or random-box"};
    }
    spec.viewCount      = a.views;
    spec.width          = a.size;
    spec.height         = a.size;
    spec.focalPx        = a.size;
    spec.gaussianCount  = a.gaussians;
    spec.focalDistances = a.focal;
    spec.apertures      = a.aperture;
    const SyntheticDataset ds = generateSynthetic(spec, a.seed);

    fs::create_directories(a.out / "images");
    writePly(a.out / "points.ply", samplePointCloud(ds.scene, a.fraction, a.noise, a.seed + 1),
             true);
    std::vector<ViewEntry> entries;
    Checkpoint gt;
    gt.scene      = ds.scene;
    gt.background = ds.background;
    for (const TrainView &v : ds.views) {
        char name[64];
        std::snprintf(name, sizeof name, "images/view_%03d.png", v.index);
        char aifName[64];
        std::snprintf(aifName, sizeof aifName, "images/view_%03d_aif.png", v.index);
        writeImage(a.out / name, v.image);
        writeImage(a.out / aifName, *v.allInFocus);
        ViewEntry e;
        e.index      = v.index;
        e.pose       = v.pose;
        e.image      = name;
        e.allInFocus = aifName;
        if (a.withLens) {
            e.focalDistance = v.lens.focalDistance;
            e.aperture      = v.lens.aperture;
        }
        entries.push_back(e);
        gt.poses.push_back(v.pose);
        gt.lenses.push_back(v.lens);
    }
    saveViews(a.out / "views.json", entries);
    saveCheckpoint(a.out / "ground_truth.dsp", gt);

    const nlohmann::json config = {
        {"data", {{"points", "points.ply"}, {"views", "views.json"}}},
        {"output", {{"checkpoint", "checkpoint.dsp"}, {"metrics", "metrics.csv"}}},
        {"camera_init", {{"tau", 15.0}}},
        {"train", {{"scale", 0.01}, {"seed", a.seed}}},
    };
    std::ofstream(a.out / "config.json") << config.dump(2) << "\n";
    std::printf("wrote %zu views to %s\n", entries.size(), a.out.string().c_str());
    return kExitOk;
}

} // namespace

int
main(int argc, char **argv) {
    CLI::App app{"dofsplat: depth-of-field Gaussian splatting"};
    app.require_subcommand(1);

    fs::path configPath, resume;
    bool quiet = false;
    CLI::App *train = app.add_subcommand("train", "train a scene from a JSON config");
    train->add_option("config", configPath, "config file")->required();
    train->add_option("--resume", resume, "continue from a checkpoint");
    train->add_flag("--quiet", quiet, "only print warnings");

    RenderArgs ra;
    CLI::App *render = app.add_subcommand("render", "render a view from a checkpoint");
    render->add_option("checkpoint", ra.checkpoint, "checkpoint file")->required();
    render->add_option("--view", ra.view, "view index");
    render->add_option("--f", ra.f, "focal distance (default: trained)");
    render->add_option("--Q,--q", ra.q, "aperture (default: trained)");
    render->add_flag("--aif", ra.aif, "all-in-focus (Q = 0)");
    render->add_flag("--coc", ra.coc, "also write the CoC map (<out>_coc)");
    render->add_flag("--depth", ra.depth, "also write the depth map (<out>_depth)");
    render->add_option("--poses", ra.poses, "view JSON supplying the pose instead");
    render->add_option("-o,--output", ra.output, "output image (.png, .ppm)");

    fs::path serveCkpt, configForServe;
    ServeOptions so;
    int cacheEntries = 64;
    CLI::App *serve  = app.add_subcommand("serve", "HTTP refocus service");
    serve->add_option("checkpoint", serveCkpt, "checkpoint file")->required();
    serve->add_option("--port", so.port, "port (0 picks one)");
    serve->add_option("--host", so.host, "bind address");
    serve->add_option("--workers", so.workers, "render worker threads");
    serve->add_option("--cache", cacheEntries, "cached responses");
    serve->add_option("--static", so.staticDir, "directory served at /");
    serve->add_option("--config", configForServe, "read serve.* keys from a config");

    SynthArgs sa;
    CLI::App *synth = app.add_subcommand("synth", "write a synthetic defocused dataset");
    synth->add_option("--layout", sa.layout, "two-plane or random-box");
    synth->add_option("--views", sa.views, "view count");
    synth->add_option("--size", sa.size, "image edge in pixels");
    synth->add_option("--gaussians", sa.gaussians, "ground-truth Gaussian count");
    synth->add_option("--seed", sa.seed, "random seed");
    synth->add_option("--focal", sa.focal, "focal distances, cycled over views");
    synth->add_option("--aperture", sa.aperture, "apertures, cycled over views");
    synth->add_option("--fraction", sa.fraction, "fraction of centers kept in points.ply");
    synth->add_option("--noise", sa.noise, "point noise relative to depth");
    synth->add_flag("--with-lens", sa.withLens, "store the true f and Q in views.json");
    synth->add_option("--out", sa.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*train) {
            return cmdTrain(configPath, resume, quiet);
        }
        if (*render) {
            return cmdRender(ra);
        }
        if (*serve) {
            if (!configForServe.empty()) {
                const AppConfig cfg = loadConfig(configForServe);
                if (serve->count("--port") == 0) {
                    so.port = cfg.servePort;
                }
                if (serve->count("--workers") == 0) {
                    so.workers = cfg.serveWorkers;
                }
                if (serve->count("--cache") == 0) {
                    cacheEntries = cfg.serveCacheSize;
                }
            }
            return cmdServe(serveCkpt, so, cacheEntries);
        }
        if (*synth) {
            return cmdSynth(sa);
        }
    } catch (const UsageError &e) {
        std::cerr << "error: " << e.message << "\n\n" << app.help();
        return kExitUsage;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
