// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/camera_init.hpp>
#include <dofsplat/error.hpp>
#include <dofsplat/image.hpp>
#include <dofsplat/service.hpp>

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

namespace dofsplat {

namespace {

using nlohmann::json;

struct BadRequest {
    std::string message;
};

ServiceResponse
jsonResponse(int status, const json &body) {
    return ServiceResponse{status, "application/json", body.dump(), {}};
}

ServiceResponse
errorResponse(int status, const std::string &message) {
    return jsonResponse(status, json{{"error", message}});
}

const std::string *
find(const QueryParams &params, const char *key) {
    const auto it = params.find(key);
    return it == params.end() ? nullptr : &it->second;
}

long long
parseInt(const QueryParams &params, const char *key) {
    const std::string *s = find(params, key);
    if (s == nullptr) {
        throw BadRequest{std::string("missing parameter '") + key + "'"};
    }
    long long v = 0;
    const auto [end, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || end != s->data() + s->size()) {
        throw BadRequest{std::string("parameter '") + key + "' is not an integer"};
    }
    return v;
}

std::optional<double>
parseReal(const QueryParams &params, const char *key) {
    const std::string *s = find(params, key);
    if (s == nullptr) {
        return std::nullopt;
    }
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || end != s->data() + s->size() || !std::isfinite(v)) {
        throw BadRequest{std::string("parameter '") + key + "' is not a finite number"};
    }
    return v;
}

std::string
exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

Image
displayMap(const Image &values, const Image &alpha, double &lo, double &hi) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (alpha.data()[i] > 0.0) {
            lo = std::min(lo, values.data()[i]);
            hi = std::max(hi, values.data()[i]);
        }
    }
    if (!(lo <= hi)) {
        lo = hi = 0.0;
    }
    Image out(values.width(), values.height(), 1);
    const double span = hi - lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (alpha.data()[i] > 0.0 && span > 0.0) {
            out.data()[i] = (values.data()[i] - lo) / span;
        }
    }
    return out;
}

RefocusService::RefocusService(Checkpoint checkpoint, std::size_t cacheEntries)
    : mCheckpoint(std::move(checkpoint)), mCacheEntries(cacheEntries) {
    if (mCheckpoint.lenses.size() != mCheckpoint.poses.size()) {
        throw ValidationError("checkpoint has " + std::to_string(mCheckpoint.poses.size()) +
                              " poses but " + std::to_string(mCheckpoint.lenses.size()) +
                              " lenses");
    }
    mSettings.background = mCheckpoint.background;

    json views = json::array();
    for (std::size_t m = 0; m < mCheckpoint.poses.size(); ++m) {
        const CameraPose &pose = mCheckpoint.poses[m];
        json v{{"m", m},
               {"f", mCheckpoint.lenses[m].focalDistance},
               {"q", mCheckpoint.lenses[m].aperture},
               {"width", pose.intrinsics.width},
               {"height", pose.intrinsics.height}};
        const std::vector<double> depths = viewDepths(mCheckpoint.scene, pose);
        if (depths.empty()) {
            v["depth"] = nullptr;
        } else {
            const DepthStats s = depthStats(depths);
            v["depth"] = json{{"p10", s.p10}, {"p50", s.p50}, {"p90", s.p90}};
        }
        views.push_back(std::move(v));
    }
    json meta{{"views", views}, {"gaussians", mCheckpoint.scene.size()}};
    if (!mCheckpoint.poses.empty()) {
        meta["width"]  = mCheckpoint.poses[0].intrinsics.width;
        meta["height"] = mCheckpoint.poses[0].intrinsics.height;
    }
    mMeta = meta.dump();
}

std::size_t
RefocusService::cacheHits() const {
    std::lock_guard lock(mMutex);
    return mHits;
}

ServiceResponse
RefocusService::handle(const std::string &path, const QueryParams &params) const {
    try {
        if (path == "/meta") {
            return meta();
        }
        if (path == "/render") {
            return renderMap(params);
        }
        if (path == "/depth_at") {
            return depthAt(params);
        }
        return errorResponse(404, "no such endpoint: " + path);
    } catch (const BadRequest &e) {
        return errorResponse(400, e.message);
    } catch (const ValidationError &e) {
        return errorResponse(400, e.what());
    } catch (const DomainError &e) {
        return errorResponse(400, e.what());
    } catch (const std::exception &e) {
        return errorResponse(500, e.what());
    }
}

ServiceResponse
RefocusService::meta() const {
    return ServiceResponse{200, "application/json", mMeta, {}};
}

ServiceResponse
RefocusService::renderMap(const QueryParams &params) const {
    const long long view = parseInt(params, "view");
    const std::optional<double> f = parseReal(params, "f");
    const std::optional<double> q = parseReal(params, "q");
    const std::string *mapArg = find(params, "map");
    const std::string map = mapArg == nullptr ? "color" : *mapArg;
    if (map != "color" && map != "depth" && map != "coc") {
        throw BadRequest{"map must be color, depth or coc"};
    }
    if (view < 0 || view >= static_cast<long long>(viewCount())) {
        return errorResponse(404, "unknown view " + std::to_string(view));
    }

    LensParams lens = mCheckpoint.lenses[view];
    if (f) {
        lens.focalDistance = *f;
    }
    if (q) {
        lens.aperture = *q;
    }
    lens.validate();

    const std::string key =
        std::to_string(view) + "|" + exact(lens.focalDistance) + "|" + exact(lens.aperture) + "|" + map;
    ServiceResponse cached;
    if (cacheGet(key, cached)) {
        return cached;
    }

    const RenderOutput out = render(mCheckpoint.scene, mCheckpoint.poses[view], lens, mSettings);
    ServiceResponse resp;
    resp.contentType = "image/png";
    if (map == "color") {
        resp.body = encodePng(out.color);
    } else {
        double lo = 0.0, hi = 0.0;
        const Image values = map == "depth" ? out.normalizedDepth() : out.normalizedCoc();
        resp.body = encodePng(displayMap(values, out.alpha, lo, hi));
        resp.headers["X-Map-Min"] = exact(lo);
        resp.headers["X-Map-Max"] = exact(hi);
    }
    resp.headers["X-Focal-Distance"] = exact(lens.focalDistance);
    resp.headers["X-Aperture"]       = exact(lens.aperture);
    cachePut(key, resp);
    return resp;
}

ServiceResponse
RefocusService::depthAt(const QueryParams &params) const {
    const long long view = parseInt(params, "view");
    const long long x    = parseInt(params, "x");
    const long long y    = parseInt(params, "y");
    if (view < 0 || view >= static_cast<long long>(viewCount())) {
        return errorResponse(404, "unknown view " + std::to_string(view));
    }
    const Intrinsics &k = mCheckpoint.poses[view].intrinsics;
    if (x < 0 || y < 0 || x >= k.width || y >= k.height) {
        throw BadRequest{"pixel outside the image"};
    }
    const RenderOutput &aif = allInFocus(static_cast<int>(view));
    const double alpha = aif.alpha.at(static_cast<int>(x), static_cast<int>(y));
    json body{{"alpha", alpha}};
    if (alpha > 0.0) {
        body["depth"] = aif.depth.at(static_cast<int>(x), static_cast<int>(y)) / alpha;
    } else {
        body["depth"] = nullptr;
    }
    return jsonResponse(200, body);
}

const RenderOutput &
RefocusService::allInFocus(int view) const {
    {
        std::lock_guard lock(mMutex);
        const auto it = mAifRenders.find(view);
        if (it != mAifRenders.end()) {
            return *it->second;
        }
    }
    auto out = std::make_shared<const RenderOutput>(
        renderAllInFocus(mCheckpoint.scene, mCheckpoint.poses[view], mSettings));
    std::lock_guard lock(mMutex);
    // A concurrent request may have rendered the same view; both results are identical.
    return *mAifRenders.emplace(view, std::move(out)).first->second;
}

bool
RefocusService::cacheGet(const std::string &key, ServiceResponse &out) const {
    std::lock_guard lock(mMutex);
    const auto it = mIndex.find(key);
    if (it == mIndex.end()) {
        return false;
    }
    mLru.splice(mLru.begin(), mLru, it->second);
    out = it->second->second;
    ++mHits;
    return true;
}

void
RefocusService::cachePut(const std::string &key, const ServiceResponse &value) const {
    if (mCacheEntries == 0) {
        return;
    }
    std::lock_guard lock(mMutex);
    if (mIndex.count(key) != 0) {
        return;
    }
    mLru.emplace_front(key, value);
    mIndex[key] = mLru.begin();
    while (mLru.size() > mCacheEntries) {
        mIndex.erase(mLru.back().first);
        mLru.pop_back();
    }
}

struct RefocusServer::Impl {
    Impl(const RefocusService &s, ServeOptions o) : service(s), options(std::move(o)) {}
    const RefocusService &service;
    ServeOptions options;
    httplib::Server server;
};

RefocusServer::RefocusServer(const RefocusService &service, ServeOptions options)
    : mImpl(std::make_unique<Impl>(service, std::move(options))) {
    if (mImpl->options.workers <= 0) {
        throw ValidationError("serve needs at least one worker");
    }
    httplib::Server &srv = mImpl->server;
    const std::size_t workers = static_cast<std::size_t>(mImpl->options.workers);
    srv.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };

    if (!mImpl->options.staticDir.empty()) {
        if (!srv.set_mount_point("/", mImpl->options.staticDir.string())) {
            throw Error("static directory not found: " + mImpl->options.staticDir.string());
        }
    }
    const RefocusService *svc = &mImpl->service;
    for (const char *route : {"/meta", "/render", "/depth_at"}) {
        srv.Get(route, [svc](const httplib::Request &req, httplib::Response &res) {
            QueryParams params;
            for (const auto &[k, v] : req.params) {
                params.emplace(k, v);
            }
            const ServiceResponse r = svc->handle(req.path, params);
            res.status = r.status;
            for (const auto &[k, v] : r.headers) {
                res.set_header(k, v);
            }
            res.set_content(r.body, r.contentType);
        });
    }
}

RefocusServer::~RefocusServer() {
    stop();
}

int
RefocusServer::bind() {
    httplib::Server &srv = mImpl->server;
    if (mImpl->options.port == 0) {
        const int port = srv.bind_to_any_port(mImpl->options.host);
        if (port < 0) {
            throw Error("cannot bind " + mImpl->options.host);
        }
        return port;
    }
    if (!srv.bind_to_port(mImpl->options.host, mImpl->options.port)) {
        throw Error("cannot bind " + mImpl->options.host + ":" +
                    std::to_string(mImpl->options.port));
    }
    return mImpl->options.port;
}

void
RefocusServer::run() {
    mImpl->server.listen_after_bind();
}

void
RefocusServer::stop() {
    if (mImpl) {
        mImpl->server.stop();
    }
}

} // namespace dofsplat
