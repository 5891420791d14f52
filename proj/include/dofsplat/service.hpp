// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Refocus service. RefocusService maps (path, query) to a response and holds no
// per-request state beyond a response cache, so it can be tested without sockets.
// RefocusServer puts it behind HTTP.
//
//   GET /meta                                  JSON: image size, per-view f, q, depth percentiles
//   GET /render?view=m[&f=..][&q=..][&map=..]  PNG; map is color (default), depth or coc
//   GET /depth_at?view=m&x=..&y=..             JSON {depth, alpha} from the all-in-focus render
//
// Depth and CoC renders are alpha-normalized, then min-max scaled over covered pixels; the
// constants go out as X-Map-Min / X-Map-Max.

#pragma once

#include <dofsplat/rasterizer.hpp>
#include <dofsplat/scene_io.hpp>

#include <cstddef>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

namespace dofsplat {

struct ServiceResponse {
    int status = 200;
    std::string contentType;
    std::string body;
    std::map<std::string, std::string> headers;
};

using QueryParams = std::map<std::string, std::string>;

/// Min-max scaling of a single-channel map over pixels with alpha > 0; other pixels are 0.
/// A constant map scales to 0. lo/hi receive the constants.
Image displayMap(const Image &values, const Image &alpha, double &lo, double &hi);

class RefocusService {
  public:
    explicit RefocusService(Checkpoint checkpoint, std::size_t cacheEntries = 64);

    /// Thread-safe.
    ServiceResponse handle(const std::string &path, const QueryParams &params) const;

    std::size_t viewCount() const {
        return mCheckpoint.poses.size();
    }
    const Checkpoint &checkpoint() const {
        return mCheckpoint;
    }
    const RenderSettings &settings() const {
        return mSettings;
    }
    /// Cache hits so far.
    std::size_t cacheHits() const;

  private:
    ServiceResponse meta() const;
    ServiceResponse renderMap(const QueryParams &params) const;
    ServiceResponse depthAt(const QueryParams &params) const;
    const RenderOutput &allInFocus(int view) const;

    bool cacheGet(const std::string &key, ServiceResponse &out) const;
    void cachePut(const std::string &key, const ServiceResponse &value) const;

    Checkpoint mCheckpoint;
    RenderSettings mSettings;
    std::string mMeta;
    std::size_t mCacheEntries;

    mutable std::mutex mMutex;
    mutable std::list<std::pair<std::string, ServiceResponse>> mLru;
    mutable std::unordered_map<std::string, decltype(mLru)::iterator> mIndex;
    mutable std::map<int, std::shared_ptr<const RenderOutput>> mAifRenders;
    mutable std::size_t mHits = 0;
};

struct ServeOptions {
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port    = 8080;
    int workers = 4;
    /// Mounted at / when set.
    std::filesystem::path staticDir;
};

class RefocusServer {
  public:
    RefocusServer(const RefocusService &service, ServeOptions options);
    ~RefocusServer();
    RefocusServer(const RefocusServer &)            = delete;
    RefocusServer &operator=(const RefocusServer &) = delete;

    /// Binds the socket and returns the port. Throws Error when binding fails.
    int bind();
    /// Serves until stop(). Call bind() first.
    void run();
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> mImpl;
};

} // namespace dofsplat
