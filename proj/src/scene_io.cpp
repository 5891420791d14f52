// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/error.hpp>
#include <dofsplat/image.hpp>
#include <dofsplat/neighbors.hpp>
#include <dofsplat/scene_io.hpp>

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dofsplat {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and PLY binary I/O assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'O', 'F', 'S', 'P', 'L', 'A', 'T'};
constexpr std::size_t kGaussianDoubles = 3 + 4 + 3 + 1 + 12;

class ByteWriter {
  public:
    template <typename T>
    void
    put(const T &v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto *p = reinterpret_cast<const char *>(&v);
        mBytes.append(p, sizeof(T));
    }
    void
    putDoubles(const double *p, std::size_t n) {
        mBytes.append(reinterpret_cast<const char *>(p), n * sizeof(double));
    }
    void
    putRaw(const char *p, std::size_t n) {
        mBytes.append(p, n);
    }
    std::string
    take() {
        return std::move(mBytes);
    }

  private:
    std::string mBytes;
};

class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : mBytes(bytes) {}

    void
    need(std::size_t n, const char *what) const {
        if (mBytes.size() - mOffset < n) {
            throw FormatError(std::string("truncated checkpoint while reading ") + what,
                              mOffset);
        }
    }
    template <typename T>
    T
    get(const char *what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, mBytes.data() + mOffset, sizeof(T));
        mOffset += sizeof(T);
        return v;
    }
    void
    getDoubles(double *out, std::size_t n, const char *what) {
        need(n * sizeof(double), what);
        std::memcpy(out, mBytes.data() + mOffset, n * sizeof(double));
        mOffset += n * sizeof(double);
    }
    std::string
    getString(std::size_t n, const char *what) {
        need(n, what);
        std::string s(reinterpret_cast<const char *>(mBytes.data() + mOffset), n);
        mOffset += n;
        return s;
    }
    /// Guards allocations driven by counts read from the file.
    void
    needRecords(std::uint64_t count, std::size_t recordBytes, const char *what) const {
        if (recordBytes != 0 && count > (mBytes.size() - mOffset) / recordBytes) {
            throw FormatError(std::string("truncated checkpoint: ") + what +
                                  " count exceeds the remaining bytes",
                              mOffset);
        }
    }
    std::size_t
    offset() const {
        return mOffset;
    }
    bool
    atEnd() const {
        return mOffset == mBytes.size();
    }

  private:
    std::span<const std::uint8_t> mBytes;
    std::size_t mOffset = 0;
};

} // namespace

std::string
encodeCheckpoint(const Checkpoint &ckpt) {
    const Scene &s = ckpt.scene;
    if (s.quats.size() != s.size() || s.logScales.size() != s.size() ||
        s.opacityLogits.size() != s.size() || s.sh.size() != s.size()) {
        throw ValidationError("encodeCheckpoint: scene attribute arrays are inconsistent");
    }
    if (ckpt.poses.size() != ckpt.lenses.size()) {
        throw ValidationError("encodeCheckpoint: pose and lens counts differ");
    }
    ByteWriter w;
    w.putRaw(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(0);

    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.shDegree));
    w.put<std::uint64_t>(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        w.putDoubles(s.means[i].data(), 3);
        w.putDoubles(s.quats[i].data(), 4);
        w.putDoubles(s.logScales[i].data(), 3);
        w.put<double>(s.opacityLogits[i]);
        for (const Vec3 &c : s.sh[i]) {
            w.putDoubles(c.data(), 3);
        }
    }
    w.putDoubles(ckpt.background.data(), 3);

    w.put<std::uint64_t>(ckpt.poses.size());
    for (std::size_t m = 0; m < ckpt.poses.size(); ++m) {
        const CameraPose &p = ckpt.poses[m];
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                w.put<double>(p.worldToCamera(r, c));
            }
        }
        w.put<double>(p.intrinsics.fx);
        w.put<double>(p.intrinsics.fy);
        w.put<double>(p.intrinsics.cx);
        w.put<double>(p.intrinsics.cy);
        w.put<std::int32_t>(p.intrinsics.width);
        w.put<std::int32_t>(p.intrinsics.height);
        w.put<double>(ckpt.lenses[m].focalDistance);
        w.put<double>(ckpt.lenses[m].aperture);
    }

    w.put<std::uint8_t>(ckpt.iln ? 1 : 0);
    if (ckpt.iln) {
        const ILNConfig &c = ckpt.iln->config;
        for (int v : {c.pe.pixelFrequencies, c.pe.viewFrequencies, c.width1, c.width2, c.width3}) {
            w.put<std::int32_t>(v);
        }
        std::vector<double> flat;
        ckpt.iln->flatten(flat);
        w.put<std::uint64_t>(flat.size());
        w.putDoubles(flat.data(), flat.size());
    }

    w.put<std::uint64_t>(ckpt.optimizer.size());
    for (const auto &[name, g] : ckpt.optimizer) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.putRaw(name.data(), name.size());
        w.put<std::int32_t>(g.rowWidth);
        w.put<std::uint64_t>(g.rows());
        for (std::uint64_t t : g.steps) {
            w.put<std::uint64_t>(t);
        }
        w.putDoubles(g.m.data(), g.m.size());
        w.putDoubles(g.v.data(), g.v.size());
    }
    w.put<std::uint64_t>(ckpt.iteration);
    return w.take();
}

Checkpoint
decodeCheckpoint(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const std::string magic = r.getString(sizeof(kMagic), "magic");
    if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("not a dofsplat checkpoint (bad magic)", 0);
    }
    const std::size_t versionAt = r.offset();
    const auto version          = r.get<std::uint32_t>("version");
    if (version == 0 || version > kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                              " (this build reads up to " +
                              std::to_string(kCheckpointVersion) + ")",
                          versionAt);
    }
    r.get<std::uint32_t>("reserved field");

    Checkpoint ckpt;
    Scene &s               = ckpt.scene;
    const std::size_t degAt = r.offset();
    s.shDegree             = static_cast<int>(r.get<std::uint32_t>("SH degree"));
    if (s.shDegree > kMaxShDegree) {
        throw FormatError("unsupported SH degree " + std::to_string(s.shDegree), degAt);
    }
    const auto n = r.get<std::uint64_t>("Gaussian count");
    r.needRecords(n, kGaussianDoubles * sizeof(double), "Gaussian");
    s.means.resize(n);
    s.quats.resize(n);
    s.logScales.resize(n);
    s.opacityLogits.resize(n);
    s.sh.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        r.getDoubles(s.means[i].data(), 3, "Gaussian record");
        r.getDoubles(s.quats[i].data(), 4, "Gaussian record");
        r.getDoubles(s.logScales[i].data(), 3, "Gaussian record");
        s.opacityLogits[i] = r.get<double>("Gaussian record");
        for (Vec3 &c : s.sh[i]) {
            r.getDoubles(c.data(), 3, "Gaussian record");
        }
    }
    r.getDoubles(ckpt.background.data(), 3, "background");

    const auto views = r.get<std::uint64_t>("view count");
    r.needRecords(views, 22 * sizeof(double) + 2 * sizeof(std::int32_t), "view");
    for (std::size_t m = 0; m < views; ++m) {
        CameraPose p;
        for (int row = 0; row < 4; ++row) {
            for (int c = 0; c < 4; ++c) {
                p.worldToCamera(row, c) = r.get<double>("view record");
            }
        }
        p.intrinsics.fx     = r.get<double>("view record");
        p.intrinsics.fy     = r.get<double>("view record");
        p.intrinsics.cx     = r.get<double>("view record");
        p.intrinsics.cy     = r.get<double>("view record");
        p.intrinsics.width  = r.get<std::int32_t>("view record");
        p.intrinsics.height = r.get<std::int32_t>("view record");
        LensParams lens;
        lens.focalDistance = r.get<double>("view record");
        lens.aperture      = r.get<double>("view record");
        ckpt.poses.push_back(p);
        ckpt.lenses.push_back(lens);
    }

    const std::size_t ilnAt = r.offset();
    const auto hasIln       = r.get<std::uint8_t>("ILN flag");
    if (hasIln > 1) {
        throw FormatError("malformed ILN flag", ilnAt);
    }
    if (hasIln) {
        ILNConfig c;
        const std::size_t cfgAt = r.offset();
        c.pe.pixelFrequencies   = r.get<std::int32_t>("ILN config");
        c.pe.viewFrequencies    = r.get<std::int32_t>("ILN config");
        c.width1                = r.get<std::int32_t>("ILN config");
        c.width2                = r.get<std::int32_t>("ILN config");
        c.width3                = r.get<std::int32_t>("ILN config");
        ILNParams params;
        try {
            params = ILNParams::zeros(c);
        } catch (const ValidationError &e) {
            throw FormatError(std::string("malformed ILN config: ") + e.what(), cfgAt);
        }
        const std::size_t countAt = r.offset();
        const auto count          = r.get<std::uint64_t>("ILN parameter count");
        if (count != params.parameterCount()) {
            throw FormatError("ILN parameter count does not match its config", countAt);
        }
        r.needRecords(count, sizeof(double), "ILN parameter");
        std::vector<double> flat(count);
        r.getDoubles(flat.data(), count, "ILN parameters");
        params.unflatten(flat);
        ckpt.iln = std::move(params);
    }

    const auto groups = r.get<std::uint64_t>("optimizer group count");
    for (std::uint64_t k = 0; k < groups; ++k) {
        const auto len         = r.get<std::uint32_t>("optimizer group name");
        std::string name       = r.getString(len, "optimizer group name");
        AdamGroup g;
        const std::size_t wAt = r.offset();
        g.rowWidth            = r.get<std::int32_t>("optimizer group");
        if (g.rowWidth <= 0) {
            throw FormatError("malformed optimizer row width", wAt);
        }
        const auto rows = r.get<std::uint64_t>("optimizer group");
        r.needRecords(rows, sizeof(std::uint64_t) + 2 * g.rowWidth * sizeof(double),
                      "optimizer row");
        g.steps.resize(rows);
        for (auto &t : g.steps) {
            t = r.get<std::uint64_t>("optimizer steps");
        }
        g.m.resize(rows * g.rowWidth);
        g.v.resize(rows * g.rowWidth);
        r.getDoubles(g.m.data(), g.m.size(), "optimizer moments");
        r.getDoubles(g.v.data(), g.v.size(), "optimizer moments");
        ckpt.optimizer[std::move(name)] = std::move(g);
    }
    ckpt.iteration = r.get<std::uint64_t>("iteration counter");
    if (!r.atEnd()) {
        throw FormatError("trailing bytes after checkpoint", r.offset());
    }
    return ckpt;
}

namespace {

std::string
readAll(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void
writeAll(const std::filesystem::path &path, const std::string &bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw Error("failed writing " + path.string());
    }
}

} // namespace

void
saveCheckpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
    writeAll(path, encodeCheckpoint(ckpt));
}

Checkpoint
loadCheckpoint(const std::filesystem::path &path) {
    const std::string bytes = readAll(path);
    return decodeCheckpoint(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t *>(bytes.data()), bytes.size()));
}

namespace {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType
plyType(const std::string &name, std::size_t offset) {
    static const std::map<std::string, PlyType> table = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    const auto it = table.find(name);
    if (it == table.end()) {
        throw FormatError("unknown PLY property type '" + name + "'", offset);
    }
    return it->second;
}

std::size_t
plySize(PlyType t) {
    switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
    }
    return 0;
}

/// Full-scale value used to map integer colors to [0,1]; floats are taken as is.
double
plyColorScale(PlyType t) {
    switch (t) {
    case PlyType::UInt8: return 255.0;
    case PlyType::UInt16: return 65535.0;
    case PlyType::Int8: return 127.0;
    case PlyType::Int16: return 32767.0;
    case PlyType::Int32: return 2147483647.0;
    case PlyType::UInt32: return 4294967295.0;
    default: return 1.0;
    }
}

double
plyDecode(PlyType t, const std::uint8_t *p) {
    auto load = [p](auto v) {
        std::memcpy(&v, p, sizeof(v));
        return static_cast<double>(v);
    };
    switch (t) {
    case PlyType::Int8: return load(std::int8_t{});
    case PlyType::UInt8: return load(std::uint8_t{});
    case PlyType::Int16: return load(std::int16_t{});
    case PlyType::UInt16: return load(std::uint16_t{});
    case PlyType::Int32: return load(std::int32_t{});
    case PlyType::UInt32: return load(std::uint32_t{});
    case PlyType::Float32: return load(float{});
    case PlyType::Float64: return load(double{});
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    PlyType type;
};

} // namespace

PointCloud
readPly(const std::filesystem::path &path) {
    const std::string bytes = readAll(path);
    std::size_t pos         = 0;
    auto nextLine           = [&]() -> std::string {
        const std::size_t end = bytes.find('\n', pos);
        if (end == std::string::npos) {
            throw FormatError("unterminated PLY header in " + path.string(), pos);
        }
        std::string line = bytes.substr(pos, end - pos);
        pos              = end + 1;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        return line;
    };

    if (nextLine() != "ply") {
        throw FormatError("missing 'ply' magic in " + path.string(), 0);
    }
    bool binary = false, sawFormat = false, inVertex = false, vertexSeen = false;
    std::uint64_t vertexCount = 0;
    std::vector<PlyProperty> props;
    for (;;) {
        const std::size_t lineAt = pos;
        const std::string line   = nextLine();
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "end_header") {
            break;
        }
        if (kw == "comment" || kw == "obj_info" || kw.empty()) {
            continue;
        }
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") {
                binary = false;
            } else if (fmt == "binary_little_endian") {
                binary = true;
            } else {
                throw FormatError("unsupported PLY format '" + fmt + "'", lineAt);
            }
            sawFormat = true;
        } else if (kw == "element") {
            std::string name;
            std::uint64_t count = 0;
            if (!(ls >> name >> count)) {
                throw FormatError("malformed PLY element line", lineAt);
            }
            if (name == "vertex") {
                if (vertexSeen) {
                    throw FormatError("duplicate PLY vertex element", lineAt);
                }
                vertexSeen  = true;
                vertexCount = count;
            } else if (!vertexSeen) {
                throw FormatError("PLY elements before 'vertex' are not supported", lineAt);
            }
            inVertex = name == "vertex";
        } else if (kw == "property") {
            if (!inVertex) {
                continue;
            }
            std::string type, name;
            ls >> type;
            if (type == "list") {
                throw FormatError("list properties on PLY vertices are not supported", lineAt);
            }
            ls >> name;
            props.push_back({name, plyType(type, lineAt)});
        } else {
            throw FormatError("unexpected PLY header keyword '" + kw + "'", lineAt);
        }
    }
    if (!sawFormat || !vertexSeen) {
        throw FormatError("PLY header lacks a format line or vertex element", 0);
    }

    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < props.size(); ++i) {
        column[props[i].name] = i;
    }
    for (const char *name : {"x", "y", "z"}) {
        if (!column.count(name)) {
            throw ValidationError(std::string("PLY vertex element has no '") + name +
                                  "' property");
        }
    }
    const bool hasColor = column.count("red") && column.count("green") && column.count("blue");

    PointCloud cloud;
    cloud.positions.reserve(vertexCount);
    std::vector<double> row(props.size());
    std::size_t stride = 0;
    for (const auto &p : props) {
        stride += plySize(p.type);
    }
    std::istringstream text;
    if (!binary) {
        text.str(bytes.substr(pos));
    } else if ((bytes.size() - pos) / std::max<std::size_t>(stride, 1) < vertexCount) {
        throw FormatError("truncated PLY vertex data", bytes.size());
    }
    for (std::uint64_t v = 0; v < vertexCount; ++v) {
        if (binary) {
            std::size_t off = pos;
            for (std::size_t i = 0; i < props.size(); ++i) {
                row[i] = plyDecode(props[i].type,
                                   reinterpret_cast<const std::uint8_t *>(bytes.data()) + off);
                off += plySize(props[i].type);
            }
            pos += stride;
        } else {
            for (std::size_t i = 0; i < props.size(); ++i) {
                if (!(text >> row[i])) {
                    throw FormatError("truncated or malformed PLY vertex " + std::to_string(v),
                                      pos + static_cast<std::size_t>(std::max<std::streamoff>(
                                                text.tellg(), 0)));
                }
            }
        }
        cloud.positions.emplace_back(row[column["x"]], row[column["y"]], row[column["z"]]);
        if (hasColor) {
            Vec3 c;
            int k = 0;
            for (const char *name : {"red", "green", "blue"}) {
                const std::size_t i = column[name];
                c[k++]              = row[i] / plyColorScale(props[i].type);
            }
            cloud.colors.push_back(c);
        }
    }
    return cloud;
}

void
writePly(const std::filesystem::path &path, const PointCloud &cloud, bool binary) {
    const bool hasColor = !cloud.colors.empty();
    if (hasColor && cloud.colors.size() != cloud.positions.size()) {
        throw ValidationError("writePly: color count does not match point count");
    }
    std::ostringstream out;
    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
        << "element vertex " << cloud.positions.size() << "\n"
        << "property float x\nproperty float y\nproperty float z\n";
    if (hasColor) {
        out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    out << "end_header\n";
    std::string body;
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
        const Vec3 &p = cloud.positions[i];
        if (binary) {
            for (int k = 0; k < 3; ++k) {
                const auto f = static_cast<float>(p[k]);
                body.append(reinterpret_cast<const char *>(&f), sizeof(f));
            }
            if (hasColor) {
                for (int k = 0; k < 3; ++k) {
                    body.push_back(static_cast<char>(toByte(cloud.colors[i][k])));
                }
            }
        } else {
            out << std::setprecision(std::numeric_limits<float>::max_digits10) << static_cast<float>(p[0]) << " " << static_cast<float>(p[1]) << " "
                << static_cast<float>(p[2]);
            if (hasColor) {
                for (int k = 0; k < 3; ++k) {
                    out << " " << static_cast<int>(toByte(cloud.colors[i][k]));
                }
            }
            out << "\n";
        }
    }
    writeAll(path, out.str() + body);
}

Scene
sceneFromPoints(const PointCloud &cloud) {
    const std::vector<double> spacing = meanNeighborDistance(cloud.positions, 3);
    Scene scene;
    scene.reserve(cloud.positions.size());
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
        Gaussian3D g;
        g.center  = cloud.positions[i];
        g.scale   = Vec3::Constant(spacing[i] > 0.0 ? spacing[i] : 1.0);
        g.opacity = kInitialOpacity;
        g.sh[0]   = rgbToSh0(cloud.colors.empty() ? Vec3::Constant(kDefaultGray)
                                                  : cloud.colors[i]);
        scene.add(g);
    }
    return scene;
}

Scene
loadPlyPoints(const std::filesystem::path &path) {
    return sceneFromPoints(readPly(path));
}

namespace {

using nlohmann::json;

template <typename T>
T
field(const json &j, const char *key, std::size_t m) {
    if (!j.contains(key)) {
        throw ValidationError("view " + std::to_string(m) + ": missing '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &) {
        throw ValidationError("view " + std::to_string(m) + ": bad value for '" + key + "'");
    }
}

} // namespace

std::vector<ViewEntry>
loadViews(const std::filesystem::path &path) {
    json doc;
    try {
        std::ifstream in(path);
        if (!in) {
            throw Error("cannot open " + path.string());
        }
        doc = json::parse(in);
    } catch (const json::parse_error &e) {
        throw FormatError("invalid JSON in " + path.string() + ": " + e.what(), e.byte);
    }
    if (!doc.is_object() || !doc.contains("views") || !doc["views"].is_array()) {
        throw ValidationError(path.string() + ": expected an object with a 'views' array");
    }
    std::vector<ViewEntry> out;
    for (std::size_t m = 0; m < doc["views"].size(); ++m) {
        const json &v = doc["views"][m];
        ViewEntry e;
        e.index = v.contains("m") ? field<int>(v, "m", m) : static_cast<int>(m);
        const auto W = field<std::vector<double>>(v, "W", m);
        if (W.size() != 16) {
            throw ValidationError("view " + std::to_string(m) + ": 'W' needs 16 values");
        }
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                e.pose.worldToCamera(r, c) = W[r * 4 + c];
            }
        }
        e.pose.intrinsics.fx     = field<double>(v, "fx", m);
        e.pose.intrinsics.fy     = field<double>(v, "fy", m);
        e.pose.intrinsics.cx     = field<double>(v, "cx", m);
        e.pose.intrinsics.cy     = field<double>(v, "cy", m);
        e.pose.intrinsics.width  = field<int>(v, "width", m);
        e.pose.intrinsics.height = field<int>(v, "height", m);
        e.pose.validate();
        if (v.contains("f")) {
            e.focalDistance = field<double>(v, "f", m);
        }
        if (v.contains("Q")) {
            e.aperture = field<double>(v, "Q", m);
        }
        if (v.contains("image")) {
            e.image = field<std::string>(v, "image", m);
        }
        if (v.contains("all_in_focus")) {
            e.allInFocus = field<std::string>(v, "all_in_focus", m);
        }
        out.push_back(std::move(e));
    }
    return out;
}

void
saveViews(const std::filesystem::path &path, const std::vector<ViewEntry> &views) {
    json arr = json::array();
    for (const ViewEntry &e : views) {
        json v;
        v["m"] = e.index;
        std::vector<double> W;
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                W.push_back(e.pose.worldToCamera(r, c));
            }
        }
        v["W"]      = W;
        v["fx"]     = e.pose.intrinsics.fx;
        v["fy"]     = e.pose.intrinsics.fy;
        v["cx"]     = e.pose.intrinsics.cx;
        v["cy"]     = e.pose.intrinsics.cy;
        v["width"]  = e.pose.intrinsics.width;
        v["height"] = e.pose.intrinsics.height;
        if (e.focalDistance) {
            v["f"] = *e.focalDistance;
        }
        if (e.aperture) {
            v["Q"] = *e.aperture;
        }
        if (e.image) {
            v["image"] = *e.image;
        }
        if (e.allInFocus) {
            v["all_in_focus"] = *e.allInFocus;
        }
        arr.push_back(std::move(v));
    }
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out << json{{"views", arr}}.dump(2) << "\n";
}

LoadedViews
loadTrainViews(const std::filesystem::path &path) {
    const std::vector<ViewEntry> entries = loadViews(path);
    const std::filesystem::path dir      = path.parent_path();
    LoadedViews out;
    out.hasLens = !entries.empty();
    for (std::size_t m = 0; m < entries.size(); ++m) {
        const ViewEntry &e = entries[m];
        TrainView v;
        v.index = static_cast<int>(m);
        v.pose  = e.pose;
        if (e.focalDistance && e.aperture) {
            v.lens = LensParams{*e.focalDistance, *e.aperture};
            v.lens.validate();
        } else {
            out.hasLens = false;
        }
        if (!e.image) {
            throw ValidationError("view " + std::to_string(m) + " has no reference image");
        }
        v.image = readImage(dir / *e.image);
        if (v.image.width() != e.pose.intrinsics.width ||
            v.image.height() != e.pose.intrinsics.height || v.image.channels() != 3) {
            throw ValidationError("view " + std::to_string(m) +
                                  ": image does not match width/height or is not RGB");
        }
        if (e.allInFocus) {
            v.allInFocus = readImage(dir / *e.allInFocus);
            requireSameShape(*v.allInFocus, v.image, "all-in-focus reference");
        }
        out.views.push_back(std::move(v));
    }
    return out;
}

} // namespace dofsplat
