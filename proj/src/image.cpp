// Copyright Contributors to the dofsplat Project
// SPDX-License-Identifier: Apache-2.0

#include <dofsplat/error.hpp>
#include <dofsplat/image.hpp>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace dofsplat {

void
requireSameShape(const Image &a, const Image &b, const char *what) {
    if (!a.sameShape(b)) {
        std::ostringstream msg;
        msg << what << ": shape mismatch (" << a.width() << "x" << a.height() << "x"
            << a.channels() << " vs " << b.width() << "x" << b.height() << "x" << b.channels()
            << ")";
        throw ValidationError(msg.str());
    }
}

std::uint8_t
toByte(double v) {
    if (!(v > 0.0)) {
        return 0;
    }
    return static_cast<std::uint8_t>(std::lround(std::min(v, 1.0) * 255.0));
}

namespace {

std::string
lowerExtension(const std::filesystem::path &path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

void
writeNetpbm(const std::filesystem::path &path, const Image &image, int channels) {
    if (image.channels() != channels) {
        throw ValidationError("writeImage: " + path.string() + " needs " +
                              std::to_string(channels) + " channel(s)");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out << (channels == 3 ? "P3" : "P2") << "\n"
        << image.width() << " " << image.height() << "\n255\n";
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < channels; ++c) {
                out << static_cast<int>(toByte(image.at(x, y, c)));
                out << ((x + 1 == image.width() && c + 1 == channels) ? '\n' : ' ');
            }
        }
    }
    if (!out) {
        throw Error("failed writing " + path.string());
    }
}

/// Reads the next header token, skipping whitespace and '#' comments.
std::string
netpbmToken(std::istream &in) {
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string ignored;
            std::getline(in, ignored);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) {
                break;
            }
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

int
netpbmInt(std::istream &in, const std::filesystem::path &path) {
    const std::string tok = netpbmToken(in);
    try {
        std::size_t used = 0;
        const int v      = std::stoi(tok, &used);
        if (used != tok.size()) {
            throw std::invalid_argument(tok);
        }
        return v;
    } catch (const std::exception &) {
        throw FormatError("malformed netpbm value '" + tok + "' in " + path.string(),
                          static_cast<std::uint64_t>(std::max<std::streamoff>(in.tellg(), 0)));
    }
}

Image
readNetpbm(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    const std::string magic = netpbmToken(in);
    int channels            = 0;
    if (magic == "P3") {
        channels = 3;
    } else if (magic == "P2") {
        channels = 1;
    } else {
        throw FormatError("unsupported netpbm magic '" + magic + "' in " + path.string(), 0);
    }
    const int w      = netpbmInt(in, path);
    const int h      = netpbmInt(in, path);
    const int maxval = netpbmInt(in, path);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
        throw FormatError("bad netpbm header in " + path.string(), 0);
    }
    Image img(w, h, channels);
    for (auto &v : img.data()) {
        v = static_cast<double>(netpbmInt(in, path)) / maxval;
    }
    return img;
}

struct PngWriteBuffer {
    std::string bytes;
};

void
pngWrite(png_structp png, png_bytep data, png_size_t length) {
    auto *buf = static_cast<PngWriteBuffer *>(png_get_io_ptr(png));
    buf->bytes.append(reinterpret_cast<const char *>(data), length);
}

void
pngFlush(png_structp) {}

struct PngReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void
pngRead(png_structp png, png_bytep data, png_size_t length) {
    auto *cur = static_cast<PngReadCursor *>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes.size()) {
        png_error(png, "truncated stream");
    }
    std::memcpy(data, cur->bytes.data() + cur->offset, length);
    cur->offset += length;
}

struct PngErrorState {
    std::string message;
};

[[noreturn]] void
pngFail(png_structp png, png_const_charp msg) {
    static_cast<PngErrorState *>(png_get_error_ptr(png))->message = msg;
    png_longjmp(png, 1);
}

void
pngWarn(png_structp, png_const_charp) {}

std::string
readFile(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::string
encodePng(const Image &image) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw ValidationError("encodePng: only 1 or 3 channels are supported");
    }
    if (image.empty()) {
        throw ValidationError("encodePng: empty image");
    }
    PngErrorState err;
    PngWriteBuffer buf;
    std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * image.channels());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, pngFail, pngWarn);
    png_infop info  = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("PNG encode failed: " + err.message);
    }
    {
        png_set_write_fn(png, &buf, pngWrite, pngFlush);
        png_set_IHDR(png, info, image.width(), image.height(), 8,
                     image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < image.height(); ++y) {
            for (int x = 0; x < image.width(); ++x) {
                for (int c = 0; c < image.channels(); ++c) {
                    row[static_cast<std::size_t>(x) * image.channels() + c] =
                        toByte(image.at(x, y, c));
                }
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    return std::move(buf.bytes);
}

Image
decodePng(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw FormatError("not a PNG stream", 0);
    }
    PngErrorState err;
    PngReadCursor cursor{bytes, 0};
    Image img;
    std::vector<png_byte> row;
    bool badLayout  = false;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, pngFail, pngWarn);
    png_infop info  = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("PNG: " + err.message, cursor.offset);
    }
    {
        png_set_read_fn(png, &cursor, pngRead);
        png_read_info(png, info);
        png_set_strip_16(png);
        png_set_packing(png);
        png_set_expand(png);
        png_set_strip_alpha(png);
        png_read_update_info(png, info);
        const int w  = static_cast<int>(png_get_image_width(png, info));
        const int h  = static_cast<int>(png_get_image_height(png, info));
        const int ch = png_get_channels(png, info);
        badLayout    = ch != 1 && ch != 3;
        if (!badLayout) {
            img = Image(w, h, ch);
            row.resize(png_get_rowbytes(png, info));
        }
        for (int y = 0; !badLayout && y < h; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < ch; ++c) {
                    img.at(x, y, c) = row[static_cast<std::size_t>(x) * ch + c] / 255.0;
                }
            }
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (badLayout) {
        throw FormatError("PNG: unsupported channel layout", cursor.offset);
    }
    return img;
}

void
writeImage(const std::filesystem::path &path, const Image &image) {
    const std::string ext = lowerExtension(path);
    if (ext == ".ppm") {
        writeNetpbm(path, image, 3);
    } else if (ext == ".pgm") {
        writeNetpbm(path, image, 1);
    } else if (ext == ".png") {
        const std::string bytes = encodePng(image);
        std::ofstream out(path, std::ios::binary);
        if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
            throw Error("failed writing " + path.string());
        }
    } else {
        throw ValidationError("unsupported image format '" + ext + "'");
    }
}

Image
readImage(const std::filesystem::path &path) {
    const std::string ext = lowerExtension(path);
    if (ext == ".ppm" || ext == ".pgm") {
        return readNetpbm(path);
    }
    if (ext == ".png") {
        const std::string bytes = readFile(path);
        return decodePng(std::span<const std::uint8_t>(
            reinterpret_cast<const std::uint8_t *>(bytes.data()), bytes.size()));
    }
    throw ValidationError("unsupported image format '" + ext + "'");
}

double
psnr(const Image &a, const Image &b) {
    requireSameShape(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(std::max<std::size_t>(a.size(), 1));
    if (mse == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return -10.0 * std::log10(mse);
}

} // namespace dofsplat
