#pragma once

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <png.h>

#include "adave/errors.hpp"
#include "adave/image.hpp"

namespace adave {

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255). Mask and grayscale rasters round-trip through
// this format bit-exactly.
// ---------------------------------------------------------------------------

inline void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
    check_gray(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.values.data()),
              static_cast<std::streamsize>(image.values.size()));
    if (!out) throw IoError("short write: " + path.string());
}

namespace detail {

inline int pgm_next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return c;
}

}  // namespace detail

inline GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string tok;
    detail::pgm_next_token(in, tok);
    if (tok != "P5") throw IoError("not a binary PGM (P5): " + path.string());
    long w = 0, h = 0, maxval = 0;
    try {
        detail::pgm_next_token(in, tok);
        w = std::stol(tok);
        detail::pgm_next_token(in, tok);
        h = std::stol(tok);
        detail::pgm_next_token(in, tok);
        maxval = std::stol(tok);
    } catch (const std::exception&) {
        throw IoError("malformed PGM header: " + path.string());
    }
    if (w < 1 || h < 1) throw IoError("bad PGM dimensions: " + path.string());
    if (maxval != 255) throw IoError("unsupported PGM maxval (expected 255): " + path.string());
    GrayImage img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.values.resize(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(img.values.data()),
            static_cast<std::streamsize>(img.values.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.values.size()))
        throw IoError("truncated PGM payload: " + path.string());
    return img;
}

// ---------------------------------------------------------------------------
// PNG (8-bit RGB) via libpng. Anything readable is normalized to 8-bit RGB
// on the way in; writes are always 8-bit RGB.
// ---------------------------------------------------------------------------

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

inline Frame read_png(const std::filesystem::path& path) {
    detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("cannot open: " + path.string());

    png_byte header[8] = {};
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw IoError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed");
    }

    Frame frame;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("malformed PNG: " + path.string());
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    frame.width = static_cast<int>(png_get_image_width(png, info));
    frame.height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_channels(png, info) != 3 || png_get_bit_depth(png, info) != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG layout: " + path.string());
    }
    frame.pixels.resize(static_cast<std::size_t>(frame.width) * frame.height * 3);
    rows.resize(frame.height);
    for (int y = 0; y < frame.height; ++y) rows[y] = frame.at(0, y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return frame;
}

inline void write_png(const Frame& frame, const std::filesystem::path& path) {
    check_frame(frame);
    detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed");
    }

    std::vector<png_bytep> rows(frame.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path.string());
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width),
                 static_cast<png_uint_32>(frame.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < frame.height; ++y)
        rows[y] = const_cast<png_bytep>(frame.at(0, y));
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline void write_frame(const Frame& frame, const std::filesystem::path& path) {
    write_png(frame, path);
}

// ---------------------------------------------------------------------------
// Frame sequences: every *.png in a directory, ordered by the numeric index
// embedded in the filename (the last run of digits in the stem).
// ---------------------------------------------------------------------------

namespace detail {

inline bool filename_index(const std::string& stem, long& index) {
    int end = -1;
    for (int i = static_cast<int>(stem.size()) - 1; i >= 0; --i) {
        if (std::isdigit(static_cast<unsigned char>(stem[i]))) {
            end = i;
            break;
        }
    }
    if (end < 0) return false;
    int begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
    try {
        index = std::stol(stem.substr(begin, end - begin + 1));
    } catch (const std::exception&) {
        return false;
    }
    return true;
}

}  // namespace detail

inline std::vector<std::filesystem::path> list_frame_files(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::pair<long, fs::path>> indexed;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() != ".png") continue;
        long idx = 0;
        if (!detail::filename_index(entry.path().stem().string(), idx))
            throw IoError("frame filename has no numeric index: " + entry.path().string());
        indexed.emplace_back(idx, entry.path());
    }
    if (indexed.empty()) throw IoError("no .png frames found in: " + dir.string());
    std::sort(indexed.begin(), indexed.end());
    std::vector<fs::path> out;
    out.reserve(indexed.size());
    for (auto& [idx, p] : indexed) out.push_back(std::move(p));
    return out;
}

inline std::vector<Frame> read_frame_sequence(const std::filesystem::path& dir) {
    std::vector<Frame> frames;
    for (const auto& p : list_frame_files(dir)) {
        Frame f = read_png(p);
        if (!frames.empty() && !f.same_dims(frames.front()))
            throw ValidationError("frame dimension mismatch in sequence: " + p.string());
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace adave
