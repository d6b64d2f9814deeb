#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "sbd/common.hpp"
#include "sbd/image.hpp"

// Image file I/O. Load maps integer samples to [0,1] (value / max_sample);
// save clamps to [0,1] and quantizes to 8 bits with round-half-up, so a
// save/load round trip moves a pixel by at most 1/510.

namespace sbd {

namespace detail {

inline std::string lower_ext(const std::string& path) {
    const auto dot = path.rfind('.');
    if (dot == std::string::npos) return "";
    std::string e = path.substr(dot + 1);
    for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

struct FileCloser {
    std::FILE* fp = nullptr;
    ~FileCloser() {
        if (fp) std::fclose(fp);
    }
};

inline Image load_png(const std::string& path) {
    FileCloser f{std::fopen(path.c_str(), "rb")};
    require(f.fp != nullptr, "cannot open image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("libpng info init failed");
    }
    std::vector<png_byte> data;
    std::vector<png_bytep> rows;
    std::string err;
    if (setjmp(png_jmpbuf(png))) {
        err = "libpng failed to decode " + path;
    } else {
        png_init_io(png, f.fp);
        png_read_info(png, info);
        const png_byte color = png_get_color_type(png, info);
        const png_byte depth = png_get_bit_depth(png, info);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        png_read_update_info(png, info);
        const png_uint_32 w = png_get_image_width(png, info);
        const png_uint_32 h = png_get_image_height(png, info);
        const int channels = png_get_channels(png, info);
        const int bd = png_get_bit_depth(png, info);
        if ((channels != 1 && channels != 3) || (bd != 8 && bd != 16)) {
            err = "unsupported PNG layout in " + path;
        } else {
            const std::size_t rowbytes = png_get_rowbytes(png, info);
            data.resize(rowbytes * h);
            rows.resize(h);
            for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + y * rowbytes;
            png_read_image(png, rows.data());
            png_read_end(png, nullptr);
            png_destroy_read_struct(&png, &info, nullptr);
            Image im(channels, static_cast<int>(h), static_cast<int>(w));
            const double denom = bd == 8 ? 255.0 : 65535.0;
            for (png_uint_32 y = 0; y < h; ++y) {
                const png_byte* row = data.data() + y * rowbytes;
                for (png_uint_32 x = 0; x < w; ++x)
                    for (int c = 0; c < channels; ++c) {
                        double v;
                        if (bd == 8) {
                            v = row[x * channels + c] / denom;
                        } else {
                            const std::size_t o = 2 * (x * channels + c);
                            v = ((row[o] << 8) | row[o + 1]) / denom; // PNG is big-endian
                        }
                        im.at(c, static_cast<int>(y), static_cast<int>(x)) = v;
                    }
            }
            return im;
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    fail(err.empty() ? "libpng failed on " + path : err);
}

inline void save_png(const Image& im, const std::string& path) {
    const Image q = clamp01(im);
    FileCloser f{std::fopen(path.c_str(), "wb")};
    require(f.fp != nullptr, "cannot open image for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("libpng info init failed");
    }
    std::vector<png_byte> data;
    std::vector<png_bytep> rows;
    volatile bool ok = true;
    if (setjmp(png_jmpbuf(png))) {
        ok = false;
    } else {
        png_init_io(png, f.fp);
        png_set_IHDR(png, info, static_cast<png_uint_32>(q.width),
                     static_cast<png_uint_32>(q.height), 8,
                     q.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        data.resize(static_cast<std::size_t>(q.height) * q.width * q.channels);
        rows.resize(static_cast<std::size_t>(q.height));
        for (int y = 0; y < q.height; ++y) {
            png_bytep row = data.data() + static_cast<std::size_t>(y) * q.width * q.channels;
            rows[static_cast<std::size_t>(y)] = row;
            for (int x = 0; x < q.width; ++x)
                for (int c = 0; c < q.channels; ++c)
                    row[x * q.channels + c] =
                        static_cast<png_byte>(std::floor(q.at(c, y, x) * 255.0 + 0.5));
        }
        png_write_info(png, info);
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    require(ok, "libpng failed to encode " + path);
}

inline void skip_pnm_space(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

inline Image load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open image: " + path);
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    require(p == 'P' && (kind == '2' || kind == '3' || kind == '5' || kind == '6'),
            "unsupported PNM magic in " + path);
    const bool ascii = kind == '2' || kind == '3';
    const int channels = (kind == '3' || kind == '6') ? 3 : 1;
    long w = 0, h = 0, maxval = 0;
    skip_pnm_space(in);
    in >> w;
    skip_pnm_space(in);
    in >> h;
    skip_pnm_space(in);
    in >> maxval;
    require(in.good() && w > 0 && h > 0, "malformed PNM header in " + path);
    require(maxval > 0 && maxval < 65536, "unsupported PNM maxval in " + path);
    Image im(channels, static_cast<int>(h), static_cast<int>(w));
    const double denom = static_cast<double>(maxval);
    if (ascii) {
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x)
                for (int c = 0; c < channels; ++c) {
                    long v;
                    in >> v;
                    require(!in.fail(), "truncated PNM data in " + path);
                    im.at(c, static_cast<int>(y), static_cast<int>(x)) = v / denom;
                }
    } else {
        in.get(); // single whitespace after maxval
        const int bytes = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> row(static_cast<std::size_t>(w) * channels * bytes);
        for (long y = 0; y < h; ++y) {
            in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
            require(in.gcount() == static_cast<std::streamsize>(row.size()),
                    "truncated PNM data in " + path);
            for (long x = 0; x < w; ++x)
                for (int c = 0; c < channels; ++c) {
                    const std::size_t o = static_cast<std::size_t>(x * channels + c) * bytes;
                    const unsigned v = bytes == 1 ? row[o] : ((row[o] << 8) | row[o + 1]);
                    im.at(c, static_cast<int>(y), static_cast<int>(x)) = v / denom;
                }
        }
    }
    return im;
}

inline void save_pnm(const Image& im, const std::string& path) {
    const Image q = clamp01(im);
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open image for writing: " + path);
    out << (q.channels == 1 ? "P5" : "P6") << "\n" << q.width << " " << q.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(q.width) * q.channels);
    for (int y = 0; y < q.height; ++y) {
        for (int x = 0; x < q.width; ++x)
            for (int c = 0; c < q.channels; ++c)
                row[static_cast<std::size_t>(x * q.channels + c)] =
                    static_cast<unsigned char>(std::floor(q.at(c, y, x) * 255.0 + 0.5));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    require(out.good(), "write failed: " + path);
}

} // namespace detail

inline Image load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    require(probe.good(), "cannot open image: " + path);
    unsigned char sig[2] = {0, 0};
    probe.read(reinterpret_cast<char*>(sig), 2);
    probe.close();
    if (sig[0] == 0x89 && sig[1] == 'P') return detail::load_png(path);
    if (sig[0] == 'P') return detail::load_pnm(path);
    fail("unrecognized image format: " + path);
}

inline void save_image(const Image& im, const std::string& path) {
    const std::string ext = detail::lower_ext(path);
    if (ext == "png")
        detail::save_png(im, path);
    else if (ext == "pgm" || ext == "ppm" || ext == "pnm")
        detail::save_pnm(im, path);
    else
        fail("unsupported image extension ." + ext + " (use png/pgm/ppm): " + path);
}

// --- padding to the resolution multiple required by the generators ---

struct CropRecord {
    int height = 0;
    int width = 0;
    bool padded() const { return height > 0; }
};

// Symmetric (edge-inclusive) reflection index.
inline int reflect_index(int i, int n) {
    const int period = 2 * n;
    int j = i % period;
    if (j < 0) j += period;
    return j < n ? j : period - 1 - j;
}

inline std::pair<Image, CropRecord> pad_to_divisible(const Image& im, int factor) {
    require(factor >= 1, "pad_to_divisible: factor must be >= 1");
    const int h = (im.height + factor - 1) / factor * factor;
    const int w = (im.width + factor - 1) / factor * factor;
    CropRecord rec{im.height, im.width};
    if (h == im.height && w == im.width) return {im, rec};
    Image out(im.channels, h, w);
    for (int c = 0; c < im.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(c, y, x) = im.at(c, reflect_index(y, im.height), reflect_index(x, im.width));
    return {out, rec};
}

inline Image crop_to(const Image& im, const CropRecord& rec) {
    if (im.height == rec.height && im.width == rec.width) return im;
    require(rec.height <= im.height && rec.width <= im.width, "crop larger than image");
    Image out(im.channels, rec.height, rec.width);
    for (int c = 0; c < im.channels; ++c)
        for (int y = 0; y < rec.height; ++y)
            for (int x = 0; x < rec.width; ++x) out.at(c, y, x) = im.at(c, y, x);
    return out;
}

} // namespace sbd
