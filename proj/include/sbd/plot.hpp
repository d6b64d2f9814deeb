#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "sbd/image.hpp"
#include "sbd/image_io.hpp"

// Minimal raster line-plot renderer (axes, ticks with numeric labels, one
// polyline per series) so the sweep reports need no plotting dependency.

namespace sbd {

struct PlotSeries {
    std::vector<double> x, y;
    double red = 0.1, green = 0.3, blue = 0.8;
};

namespace detail {

// 3x5 glyphs for numeric tick labels
inline const std::array<unsigned char, 5>* glyph(char c) {
    static const std::array<unsigned char, 5> digits[10] = {
        {0b111, 0b101, 0b101, 0b101, 0b111}, {0b010, 0b110, 0b010, 0b010, 0b111},
        {0b111, 0b001, 0b111, 0b100, 0b111}, {0b111, 0b001, 0b111, 0b001, 0b111},
        {0b101, 0b101, 0b111, 0b001, 0b001}, {0b111, 0b100, 0b111, 0b001, 0b111},
        {0b111, 0b100, 0b111, 0b101, 0b111}, {0b111, 0b001, 0b010, 0b010, 0b010},
        {0b111, 0b101, 0b111, 0b101, 0b111}, {0b111, 0b101, 0b111, 0b001, 0b111}};
    static const std::array<unsigned char, 5> minus = {0b000, 0b000, 0b111, 0b000, 0b000};
    static const std::array<unsigned char, 5> dot = {0b000, 0b000, 0b000, 0b000, 0b010};
    static const std::array<unsigned char, 5> plus = {0b000, 0b010, 0b111, 0b010, 0b000};
    static const std::array<unsigned char, 5> e = {0b000, 0b111, 0b110, 0b100, 0b111};
    if (c >= '0' && c <= '9') return &digits[c - '0'];
    if (c == '-') return &minus;
    if (c == '.') return &dot;
    if (c == '+') return &plus;
    if (c == 'e' || c == 'E') return &e;
    return nullptr;
}

inline void put_px(Image& im, int y, int x, double r, double g, double b) {
    if (y < 0 || y >= im.height || x < 0 || x >= im.width) return;
    im.at(0, y, x) = r;
    im.at(1, y, x) = g;
    im.at(2, y, x) = b;
}

inline void draw_text(Image& im, int y, int x, const std::string& s, int scale = 2) {
    for (char c : s) {
        const auto* g = glyph(c);
        if (g) {
            for (int gy = 0; gy < 5; ++gy)
                for (int gx = 0; gx < 3; ++gx)
                    if ((*g)[gy] & (0b100 >> gx))
                        for (int sy = 0; sy < scale; ++sy)
                            for (int sx = 0; sx < scale; ++sx)
                                put_px(im, y + gy * scale + sy, x + gx * scale + sx, 0, 0, 0);
        }
        x += 4 * scale;
    }
}

inline void draw_line(Image& im, int y0, int x0, int y1, int x1, double r, double g, double b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
        put_px(im, y0, x0, r, g, b);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

inline std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

} // namespace detail

inline void render_line_plot(const std::string& path, const std::vector<PlotSeries>& series) {
    const int W = 640, H = 480;
    const int ml = 84, mr = 24, mt = 24, mb = 48;
    Image im(3, H, W, 1.0);
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double ypad = 0.06 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) {
        return ml + static_cast<int>((x - xmin) / (xmax - xmin) * (W - ml - mr));
    };
    auto py = [&](double y) {
        return H - mb - static_cast<int>((y - ymin) / (ymax - ymin) * (H - mt - mb));
    };

    // axes box
    detail::draw_line(im, mt, ml, H - mb, ml, 0, 0, 0);
    detail::draw_line(im, H - mb, ml, H - mb, W - mr, 0, 0, 0);
    detail::draw_line(im, mt, ml, mt, W - mr, 0, 0, 0);
    detail::draw_line(im, mt, W - mr, H - mb, W - mr, 0, 0, 0);

    const int nticks = 5;
    for (int t = 0; t < nticks; ++t) {
        const double fx = xmin + (xmax - xmin) * t / (nticks - 1.0);
        const int x = px(fx);
        detail::draw_line(im, H - mb, x, H - mb + 6, x, 0, 0, 0);
        detail::draw_text(im, H - mb + 10, x - 14, detail::tick_label(fx));
        const double fy = ymin + (ymax - ymin) * t / (nticks - 1.0);
        const int y = py(fy);
        detail::draw_line(im, y, ml - 6, y, ml, 0, 0, 0);
        detail::draw_text(im, y - 5, 6, detail::tick_label(fy));
    }

    for (const auto& s : series)
        for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
            detail::draw_line(im, py(s.y[i]), px(s.x[i]), py(s.y[i + 1]), px(s.x[i + 1]), s.red,
                              s.green, s.blue);
            // small marker at each point value
            for (int oy = -1; oy <= 1; ++oy)
                for (int ox = -1; ox <= 1; ++ox)
                    detail::put_px(im, py(s.y[i]) + oy, px(s.x[i]) + ox, s.red, s.green, s.blue);
        }
    if (!series.empty() && !series.back().x.empty()) {
        const auto& s = series.back();
        for (int oy = -1; oy <= 1; ++oy)
            for (int ox = -1; ox <= 1; ++ox)
                detail::put_px(im, py(s.y.back()) + oy, px(s.x.back()) + ox, s.red, s.green,
                               s.blue);
    }
    save_image(im, path);
}

} // namespace sbd
