#include "vitderm/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace vitderm {

namespace {

// Skips PNM whitespace and '#' comment lines, then reads one unsigned int.
int read_pnm_int(std::istream& in, const std::string& path) {
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c))
        throw IoError("malformed PNM header in " + path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}

uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

} // namespace

Image load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6')
        throw IoError("not a binary PPM (P6) file: " + path);
    const int w = read_pnm_int(in, path);
    const int h = read_pnm_int(in, path);
    const int maxval = read_pnm_int(in, path);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw IoError("unsupported PPM geometry/maxval in " + path);
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
        throw IoError("truncated PPM payload in " + path);
    Image img = Image::zeros(h, w);
    for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
    return img;
}

void save_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> raw(img.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(img.pixels[i]);
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write failed: " + path);
}

void save_pgm(const std::vector<double>& gray, int height, int width,
              const std::string& path) {
    if (gray.size() != static_cast<size_t>(height) * width)
        throw DimensionError("save_pgm: value count does not match " +
                             std::to_string(height) + "x" + std::to_string(width));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    std::vector<uint8_t> raw(gray.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = to_byte(gray[i]);
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write failed: " + path);
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (img.height == out_h && img.width == out_w) return img;
    Image out = Image::zeros(out_h, out_w);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        // sample at source pixel centers
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
                const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

} // namespace vitderm
