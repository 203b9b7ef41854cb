#pragma once

#include <string>
#include <vector>

#include "vitderm/errors.hpp"

namespace vitderm {

// Dense RGB image, row-major [height][width][3], channel values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    static Image zeros(int h, int w) {
        Image img;
        img.height = h;
        img.width = w;
        img.pixels.assign(static_cast<size_t>(h) * w * 3, 0.0);
        return img;
    }

    double at(int y, int x, int c) const {
        return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    double& at(int y, int x, int c) {
        return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    size_t size() const { return pixels.size(); }
};

// Binary portable pixmap (P6, maxval 255). The mandatory decoder.
Image load_ppm(const std::string& path);
void save_ppm(const Image& img, const std::string& path);

// Binary portable graymap (P5, maxval 255) from values in [0,1].
void save_pgm(const std::vector<double>& gray, int height, int width,
              const std::string& path);

Image resize_bilinear(const Image& img, int out_h, int out_w);

} // namespace vitderm
