#include "vitderm/attention.hpp"

#include <algorithm>
#include <cmath>

namespace vitderm {

namespace {

void validate_record(const AttentionRecord& record) {
    if (record.tokens < 2 || record.layers.empty())
        throw DimensionError("attention record is empty");
    const size_t t = static_cast<size_t>(record.tokens);
    const size_t heads = record.layers[0].size();
    if (heads == 0) throw DimensionError("attention record has no heads");
    for (const auto& layer : record.layers) {
        if (layer.size() != heads)
            throw DimensionError("attention record: inconsistent head count");
        for (const auto& mat : layer)
            if (mat.size() != t * t)
                throw DimensionError("attention record: matrix size " +
                                     std::to_string(mat.size()) + ", expected " +
                                     std::to_string(t * t));
    }
}

AttentionMap grid_from_class_row(const std::vector<double>& row, int tokens) {
    const int n = tokens - 1;
    const int grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    if (grid * grid != n)
        throw DimensionError("attention record: patch count " + std::to_string(n) +
                             " is not a square grid");
    AttentionMap map;
    map.grid = grid;
    map.values.assign(row.begin() + 1, row.end());  // drop class-token column
    double lo = map.values[0], hi = map.values[0];
    for (double v : map.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo <= 0.0) {
        std::fill(map.values.begin(), map.values.end(), 0.0);  // constant map rule
    } else {
        for (double& v : map.values) v = (v - lo) / (hi - lo);
    }
    return map;
}

} // namespace

AttentionMap attention_rollout(const AttentionRecord& record,
                               std::vector<std::vector<double>>* intermediates) {
    validate_record(record);
    const int t = record.tokens;
    const size_t tt = static_cast<size_t>(t) * t;

    std::vector<double> rolled(tt, 0.0);
    for (int i = 0; i < t; ++i) rolled[static_cast<size_t>(i) * t + i] = 1.0;
    if (intermediates) intermediates->clear();

    std::vector<double> layer_mat(tt), next(tt);
    for (const auto& layer : record.layers) {
        const double inv_heads = 1.0 / static_cast<double>(layer.size());
        std::fill(layer_mat.begin(), layer_mat.end(), 0.0);
        for (const auto& head : layer)
            for (size_t i = 0; i < tt; ++i) layer_mat[i] += head[i] * inv_heads;
        // add identity, renormalize rows
        for (int i = 0; i < t; ++i) {
            layer_mat[static_cast<size_t>(i) * t + i] += 1.0;
            double row_sum = 0.0;
            for (int j = 0; j < t; ++j) row_sum += layer_mat[static_cast<size_t>(i) * t + j];
            for (int j = 0; j < t; ++j) layer_mat[static_cast<size_t>(i) * t + j] /= row_sum;
        }
        // deepest layer multiplies last: rolled <- layer_mat * rolled
        std::fill(next.begin(), next.end(), 0.0);
        for (int i = 0; i < t; ++i)
            for (int k = 0; k < t; ++k) {
                const double a = layer_mat[static_cast<size_t>(i) * t + k];
                for (int j = 0; j < t; ++j)
                    next[static_cast<size_t>(i) * t + j] += a * rolled[static_cast<size_t>(k) * t + j];
            }
        rolled.swap(next);
        if (intermediates) intermediates->push_back(rolled);
    }
    return grid_from_class_row({rolled.begin(), rolled.begin() + t}, t);
}

AttentionMap layer_attention(const AttentionRecord& record, int layer, int head) {
    validate_record(record);
    const int depth = static_cast<int>(record.layers.size());
    if (layer == -1) layer = depth - 1;
    if (layer < 0 || layer >= depth)
        throw DimensionError("layer " + std::to_string(layer) + " out of range (depth " +
                             std::to_string(depth) + ")");
    const auto& heads = record.layers[layer];
    const int t = record.tokens;
    std::vector<double> row(static_cast<size_t>(t), 0.0);
    if (head == -1) {
        for (const auto& h : heads)
            for (int j = 0; j < t; ++j) row[j] += h[j] / static_cast<double>(heads.size());
    } else {
        if (head < 0 || head >= static_cast<int>(heads.size()))
            throw DimensionError("head " + std::to_string(head) + " out of range");
        for (int j = 0; j < t; ++j) row[j] = heads[head][j];
    }
    return grid_from_class_row(row, t);
}

std::vector<double> upsample_map(const AttentionMap& map, int height, int width) {
    const int g = map.grid;
    std::vector<double> out(static_cast<size_t>(height) * width);
    const double sy = static_cast<double>(g) / height;
    const double sx = static_cast<double>(g) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, g - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, g - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, g - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, g - 1);
            const double wx = fx - x0;
            const double top = map.at(y0, x0) * (1 - wx) + map.at(y0, x1) * wx;
            const double bot = map.at(y1, x0) * (1 - wx) + map.at(y1, x1) * wx;
            out[static_cast<size_t>(y) * width + x] = top * (1 - wy) + bot * wy;
        }
    }
    return out;
}

void heat_colormap(double t, double rgb[3]) {
    // 5-stop gradient, linear between stops
    static constexpr double stops[5][3] = {
        {0.001462, 0.000466, 0.013866},
        {0.316654, 0.071690, 0.485380},
        {0.716387, 0.214982, 0.475290},
        {0.986700, 0.535582, 0.287099},
        {0.988362, 0.998364, 0.644924},
    };
    t = std::clamp(t, 0.0, 1.0);
    const double pos = t * 4.0;
    const int lo = std::min(static_cast<int>(pos), 3);
    const double f = pos - lo;
    for (int c = 0; c < 3; ++c) rgb[c] = stops[lo][c] * (1.0 - f) + stops[lo + 1][c] * f;
}

Image render_heatmap(const AttentionMap& map, const Image& image, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("render_heatmap: alpha must lie in [0,1]");
    if (map.grid <= 0 || image.height != image.width ||
        image.height % map.grid != 0)
        throw DimensionError("render_heatmap: map grid " + std::to_string(map.grid) +
                             " does not divide image " + std::to_string(image.height) +
                             "x" + std::to_string(image.width));
    const std::vector<double> up = upsample_map(map, image.height, image.width);
    Image out = Image::zeros(image.height, image.width);
    double rgb[3];
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            heat_colormap(up[static_cast<size_t>(y) * image.width + x], rgb);
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = (1.0 - alpha) * image.at(y, x, c) + alpha * rgb[c];
        }
    }
    return out;
}

} // namespace vitderm
