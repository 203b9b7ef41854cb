#pragma once

#include "vitderm/image.hpp"
#include "vitderm/vit.hpp"

namespace vitderm {

// Patch-grid saliency values in [0,1], min-max normalized so the maximum is
// 1; a constant raw map collapses to all zeros.
struct AttentionMap {
    int grid = 0;
    std::vector<double> values;  // row-major grid x grid

    double at(int r, int c) const { return values[static_cast<size_t>(r) * grid + c]; }
};

// Attention rollout: per layer, average heads, add the identity, renormalize
// rows, then multiply across layers (deepest applied last). The class-token
// row without the class-token column becomes the patch grid. When
// `intermediates` is given it receives the rolled matrix after each layer.
AttentionMap attention_rollout(const AttentionRecord& record,
                               std::vector<std::vector<double>>* intermediates = nullptr);

// Single-layer alternative: class-token attention of one layer, heads
// averaged unless a specific head is selected. layer -1 means the last.
AttentionMap layer_attention(const AttentionRecord& record, int layer = -1, int head = -1);

// Map upsampled bilinearly to H x W.
std::vector<double> upsample_map(const AttentionMap& map, int height, int width);

// overlay = (1-alpha) * image + alpha * colormap(map)
Image render_heatmap(const AttentionMap& map, const Image& image, double alpha);

// The numeric 5-stop gradient used by render_heatmap.
void heat_colormap(double t, double rgb[3]);

} // namespace vitderm
