#pragma once

#include <random>

#include "vitderm/dataset.hpp"
#include "vitderm/image.hpp"

namespace vitderm {

// Sampled augmentation parameters. Sampling stays inside the declared
// ranges; boundary fill is always nearest-pixel.
struct AugmentParams {
    double rotation_deg = 0.0;   // [-180, 180]
    double shift_x = 0.0;        // [-0.1, 0.1] of width
    double shift_y = 0.0;        // [-0.1, 0.1] of height
    double shear_deg = 0.0;      // [-10, 10]
    double brightness = 1.0;     // [0.8, 1.2]
    double zoom = 1.0;           // [0.9, 1.1]
};

AugmentParams sample_augment_params(std::mt19937_64& rng);

std::string serialize_params(const AugmentParams& p);
AugmentParams parse_params(const std::string& s);

// One combined affine map (rotation . shear . zoom . shift, about the image
// center) applied with bilinear interpolation; out-of-bounds samples clamp
// to the nearest in-bounds pixel. Brightness multiplies all channels, then
// values clamp to [0,1].
Image transform_image(const Image& image, const AugmentParams& params);

// One sample of the prepared dataset: an original image or a synthetic one
// derived from a source image by recorded augmentation parameters.
struct ManifestEntry {
    std::string split;            // train | val | test
    std::string image_id;
    std::string dx;
    bool synthetic = false;
    std::string source_image_id;  // empty for originals
    AugmentParams params;         // identity for originals
};

// Upsamples every class except nv to `target` by applying freshly sampled
// parameters to uniformly chosen originals. Parameter streams derive from
// (seed, class, synthetic index), so the output is independent of any
// parallel evaluation order. Returns originals plus synthetics.
std::vector<ManifestEntry> augment_class_balance(
    const std::vector<LesionRecord>& train_records, int64_t target, uint64_t seed);

std::vector<ManifestEntry> to_entries(const std::vector<LesionRecord>& records,
                                      const std::string& split_name);

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

} // namespace vitderm
