#pragma once

#include <cstdint>
#include <string>

#include "vitderm/vit.hpp"

namespace vitderm {

// Binary weight container, little-endian throughout:
//   magic "VITW", version byte 0x01, then one record per tensor:
//     u32 name length, UTF-8 name, u8 dtype (0 = f32), u8 rank,
//     rank x u32 dims, raw f32 payload;
//   terminated by u32 0. Duplicate names are invalid.
// Values are stored as f32; in-memory f64 values are narrowed on save.

void save_weights(const ViTModel& model, const std::string& path);

// Rebuilds a model for `config` and fills it from the file. Every
// config-required tensor must be present with a matching shape; names the
// file carries beyond the model's set are an error. With backbone_only the
// head.* tensors may be absent and keep their fresh initialization
// (seeded by head_seed).
ViTModel load_weights(const std::string& path, const ViTConfig& config,
                      bool backbone_only = false, uint64_t head_seed = 0);

} // namespace vitderm
