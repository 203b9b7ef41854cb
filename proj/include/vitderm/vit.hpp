#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vitderm/image.hpp"
#include "vitderm/tensor.hpp"

namespace vitderm {

// Architecture hyperparameters. The four presets come from make_config();
// custom configurations are built by hand and validated.
struct ViTConfig {
    std::string name = "custom";
    int image_size = 224;
    int patch_size = 16;
    int hidden_dim = 1024;
    int mlp_dim = 4096;
    int num_heads = 16;
    int depth = 24;
    int num_classes = 7;
    double dropout_rate = 0.5;
    int head_neurons = 28;
    Activation head_activation = Activation::Relu;
    double l2_lambda = 0.0;
    // Head input: full token sequence flattened (default) or class token only.
    bool head_class_token_only = false;

    int num_patches() const {
        const int g = image_size / patch_size;
        return g * g;
    }
    int seq_len() const { return num_patches() + 1; }
    int head_dim() const { return hidden_dim / num_heads; }
    int patch_len() const { return patch_size * patch_size * 3; }
    int head_input_len() const {
        return head_class_token_only ? hidden_dim : seq_len() * hidden_dim;
    }
    void validate() const;
};

// Presets: L16, L32 (D=1024, mlp=4096, 16 heads, depth 24) and
// B16, B32 (D=768, mlp=3072, 12 heads, depth 12).
ViTConfig make_config(const std::string& name);

enum class ParamInit { TruncNormal, Zeros, Ones };

struct ParamSpec {
    std::string name;
    std::vector<int> shape;
    ParamInit init;
    bool trainable;
    long long count() const {
        long long n = 1;
        for (int d : shape) n *= d;
        return n;
    }
};

// Canonical parameter list for a config; the single source from which models
// are materialized and weight files are ordered. Batch-norm running
// statistics appear with trainable=false.
std::vector<ParamSpec> enumerate_params(const ViTConfig& cfg, bool include_head = true);

// Closed-form trainable-parameter total, computed independently of
// enumerate_params; must equal the live model's enumerated total.
long long param_count(const ViTConfig& cfg, bool include_head = true);

struct ViTModel {
    ViTConfig config;
    std::vector<std::string> param_order;
    std::map<std::string, Tensor> params;

    Tensor& p(const std::string& name);
    const Tensor& p(const std::string& name) const;
    long long trainable_count() const;
    void zero_grads();
};

// Deterministic initialization: truncated normal (std 0.02, cut at 2 std)
// for projection/attention/MLP weights and the class token; zeros for biases
// and the positional embedding; ones for norm gains. Draws are quantized to
// f32 so the f32 weight container round-trips losslessly.
ViTModel init_weights(const ViTConfig& cfg, uint64_t seed);

// [H,W,3] -> [N, patch_size^2*3]; patches ordered row-major top-left to
// bottom-right, pixels row-major within a patch, channels last.
Tensor patchify(const Image& image, int patch_size);

// Attention weights captured for one sample: layers x heads matrices,
// each row-major [tokens x tokens].
struct AttentionRecord {
    int tokens = 0;
    std::vector<std::vector<std::vector<double>>> layers;
};

struct ForwardResult {
    Tensor probs;
    Tensor logits;
    std::vector<AttentionRecord> attention;
};

// Transformer encoder over one sample's patch matrix [N, patch_len];
// returns post-final-LN tokens [T, D].
Tensor encode_tokens(const ViTModel& m, const Tensor& patches,
                     AttentionRecord* capture = nullptr);

// Full model: encoder per sample, then the classification head over the
// stacked batch (flatten -> batch-norm -> dense -> activation -> batch-norm
// -> dropout -> dense -> softmax). Train mode needs batch >= 2 and, when
// dropout or rrelu is active, an rng.
ForwardResult forward(ViTModel& m, const std::vector<Image>& batch, Mode mode,
                      std::mt19937_64* rng = nullptr, bool capture_attention = false);

} // namespace vitderm
