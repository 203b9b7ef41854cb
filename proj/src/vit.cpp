#include "vitderm/vit.hpp"

#include <cmath>

namespace vitderm {

void ViTConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0)
        throw ConfigError("image_size and patch_size must be positive");
    if (image_size % patch_size != 0)
        throw ConfigError("image_size " + std::to_string(image_size) +
                          " must be divisible by patch_size " + std::to_string(patch_size));
    if (hidden_dim <= 0 || num_heads <= 0 || hidden_dim % num_heads != 0)
        throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                          " must be a positive multiple of num_heads " +
                          std::to_string(num_heads));
    if (mlp_dim <= 0 || depth <= 0 || num_classes <= 0 || head_neurons <= 0)
        throw ConfigError("mlp_dim, depth, num_classes, head_neurons must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("dropout_rate must lie in [0,1)");
    if (l2_lambda < 0.0) throw ConfigError("l2_lambda must be nonnegative");
}

ViTConfig make_config(const std::string& name) {
    ViTConfig cfg;
    cfg.name = name;
    if (name == "L16" || name == "L32") {
        cfg.hidden_dim = 1024;
        cfg.mlp_dim = 4096;
        cfg.num_heads = 16;
        cfg.depth = 24;
        cfg.patch_size = (name == "L16") ? 16 : 32;
    } else if (name == "B16" || name == "B32") {
        cfg.hidden_dim = 768;
        cfg.mlp_dim = 3072;
        cfg.num_heads = 12;
        cfg.depth = 12;
        cfg.patch_size = (name == "B16") ? 16 : 32;
    } else {
        throw ConfigError("unknown model configuration: '" + name +
                          "' (expected L16, L32, B16 or B32)");
    }
    cfg.validate();
    return cfg;
}

std::vector<ParamSpec> enumerate_params(const ViTConfig& cfg, bool include_head) {
    cfg.validate();
    const int d = cfg.hidden_dim;
    std::vector<ParamSpec> specs;
    specs.push_back({"patch.proj.w", {cfg.patch_len(), d}, ParamInit::TruncNormal, true});
    specs.push_back({"patch.proj.b", {d}, ParamInit::Zeros, true});
    specs.push_back({"cls", {1, d}, ParamInit::TruncNormal, true});
    specs.push_back({"pos", {cfg.seq_len(), d}, ParamInit::Zeros, true});
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string b = "block" + std::to_string(i) + ".";
        specs.push_back({b + "ln1.g", {d}, ParamInit::Ones, true});
        specs.push_back({b + "ln1.b", {d}, ParamInit::Zeros, true});
        for (const char* w : {"q", "k", "v", "o"}) {
            specs.push_back({b + "attn.w" + w, {d, d}, ParamInit::TruncNormal, true});
            specs.push_back({b + "attn.b" + w, {d}, ParamInit::Zeros, true});
        }
        specs.push_back({b + "ln2.g", {d}, ParamInit::Ones, true});
        specs.push_back({b + "ln2.b", {d}, ParamInit::Zeros, true});
        specs.push_back({b + "mlp.w1", {d, cfg.mlp_dim}, ParamInit::TruncNormal, true});
        specs.push_back({b + "mlp.b1", {cfg.mlp_dim}, ParamInit::Zeros, true});
        specs.push_back({b + "mlp.w2", {cfg.mlp_dim, d}, ParamInit::TruncNormal, true});
        specs.push_back({b + "mlp.b2", {d}, ParamInit::Zeros, true});
    }
    specs.push_back({"final_ln.g", {d}, ParamInit::Ones, true});
    specs.push_back({"final_ln.b", {d}, ParamInit::Zeros, true});
    if (include_head) {
        const int f = cfg.head_input_len();
        const int hn = cfg.head_neurons;
        specs.push_back({"head.bn1.g", {f}, ParamInit::Ones, true});
        specs.push_back({"head.bn1.b", {f}, ParamInit::Zeros, true});
        specs.push_back({"head.bn1.mean", {f}, ParamInit::Zeros, false});
        specs.push_back({"head.bn1.var", {f}, ParamInit::Ones, false});
        specs.push_back({"head.dense1.w", {f, hn}, ParamInit::TruncNormal, true});
        specs.push_back({"head.dense1.b", {hn}, ParamInit::Zeros, true});
        specs.push_back({"head.bn2.g", {hn}, ParamInit::Ones, true});
        specs.push_back({"head.bn2.b", {hn}, ParamInit::Zeros, true});
        specs.push_back({"head.bn2.mean", {hn}, ParamInit::Zeros, false});
        specs.push_back({"head.bn2.var", {hn}, ParamInit::Ones, false});
        specs.push_back({"head.dense2.w", {hn, cfg.num_classes}, ParamInit::TruncNormal, true});
        specs.push_back({"head.dense2.b", {cfg.num_classes}, ParamInit::Zeros, true});
    }
    return specs;
}

long long param_count(const ViTConfig& cfg, bool include_head) {
    cfg.validate();
    const long long d = cfg.hidden_dim;
    const long long mlp = cfg.mlp_dim;
    const long long t = cfg.seq_len();
    const long long proj = static_cast<long long>(cfg.patch_len()) * d + d;
    const long long cls = d;
    const long long pos = t * d;
    const long long per_block = 2 * d            // ln1
                                + 4 * (d * d + d) // q,k,v,o projections
                                + 2 * d           // ln2
                                + (d * mlp + mlp) // mlp in
                                + (mlp * d + d);  // mlp out
    const long long final_ln = 2 * d;
    long long total = proj + cls + pos + cfg.depth * per_block + final_ln;
    if (include_head) {
        const long long f = cfg.head_input_len();
        const long long hn = cfg.head_neurons;
        const long long cl = cfg.num_classes;
        total += 2 * f                 // bn1 gamma/beta
                 + (f * hn + hn)       // dense1
                 + 2 * hn              // bn2 gamma/beta
                 + (hn * cl + cl);     // dense2
    }
    return total;
}

Tensor& ViTModel::p(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw UsageError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ViTModel::p(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw UsageError("unknown parameter: " + name);
    return it->second;
}

long long ViTModel::trainable_count() const {
    long long total = 0;
    for (const auto& [name, t] : params)
        if (t.requires_grad()) total += static_cast<long long>(t.size());
    return total;
}

void ViTModel::zero_grads() {
    for (auto& [name, t] : params) t.zero_grad();
}

namespace {

// Normal draw rejected outside +-2 std, quantized to f32.
double truncated_normal(std::mt19937_64& rng, std::normal_distribution<double>& dist,
                        double stddev) {
    for (;;) {
        const double v = dist(rng);
        if (std::abs(v) <= 2.0 * stddev) return static_cast<double>(static_cast<float>(v));
    }
}

} // namespace

ViTModel init_weights(const ViTConfig& cfg, uint64_t seed) {
    ViTModel m;
    m.config = cfg;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 0.02);
    for (const ParamSpec& spec : enumerate_params(cfg, true)) {
        std::vector<double> values(static_cast<size_t>(spec.count()));
        switch (spec.init) {
            case ParamInit::TruncNormal:
                for (double& v : values) v = truncated_normal(rng, dist, 0.02);
                break;
            case ParamInit::Zeros:
                break;
            case ParamInit::Ones:
                std::fill(values.begin(), values.end(), 1.0);
                break;
        }
        Tensor t = Tensor::from(spec.shape, std::move(values));
        t.set_requires_grad(spec.trainable);
        m.param_order.push_back(spec.name);
        m.params.emplace(spec.name, std::move(t));
    }
    return m;
}

Tensor patchify(const Image& image, int patch_size) {
    if (image.height != image.width)
        throw DimensionError("patchify: image must be square, got " +
                             std::to_string(image.height) + "x" + std::to_string(image.width));
    if (image.height % patch_size != 0)
        throw DimensionError("patchify: image size " + std::to_string(image.height) +
                             " not divisible by patch size " + std::to_string(patch_size));
    const int grid = image.height / patch_size;
    const int n = grid * grid;
    const int plen = patch_size * patch_size * 3;
    std::vector<double> out(static_cast<size_t>(n) * plen);
    size_t at = 0;
    for (int pr = 0; pr < grid; ++pr) {
        for (int pc = 0; pc < grid; ++pc) {
            for (int dy = 0; dy < patch_size; ++dy) {
                for (int dx = 0; dx < patch_size; ++dx) {
                    for (int c = 0; c < 3; ++c)
                        out[at++] = image.at(pr * patch_size + dy, pc * patch_size + dx, c);
                }
            }
        }
    }
    return Tensor::from({n, plen}, std::move(out));
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_rowvec(matmul(x, w), b);
}

Tensor attention_block(const ViTModel& m, const std::string& prefix, const Tensor& xn,
                       std::vector<std::vector<double>>* capture_heads) {
    const int heads = m.config.num_heads;
    const int dh = m.config.head_dim();
    const Tensor q = linear(xn, m.p(prefix + "wq"), m.p(prefix + "bq"));
    const Tensor k = linear(xn, m.p(prefix + "wk"), m.p(prefix + "bk"));
    const Tensor v = linear(xn, m.p(prefix + "wv"), m.p(prefix + "bv"));
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        const Tensor qh = slice_cols(q, h * dh, dh);
        const Tensor kh = slice_cols(k, h * dh, dh);
        const Tensor vh = slice_cols(v, h * dh, dh);
        const Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
        const Tensor attn = softmax(scores, 1);
        if (capture_heads) capture_heads->push_back(attn.data());
        head_outputs.push_back(matmul(attn, vh));
    }
    const Tensor merged = concat_cols(head_outputs);
    return linear(merged, m.p(prefix + "wo"), m.p(prefix + "bo"));
}

} // namespace

Tensor encode_tokens(const ViTModel& m, const Tensor& patches, AttentionRecord* capture) {
    const ViTConfig& cfg = m.config;
    if (patches.rank() != 2 || patches.dim(0) != cfg.num_patches() ||
        patches.dim(1) != cfg.patch_len())
        throw DimensionError("encode_tokens: patches " + shape_string(patches.shape()) +
                             ", expected [" + std::to_string(cfg.num_patches()) + "," +
                             std::to_string(cfg.patch_len()) + "]");
    Tensor emb = linear(patches, m.p("patch.proj.w"), m.p("patch.proj.b"));
    Tensor x = add(concat_rows({m.p("cls"), emb}), m.p("pos"));
    if (capture) {
        capture->tokens = cfg.seq_len();
        capture->layers.clear();
    }
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string b = "block" + std::to_string(i) + ".";
        std::vector<std::vector<double>> heads;
        Tensor xn = layer_norm(x, m.p(b + "ln1.g"), m.p(b + "ln1.b"));
        Tensor att = attention_block(m, b + "attn.", xn, capture ? &heads : nullptr);
        if (capture) capture->layers.push_back(std::move(heads));
        x = add(x, att);
        Tensor xn2 = layer_norm(x, m.p(b + "ln2.g"), m.p(b + "ln2.b"));
        Tensor h = activation(linear(xn2, m.p(b + "mlp.w1"), m.p(b + "mlp.b1")),
                              Activation::Gelu);
        Tensor out = linear(h, m.p(b + "mlp.w2"), m.p(b + "mlp.b2"));
        x = add(x, out);
    }
    return layer_norm(x, m.p("final_ln.g"), m.p("final_ln.b"));
}

ForwardResult forward(ViTModel& m, const std::vector<Image>& batch, Mode mode,
                      std::mt19937_64* rng, bool capture_attention) {
    const ViTConfig& cfg = m.config;
    if (batch.empty()) throw DimensionError("forward: empty batch");
    if (mode == Mode::Train && batch.size() < 2)
        throw DimensionError("forward: train mode needs batch >= 2 for batch norm");
    if (mode == Mode::Train && !rng && (cfg.dropout_rate > 0.0 ||
                                        cfg.head_activation == Activation::Rrelu))
        throw UsageError("forward: train mode with dropout/rrelu requires an rng");

    ForwardResult result;
    std::vector<Tensor> rows;
    rows.reserve(batch.size());
    for (const Image& img : batch) {
        if (img.height != cfg.image_size || img.width != cfg.image_size)
            throw DimensionError("forward: image " + std::to_string(img.height) + "x" +
                                 std::to_string(img.width) + ", config expects " +
                                 std::to_string(cfg.image_size) + "x" +
                                 std::to_string(cfg.image_size));
        AttentionRecord rec;
        Tensor tokens = encode_tokens(m, patchify(img, cfg.patch_size),
                                      capture_attention ? &rec : nullptr);
        if (capture_attention) result.attention.push_back(std::move(rec));
        rows.push_back(cfg.head_class_token_only
                           ? slice_rows(tokens, 0, 1)
                           : reshape(tokens, {1, cfg.head_input_len()}));
    }
    Tensor x = concat_rows(rows);
    x = batch_norm(x, m.p("head.bn1.g"), m.p("head.bn1.b"),
                   m.p("head.bn1.mean"), m.p("head.bn1.var"), mode);
    x = linear(x, m.p("head.dense1.w"), m.p("head.dense1.b"));
    x = activation(x, cfg.head_activation, mode, rng);
    x = batch_norm(x, m.p("head.bn2.g"), m.p("head.bn2.b"),
                   m.p("head.bn2.mean"), m.p("head.bn2.var"), mode);
    if (cfg.dropout_rate > 0.0 && mode == Mode::Train)
        x = dropout(x, cfg.dropout_rate, mode, *rng);
    result.logits = linear(x, m.p("head.dense2.w"), m.p("head.dense2.b"));
    result.probs = softmax(result.logits, 1);
    return result;
}

} // namespace vitderm
