// Acceptance suite: one check per release criterion, one PASS/FAIL line each.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "testutil.hpp"
#include "vitderm/attention.hpp"
#include "vitderm/augment.hpp"
#include "vitderm/dataset.hpp"
#include "vitderm/metrics.hpp"
#include "vitderm/stats.hpp"
#include "vitderm/train.hpp"

using namespace vitderm;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw Failure(msg);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("vitderm_accept_" + name);
    fs::create_directories(dir);
    return dir.string();
}

MemoryDataset overfit_dataset() {
    std::mt19937_64 rng(1000);
    std::vector<Image> images;
    std::vector<int> labels;
    for (int i = 0; i < 16; ++i) {
        images.push_back(testutil::class_pattern_image(8, i % 2, 2, rng));
        labels.push_back(i % 2);
    }
    return MemoryDataset(std::move(images), std::move(labels));
}

TrainConfig overfit_config() {
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.9;
    cfg.batch_size = 16;
    cfg.epochs = 200;
    cfg.lr_policy = LrPolicy::None;
    cfg.early_stop_patience = 0;
    cfg.seed = 7;
    return cfg;
}

// ---- 1. gradient suite ------------------------------------------------------

void gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    auto track = [&](double err, const char* what) {
        require(err < 1e-4, std::string(what) + ": rel err " + fmt(err));
        worst = std::max(worst, err);
    };

    {
        Tensor a = testutil::random_tensor({3, 4}, rng);
        Tensor b = testutil::random_tensor({4, 2}, rng);
        a.set_requires_grad(true);
        b.set_requires_grad(true);
        track(testutil::max_grad_rel_err({a, b}, [&] { return sum(matmul(a, b)); }),
              "matmul");
    }
    for (auto kind : {Activation::Relu, Activation::Gelu}) {
        Tensor x = testutil::random_tensor({24}, rng, -2.0, 2.0);
        x.set_requires_grad(true);
        track(testutil::max_grad_rel_err({x}, [&] { return sum(activation(x, kind)); }),
              to_string(kind).c_str());
    }
    {
        Tensor x = testutil::random_tensor({24}, rng, -2.0, 2.0);
        x.set_requires_grad(true);
        track(testutil::max_grad_rel_err({x},
                                         [&] {
                                             std::mt19937_64 slopes(5);
                                             return sum(activation(x, Activation::Rrelu,
                                                                   Mode::Train, &slopes));
                                         }),
              "rrelu");
    }
    {
        Tensor x = testutil::random_tensor({3, 6}, rng, -2.0, 2.0);
        Tensor w = testutil::random_tensor({3, 6}, rng);
        x.set_requires_grad(true);
        track(testutil::max_grad_rel_err({x}, [&] { return sum(mul(softmax(x, 1), w)); }),
              "softmax");
    }
    {
        Tensor x = testutil::random_tensor({4, 8}, rng, -2.0, 2.0);
        Tensor g = testutil::random_tensor({8}, rng, 0.5, 1.5);
        Tensor b = testutil::random_tensor({8}, rng, -0.5, 0.5);
        Tensor w = testutil::random_tensor({4, 8}, rng);
        x.set_requires_grad(true);
        g.set_requires_grad(true);
        b.set_requires_grad(true);
        track(testutil::max_grad_rel_err(
                  {x, g, b}, [&] { return sum(mul(layer_norm(x, g, b), w)); }),
              "layer_norm");
    }
    {
        Tensor x = testutil::random_tensor({4, 3}, rng, -2.0, 2.0);
        Tensor g = testutil::random_tensor({3}, rng, 0.5, 1.5);
        Tensor b = testutil::random_tensor({3}, rng, -0.5, 0.5);
        Tensor w = testutil::random_tensor({4, 3}, rng);
        x.set_requires_grad(true);
        g.set_requires_grad(true);
        b.set_requires_grad(true);
        track(testutil::max_grad_rel_err({x, g, b},
                                         [&] {
                                             Tensor rm = Tensor::zeros({3});
                                             Tensor rv = Tensor::full({3}, 1.0);
                                             return sum(mul(batch_norm(x, g, b, rm, rv,
                                                                       Mode::Train),
                                                            w));
                                         }),
              "batch_norm");
    }
    {
        Tensor x = testutil::random_tensor({40}, rng);
        x.set_requires_grad(true);
        track(testutil::max_grad_rel_err({x},
                                         [&] {
                                             std::mt19937_64 mask(9);
                                             return sum(dropout(x, 0.4, Mode::Train, mask));
                                         }),
              "dropout");
    }
    {
        Tensor logits = testutil::random_tensor({4, 7}, rng, -2.0, 2.0);
        Tensor onehot = Tensor::zeros({4, 7});
        for (int i = 0; i < 4; ++i) onehot.data()[i * 7 + (2 * i) % 7] = 1.0;
        logits.set_requires_grad(true);
        track(testutil::max_grad_rel_err(
                  {logits}, [&] { return softmax_cross_entropy(logits, onehot); }),
              "softmax+CE");
        logits.zero_grad();
        track(testutil::max_grad_rel_err(
                  {logits},
                  [&] { return categorical_cross_entropy(softmax(logits, 1), onehot); }),
              "CE(probs)");
    }

    // full tiny-ViT graph: every trainable parameter against central differences
    {
        ViTConfig cfg = testutil::tiny_config();
        cfg.head_activation = Activation::Gelu;  // smooth everywhere
        ViTModel model = init_weights(cfg, 31);
        std::vector<Image> batch = {testutil::random_image(8, 70),
                                    testutil::random_image(8, 71)};
        Tensor onehot = Tensor::zeros({2, 7});
        onehot.data()[3] = 1.0;
        onehot.data()[7 + 5] = 1.0;

        const std::vector<double> rm1 = model.p("head.bn1.mean").data();
        const std::vector<double> rv1 = model.p("head.bn1.var").data();
        const std::vector<double> rm2 = model.p("head.bn2.mean").data();
        const std::vector<double> rv2 = model.p("head.bn2.var").data();
        auto make_loss = [&] {
            model.p("head.bn1.mean").data() = rm1;  // undo running-stat updates
            model.p("head.bn1.var").data() = rv1;
            model.p("head.bn2.mean").data() = rm2;
            model.p("head.bn2.var").data() = rv2;
            ForwardResult fwd = forward(model, batch, Mode::Train);
            return softmax_cross_entropy(fwd.logits, onehot);
        };
        std::vector<Tensor> leaves;
        long long checked = 0;
        for (const auto& name : model.param_order)
            if (model.p(name).requires_grad()) {
                leaves.push_back(model.p(name));
                checked += static_cast<long long>(model.p(name).size());
            }
        const double err = testutil::max_grad_rel_err(leaves, make_loss);
        track(err, "full tiny-ViT graph");
        std::cout << "    tiny-ViT: " << checked << " parameters checked, max rel err "
                  << fmt(err) << "\n";
    }

    const double elapsed = seconds_since(t0);
    require(elapsed < 60.0, "gradient suite took " + fmt(elapsed) + "s (budget 60s)");
    std::cout << "    worst op rel err " << fmt(worst) << ", elapsed " << fmt(elapsed)
              << "s\n";
}

// ---- 2. shape oracles ---------------------------------------------------------

void shape_oracles() {
    const ViTConfig l16 = make_config("L16");
    require(l16.seq_len() == 197, "L16 token count");
    require(l16.head_input_len() == 197 * 1024, "L16 head input length");
    require(make_config("L32").seq_len() == 50, "L32 token count");
    for (const char* name : {"B16", "B32"}) {
        const ViTConfig cfg = make_config(name);
        require(cfg.depth == 12 && cfg.num_heads == 12,
                std::string(name) + " depth/heads");
    }

    // closed-form count vs the enumeration models are materialized from
    for (const char* name : {"L16", "L32", "B16", "B32"}) {
        const ViTConfig cfg = make_config(name);
        for (bool head : {false, true}) {
            long long enumerated = 0;
            for (const auto& spec : enumerate_params(cfg, head))
                if (spec.trainable) enumerated += spec.count();
            require(param_count(cfg, head) == enumerated,
                    std::string(name) + " param_count vs enumeration");
        }
    }
    // independently recomputed constants
    require(param_count(testutil::tiny_config(), false) == 1056, "tiny backbone 1056");
    {
        const long long d = 1024, mlp = 4096;
        const long long block = 2 * d + 4 * (d * d + d) + 2 * d + (d * mlp + mlp) +
                                (mlp * d + d);
        const long long backbone = (768 * d + d) + d + 197 * d + 24 * block + 2 * d;
        require(param_count(make_config("L16"), false) == backbone,
                "L16 backbone closed form");
    }

    // materialized models agree with the closed form
    {
        ViTModel tiny = init_weights(testutil::tiny_config(), 1);
        require(tiny.trainable_count() == param_count(testutil::tiny_config(), true),
                "tiny live enumeration");
        ViTModel b32 = init_weights(make_config("B32"), 1);
        require(b32.trainable_count() == param_count(make_config("B32"), true),
                "B32 live enumeration");
        std::cout << "    B32 live total " << b32.trainable_count() << ", L16 backbone "
                  << param_count(make_config("L16"), false) << "\n";
    }
}

// ---- 3. overfit smoke ---------------------------------------------------------

void overfit_smoke() {
    const auto t0 = std::chrono::steady_clock::now();
    const MemoryDataset data = overfit_dataset();

    // loss strictly decreases over the first 5 optimizer steps
    {
        ViTModel model = init_weights(testutil::tiny_config(), 11);
        std::vector<Image> images;
        Tensor onehot = Tensor::zeros({16, 7});
        for (size_t i = 0; i < data.size(); ++i) {
            images.push_back(data.image(i));
            onehot.data()[i * 7 + data.label(i)] = 1.0;
        }
        std::mt19937_64 rng(99);
        std::map<std::string, std::vector<double>> velocity;
        double prev = std::numeric_limits<double>::infinity();
        for (int step = 0; step < 6; ++step) {
            model.zero_grads();
            ForwardResult fwd = forward(model, images, Mode::Train, &rng);
            Tensor loss = softmax_cross_entropy(fwd.logits, onehot);
            if (step > 0)
                require(loss.item() < prev,
                        "loss not strictly decreasing at step " + std::to_string(step));
            prev = loss.item();
            backward(loss);
            for (const auto& name : model.param_order) {
                Tensor& p = model.p(name);
                if (p.requires_grad() && p.has_grad())
                    sgd_step(p, p.node()->grad, 0.05, 0.9, velocity[name]);
            }
        }
    }

    ViTModel model = init_weights(testutil::tiny_config(), 11);
    const std::string dir = temp_dir("overfit");
    const TrainResult result = train(model, data, data, overfit_config(), dir);
    double best = 0.0;
    int reached = -1;
    for (const auto& e : result.history.epochs) {
        if (e.train_acc > best) best = e.train_acc;
        if (best == 1.0) {
            reached = e.epoch;
            break;
        }
    }
    require(best == 1.0, "train accuracy peaked at " + fmt(best));
    const double elapsed = seconds_since(t0);
    require(elapsed < 300.0, "overfit smoke took " + fmt(elapsed) + "s (budget 300s)");
    std::cout << "    100% train accuracy at epoch " << reached << ", elapsed "
              << fmt(elapsed) << "s\n";
    fs::remove_all(dir);
}

// ---- 4. callback state machines ------------------------------------------------

void callback_machines() {
    {
        CallbackState st;
        const std::vector<double> losses = {1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95};
        std::vector<bool> stops;
        for (double l : losses) stops.push_back(early_stopping_update(st, l, 5));
        require(stops == std::vector<bool>{false, false, false, false, false, false, true},
                "early stopping must fire exactly at best+5");
    }
    {
        CallbackState st;
        st.current_lr = 0.01;
        std::vector<double> lrs;
        for (double l : {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0})
            lrs.push_back(reduce_lr_on_plateau(st, l, 3, 0.1, 1e-6));
        const std::vector<double> expect = {0.01, 0.01, 0.01, 0.001,
                                            0.001, 0.001, 0.0001};
        require(lrs == expect, "plateau must decay by 0.1 after exactly 3");
    }
    {
        const std::string dir = temp_dir("cbk");
        const std::string path = dir + "/best.vitw";
        const ViTConfig cfg = testutil::tiny_config();
        CallbackState st;
        const std::vector<double> accs = {0.5, 0.6, 0.55, 0.7, 0.7};
        int best_seed = -1;
        double best_acc = -1.0;
        for (int e = 0; e < static_cast<int>(accs.size()); ++e) {
            ViTModel model = init_weights(cfg, 100 + e);  // distinct weights per epoch
            const bool saved = checkpoint_update(st, accs[e], model, path);
            require(saved == (accs[e] > best_acc),
                    "checkpoint saved at the wrong epoch " + std::to_string(e + 1));
            if (saved) {
                best_acc = accs[e];
                best_seed = 100 + e;
            }
            // the file always matches the max-val-accuracy epoch seen so far
            ViTModel on_disk = load_weights(path, cfg);
            ViTModel expect = init_weights(cfg, best_seed);
            for (const auto& name : expect.param_order)
                require(on_disk.p(name).data() == expect.p(name).data(),
                        "checkpoint content mismatch after epoch " + std::to_string(e + 1));
        }
        fs::remove_all(dir);
    }
}

// ---- 5. metrics reconstruction --------------------------------------------------

void metrics_reconstruction() {
    ConfusionMatrix l32;
    l32.counts[4][4] = 24;
    l32.counts[4][5] = 17;
    require(format_percent(*recall(l32, 4)) == "58.54%", "recall(24,17) formatting");
    ConfusionMatrix l16;
    l16.counts[4][4] = 23;
    l16.counts[4][5] = 18;
    require(format_percent(*recall(l16, 4)) == "56.10%", "recall(23,18) formatting");

    std::mt19937_64 rng(555);
    std::uniform_int_distribution<int> cls(0, kNumClasses - 1);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 50 + trial % 100;
        std::vector<int> preds(n), labels(n);
        for (int i = 0; i < n; ++i) {
            preds[i] = cls(rng);
            labels[i] = cls(rng);
        }
        const ConfusionMatrix cm = confusion_matrix(preds, labels);
        int64_t correct = 0;
        std::array<std::array<int64_t, kNumClasses>, kNumClasses> brute{};
        for (int i = 0; i < n; ++i) {
            ++brute[labels[i]][preds[i]];
            if (preds[i] == labels[i]) ++correct;
        }
        require(cm.counts == brute, "confusion matrix mismatch vs brute force");
        require(accuracy(cm) == static_cast<double>(correct) / n,
                "accuracy mismatch vs brute force");
        for (int c = 0; c < kNumClasses; ++c) {
            const auto r = recall(cm, c);
            int64_t tp = 0, actual = 0;
            for (int i = 0; i < n; ++i)
                if (labels[i] == c) {
                    ++actual;
                    if (preds[i] == c) ++tp;
                }
            if (actual == 0)
                require(!r.has_value(), "recall must be undefined without actual cases");
            else
                require(*r == static_cast<double>(tp) / actual,
                        "recall mismatch vs brute force");
        }
        double weighted = 0.0;
        for (int c = 0; c < kNumClasses; ++c)
            if (const auto r = recall(cm, c))
                weighted += *r * static_cast<double>(cm.row_sum(c)) / cm.total();
        require(std::abs(weighted - accuracy(cm)) < 1e-12, "weighted-recall identity");
    }
}

// ---- 6. data pipeline ------------------------------------------------------------

void data_pipeline() {
    // real metadata, when present
    std::string real_path = "data/HAM10000_metadata.csv";
    if (const char* env = std::getenv("VITDERM_HAM10000")) real_path = env;
    if (fs::exists(real_path)) {
        const auto records = load_metadata(real_path);
        CleanseStats stats;
        const auto kept = cleanse(records, &stats);
        std::cout << "    HAM10000: " << stats.input << " rows -> " << kept.size()
                  << " cleansed (paper reports 9948)\n";
        require(std::abs(static_cast<double>(kept.size()) - 9948.0) <= 0.01 * 9948.0,
                "cleansed count " + std::to_string(kept.size()) +
                    " outside 1% of 9948");
        const StatsReport rep = stats_report(kept);
        std::cout << "    male share " << fmt(rep.male_share * 100) << "%, mean age "
                  << fmt(rep.age_mean) << "\n";
        require(std::abs(rep.male_share - 0.54) < 0.02, "male share far from 54%");
        require(std::abs(rep.age_mean - 52.0) < 2.0, "mean age far from 52");

        const SplitDataset s = split(kept, {0.8, 0.1, 0.1}, 42);
        const double total = static_cast<double>(kept.size());
        std::cout << "    split " << s.train.size() << "/" << s.val.size() << "/"
                  << s.test.size() << " (paper reports 7976/987/985)\n";
        require(std::abs(s.train.size() - 0.8 * total) <= 0.005 * 0.8 * total &&
                    std::abs(s.val.size() - 0.1 * total) <= 0.005 * 0.1 * total &&
                    std::abs(s.test.size() - 0.1 * total) <= 0.005 * 0.1 * total,
                "split sizes outside 0.5% of the 80/10/10 targets");
    } else {
        std::cout << "    HAM10000 metadata not present, cleansing check skipped\n";
    }

    // lesion-disjoint splits across 100 seeds
    std::vector<LesionRecord> records;
    std::mt19937_64 rng(9);
    const auto& labels = class_labels();
    for (int lesion = 0; lesion < 80; ++lesion) {
        const int images = 1 + static_cast<int>(rng() % 3);
        for (int k = 0; k < images; ++k) {
            LesionRecord r;
            r.lesion_id = "HAM_" + std::to_string(lesion);
            r.image_id = "ISIC_" + std::to_string(lesion) + "_" + std::to_string(k);
            r.dx = labels[lesion % kNumClasses];
            r.age = 50;
            r.sex = Sex::Male;
            r.localization = "back";
            records.push_back(std::move(r));
        }
    }
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const SplitDataset s = split(records, {0.8, 0.1, 0.1}, seed);
        std::map<std::string, std::set<std::string>> lesion_splits;
        size_t total = 0;
        for (const auto* part : {&s.train, &s.val, &s.test}) {
            total += part->size();
            for (const auto& r : *part)
                lesion_splits[r.lesion_id].insert(
                    part == &s.train ? "train" : (part == &s.val ? "val" : "test"));
        }
        require(total == records.size(), "split lost records");
        for (const auto& [lesion, parts] : lesion_splits)
            require(parts.size() == 1, "lesion " + lesion + " straddles splits");
    }

    // exact augmentation balance
    {
        std::vector<LesionRecord> train;
        for (const auto& r : records) train.push_back(r);
        const int64_t target = 60;
        const auto entries = augment_class_balance(train, target, 77);
        std::map<std::string, int64_t> counts, originals;
        for (const auto& r : train) ++originals[r.dx];
        for (const auto& e : entries) ++counts[e.dx];
        for (const auto& [dx, n] : counts) {
            if (dx == "nv")
                require(n == originals["nv"], "nv must stay untouched");
            else
                require(n == target, dx + " balanced to " + std::to_string(n) +
                                         ", expected " + std::to_string(target));
        }
    }

    // identity transform and 180-degree rotation
    {
        const Image img = testutil::random_image(32, 123);
        const Image same = transform_image(img, AugmentParams{});
        for (size_t i = 0; i < img.pixels.size(); ++i)
            require(std::abs(same.pixels[i] - img.pixels[i]) < 1e-6,
                    "identity transform is not a no-op");
        AugmentParams rot;
        rot.rotation_deg = 180.0;
        const Image flipped = transform_image(img, rot);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                for (int c = 0; c < 3; ++c)
                    require(std::abs(flipped.at(y, x, c) - img.at(31 - y, 31 - x, c)) <
                                1e-5,
                            "180-degree rotation does not match double flip");
    }
}

// ---- 7. attention properties ------------------------------------------------------

void attention_properties() {
    std::mt19937_64 rng(31);
    auto random_record = [&](int tokens, int depth, int heads) {
        AttentionRecord rec;
        rec.tokens = tokens;
        std::uniform_real_distribution<double> dist(0.01, 1.0);
        for (int l = 0; l < depth; ++l) {
            std::vector<std::vector<double>> layer;
            for (int h = 0; h < heads; ++h) {
                std::vector<double> m(static_cast<size_t>(tokens) * tokens);
                for (int i = 0; i < tokens; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < tokens; ++j) {
                        m[static_cast<size_t>(i) * tokens + j] = dist(rng);
                        s += m[static_cast<size_t>(i) * tokens + j];
                    }
                    for (int j = 0; j < tokens; ++j)
                        m[static_cast<size_t>(i) * tokens + j] /= s;
                }
                layer.push_back(std::move(m));
            }
            rec.layers.push_back(std::move(layer));
        }
        return rec;
    };

    for (int trial = 0; trial < 10; ++trial) {
        AttentionRecord rec = random_record(10, 3, 4);
        std::vector<std::vector<double>> intermediates;
        const AttentionMap a = attention_rollout(rec, &intermediates);
        for (const auto& m : intermediates)
            for (int i = 0; i < 10; ++i) {
                double s = 0.0;
                for (int j = 0; j < 10; ++j) s += m[static_cast<size_t>(i) * 10 + j];
                require(std::abs(s - 1.0) < 1e-5, "rolled matrix row not stochastic");
            }
        std::shuffle(rec.layers[1].begin(), rec.layers[1].end(), rng);
        const AttentionMap b = attention_rollout(rec);
        for (size_t i = 0; i < a.values.size(); ++i)
            require(std::abs(a.values[i] - b.values[i]) < 1e-12,
                    "rollout depends on head order");
    }

    const Image img = testutil::random_image(16, 321);
    AttentionMap map;
    map.grid = 4;
    map.values.assign(16, 0.25);
    map.values[7] = 1.0;
    const Image out = render_heatmap(map, img, 0.0);
    require(out.pixels == img.pixels, "alpha=0 render must equal the input");
}

// ---- 8. persistence ---------------------------------------------------------------

void persistence() {
    const ViTConfig cfg = testutil::tiny_config();
    const std::string dir = temp_dir("persist");

    ViTModel m = init_weights(cfg, 2025);
    const std::string p1 = dir + "/a.vitw";
    const std::string p2 = dir + "/b.vitw";
    save_weights(m, p1);
    ViTModel loaded = load_weights(p1, cfg);
    for (const auto& name : m.param_order)
        require(loaded.p(name).data() == m.p(name).data(),
                "round trip altered tensor " + name);
    save_weights(loaded, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)),
                         std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)),
                         std::istreambuf_iterator<char>());
    require(!b1.empty() && b1 == b2, "container files differ after a round trip");

    // checkpoint reload reproduces the recorded validation accuracy
    ViTModel model = init_weights(cfg, 11);
    const MemoryDataset data = overfit_dataset();
    TrainConfig tcfg = overfit_config();
    tcfg.epochs = 12;
    const TrainResult result = train(model, data, data, tcfg, dir);
    require(!result.best_checkpoint.empty(), "no checkpoint was written");
    double best_val_acc = 0.0;
    for (const auto& e : result.history.epochs)
        best_val_acc = std::max(best_val_acc, e.val_acc);
    ViTModel reloaded = load_weights(result.best_checkpoint, cfg);
    const EvalStats stats = evaluate(reloaded, data, tcfg.batch_size);
    require(stats.acc == best_val_acc,
            "reloaded checkpoint accuracy " + fmt(stats.acc) + " vs recorded " +
                fmt(best_val_acc));
    fs::remove_all(dir);
}

// ---- 9. determinism ----------------------------------------------------------------

void determinism() {
    const std::string dir = temp_dir("determinism");
    auto run = [&](const std::string& csv_path) {
        ViTModel model = init_weights(testutil::tiny_config(), 11);
        const MemoryDataset data = overfit_dataset();
        TrainConfig cfg = overfit_config();
        cfg.epochs = 10;
        cfg.lr_policy = LrPolicy::Plateau;
        const TrainResult result = train(model, data, data, cfg, dir);
        std::ofstream out(csv_path, std::ios::binary);
        out << result.history.to_csv(cfg.csv_timing);
    };
    run(dir + "/h1.csv");
    run(dir + "/h2.csv");
    std::ifstream f1(dir + "/h1.csv", std::ios::binary), f2(dir + "/h2.csv",
                                                            std::ios::binary);
    const std::string a((std::istreambuf_iterator<char>(f1)),
                        std::istreambuf_iterator<char>());
    const std::string b((std::istreambuf_iterator<char>(f2)),
                        std::istreambuf_iterator<char>());
    require(!a.empty() && a == b, "seeded runs produced different history CSVs");
    fs::remove_all(dir);
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void()>>> criteria = {
        {"gradient suite (ops + full tiny-ViT graph, rel err < 1e-4, < 60s)",
         gradient_suite},
        {"shape oracles (tokens, head input, param counts)", shape_oracles},
        {"overfit smoke (100% train acc <= 200 epochs, 5-step descent, < 5min)",
         overfit_smoke},
        {"callback state machines (early stop, plateau, checkpoint)",
         callback_machines},
        {"metrics reconstruction (published recalls, brute-force agreement)",
         metrics_reconstruction},
        {"data pipeline (cleansing, disjoint splits, balancing, transforms)",
         data_pipeline},
        {"attention properties (row-stochastic rollout, head order, alpha=0)",
         attention_properties},
        {"persistence (bit-exact round trip, checkpoint reload)", persistence},
        {"determinism (byte-equal history CSVs)", determinism},
    };

    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        try {
            fn();
            std::cout << "PASS  " << name << "\n";
        } catch (const std::exception& e) {
            ++failures;
            std::cout << "FAIL  " << name << "\n      " << e.what() << "\n";
        }
    }
    std::cout << (failures == 0 ? "all criteria passed"
                                : std::to_string(failures) + " criteria failed")
              << "\n";
    return failures == 0 ? 0 : 1;
}
