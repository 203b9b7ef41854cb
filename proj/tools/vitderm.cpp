#include <CLI11.hpp>

#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "vitderm/attention.hpp"
#include "vitderm/augment.hpp"
#include "vitderm/dataset.hpp"
#include "vitderm/metrics.hpp"
#include "vitderm/parallel.hpp"
#include "vitderm/runconfig.hpp"
#include "vitderm/stats.hpp"
#include "vitderm/train.hpp"

namespace fs = std::filesystem;
using namespace vitderm;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed: " + path);
}

// ---- configuration keys -----------------------------------------------------

RunConfig model_defaults() {
    RunConfig rc;
    rc.set_default("model", "L16");
    rc.set_default("image_size", "224");
    rc.set_default("patch_size", "16");
    rc.set_default("hidden_dim", "1024");
    rc.set_default("mlp_dim", "4096");
    rc.set_default("num_heads", "16");
    rc.set_default("depth", "24");
    rc.set_default("num_classes", "7");
    rc.set_default("head_neurons", "28");
    rc.set_default("head_activation", "relu");
    rc.set_default("dropout_rate", "0.5");
    rc.set_default("l2_lambda", "0");
    rc.set_default("head_class_token_only", "false");
    return rc;
}

void add_train_defaults(RunConfig& rc) {
    rc.set_default("optimizer", "sgd");
    rc.set_default("learning_rate", "auto");
    rc.set_default("momentum", "0.9");
    rc.set_default("batch_size", "16");
    rc.set_default("epochs", "20");
    rc.set_default("lr_policy", "plateau");
    rc.set_default("plateau_patience", "3");
    rc.set_default("plateau_factor", "0.1");
    rc.set_default("min_lr", "1e-6");
    rc.set_default("step_every", "5");
    rc.set_default("step_factor", "0.5");
    rc.set_default("early_stop_patience", "5");
    rc.set_default("seed", "0");
    rc.set_default("freeze_backbone", "false");
    rc.set_default("steps_per_epoch", "0");
    rc.set_default("csv_timing", "false");
    rc.set_default("init_weights", "");
    rc.set_default("backbone_only", "false");
    rc.set_default("init_seed", "0");
}

ViTConfig vit_config_from(const RunConfig& rc) {
    const std::string model = rc.get("model");
    ViTConfig cfg;
    if (model != "custom") cfg = make_config(model);
    cfg.name = model;
    auto pick_int = [&](const char* key, int preset) {
        return (model == "custom" || rc.source(key) != "default")
                   ? static_cast<int>(rc.get_int(key))
                   : preset;
    };
    cfg.image_size = pick_int("image_size", cfg.image_size);
    cfg.patch_size = pick_int("patch_size", cfg.patch_size);
    cfg.hidden_dim = pick_int("hidden_dim", cfg.hidden_dim);
    cfg.mlp_dim = pick_int("mlp_dim", cfg.mlp_dim);
    cfg.num_heads = pick_int("num_heads", cfg.num_heads);
    cfg.depth = pick_int("depth", cfg.depth);
    cfg.num_classes = static_cast<int>(rc.get_int("num_classes"));
    cfg.head_neurons = static_cast<int>(rc.get_int("head_neurons"));
    cfg.head_activation = activation_from_string(rc.get("head_activation"));
    cfg.dropout_rate = rc.get_double("dropout_rate");
    cfg.l2_lambda = rc.get_double("l2_lambda");
    cfg.head_class_token_only = rc.get_bool("head_class_token_only");
    cfg.validate();
    return cfg;
}

TrainConfig train_config_from(const RunConfig& rc) {
    TrainConfig cfg;
    cfg.optimizer = optimizer_from_string(rc.get("optimizer"));
    cfg.learning_rate = rc.get("learning_rate") == "auto"
                            ? TrainConfig::default_lr(cfg.optimizer)
                            : rc.get_double("learning_rate");
    cfg.momentum = rc.get_double("momentum");
    cfg.batch_size = static_cast<int>(rc.get_int("batch_size"));
    cfg.epochs = static_cast<int>(rc.get_int("epochs"));
    cfg.l2_lambda = rc.get_double("l2_lambda");
    cfg.lr_policy = lr_policy_from_string(rc.get("lr_policy"));
    cfg.plateau_patience = static_cast<int>(rc.get_int("plateau_patience"));
    cfg.plateau_factor = rc.get_double("plateau_factor");
    cfg.min_lr = rc.get_double("min_lr");
    cfg.step_every = static_cast<int>(rc.get_int("step_every"));
    cfg.step_factor = rc.get_double("step_factor");
    cfg.early_stop_patience = static_cast<int>(rc.get_int("early_stop_patience"));
    cfg.seed = static_cast<uint64_t>(rc.get_int("seed"));
    cfg.freeze_backbone = rc.get_bool("freeze_backbone");
    cfg.steps_per_epoch = static_cast<int>(rc.get_int("steps_per_epoch"));
    cfg.csv_timing = rc.get_bool("csv_timing");
    cfg.validate();
    return cfg;
}

// Binds config keys to CLI flags; flags the user actually passed override
// file values, which override defaults.
class ConfigBinder {
public:
    ConfigBinder(RunConfig& rc, CLI::App* cmd) : rc_(rc), cmd_(cmd) {
        cmd_->add_option("--config", config_file_, "key=value configuration file");
    }

    void bind(const std::string& key, const std::string& help,
              const std::string& flag = "") {
        storage_.push_back(rc_.get(key));
        CLI::Option* opt =
            cmd_->add_option(flag.empty() ? "--" + key : flag, storage_.back(), help);
        binds_.push_back({opt, key, &storage_.back()});
    }

    // arch_flag overrides the flag for the "model" key where --model already
    // names the checkpoint path
    void bind_all_model_keys(const std::string& arch_flag = "--model") {
        bind("model", "L16|L32|B16|B32|custom", arch_flag);
        bind("image_size", "input image size");
        bind("patch_size", "patch size");
        bind("hidden_dim", "encoder width");
        bind("mlp_dim", "encoder MLP width");
        bind("num_heads", "attention heads");
        bind("depth", "encoder layers");
        bind("num_classes", "output classes");
        bind("head_neurons", "head dense width");
        bind("head_activation", "relu|gelu|rrelu");
        bind("dropout_rate", "head dropout rate");
        bind("l2_lambda", "L2 penalty weight");
        bind("head_class_token_only", "classify from the class token only");
    }

    void bind_all_train_keys() {
        bind("optimizer", "sgd|adam");
        bind("learning_rate", "initial learning rate, or 'auto'");
        bind("momentum", "sgd momentum");
        bind("batch_size", "mini-batch size");
        bind("epochs", "training epochs");
        bind("lr_policy", "plateau|scheduler|none");
        bind("plateau_patience", "plateau patience");
        bind("plateau_factor", "plateau decay factor");
        bind("min_lr", "learning-rate floor");
        bind("step_every", "scheduler period");
        bind("step_factor", "scheduler decay factor");
        bind("early_stop_patience", "early stopping patience (0 = off)");
        bind("seed", "run seed");
        bind("freeze_backbone", "train the head only");
        bind("steps_per_epoch", "cap batches per epoch (0 = full pass)");
        bind("csv_timing", "write wall seconds into history.csv");
        bind("init_weights", "weight container to start from");
        bind("backbone_only", "imported container lacks the head");
        bind("init_seed", "seed for randomly initialized weights");
    }

    void finalize() {
        if (!config_file_.empty()) rc_.apply_file(config_file_);
        for (const auto& b : binds_)
            if (b.opt->count() > 0) rc_.apply_cli(b.key, *b.value);
    }

private:
    struct Bind {
        CLI::Option* opt;
        std::string key;
        std::string* value;
    };
    RunConfig& rc_;
    CLI::App* cmd_;
    std::string config_file_;
    std::deque<std::string> storage_;
    std::vector<Bind> binds_;
};

std::vector<ManifestEntry> entries_for_split(const std::vector<ManifestEntry>& all,
                                             const std::string& split) {
    std::vector<ManifestEntry> out;
    for (const auto& e : all)
        if (e.split == split) out.push_back(e);
    if (out.empty()) throw DataError("manifest has no '" + split + "' entries");
    return out;
}

ViTModel load_model_for(const RunConfig& rc, const std::string& path) {
    const ViTConfig cfg = vit_config_from(rc);
    return load_weights(path, cfg, rc.has("backbone_only") && rc.get_bool("backbone_only"),
                        rc.has("init_seed") ? rc.get_int("init_seed") : 0);
}

Image load_input_image(const std::string& path, int image_size) {
    return resize_bilinear(load_ppm(path), image_size, image_size);
}

// ---- subcommand payloads ----------------------------------------------------

struct PrepareArgs {
    std::string metadata, images, out;
    uint64_t seed = 0;
    double train_ratio = 0.8, val_ratio = 0.1, test_ratio = 0.1;
    int64_t balance_target = -1;  // -1: balance to the nv count
    bool no_augment = false;
};

int run_prepare(const PrepareArgs& a) {
    const std::string started = timestamp_now();
    fs::create_directories(a.out);

    const auto records = load_metadata(a.metadata);
    CleanseStats cstats;
    const auto kept = cleanse(records, &cstats);
    std::cout << "loaded " << cstats.input << " records, kept " << cstats.kept
              << " after cleansing (unknown sex " << cstats.unknown_sex
              << ", missing age " << cstats.missing_age << ", unknown localization "
              << cstats.unknown_localization << ")\n";

    const SplitDataset splits =
        split(kept, {a.train_ratio, a.val_ratio, a.test_ratio}, a.seed);
    std::cout << "split sizes: train " << splits.train.size() << ", val "
              << splits.val.size() << ", test " << splits.test.size() << "\n";

    std::vector<ManifestEntry> entries;
    if (a.no_augment) {
        entries = to_entries(splits.train, "train");
    } else {
        std::map<std::string, int64_t> counts;
        for (const auto& r : splits.train) ++counts[r.dx];
        int64_t target = a.balance_target;
        if (target < 0) target = counts["nv"];
        if (target <= 0)
            throw DataError("cannot derive a balance target: no nv training samples "
                            "(pass --balance-target)");
        entries = augment_class_balance(splits.train, target, a.seed);
        std::cout << "balanced non-nv training classes to " << target << " ("
                  << entries.size() - splits.train.size() << " synthetic samples)\n";
    }
    for (const auto& e : to_entries(splits.val, "val")) entries.push_back(e);
    for (const auto& e : to_entries(splits.test, "test")) entries.push_back(e);

    if (!a.images.empty()) {
        int64_t missing = 0;
        for (const auto& e : entries)
            if (!e.synthetic && !fs::exists(a.images + "/" + e.image_id + ".ppm")) ++missing;
        if (missing > 0)
            std::cerr << "warning: " << missing << " image files missing under "
                      << a.images << "\n";
    }

    const std::string manifest_path = a.out + "/split.txt";
    write_manifest(manifest_path, entries);
    std::cout << "wrote " << manifest_path << " (" << entries.size() << " samples)\n";

    RunConfig rc;
    rc.set_default("seed", std::to_string(a.seed));
    rc.set_default("ratios", std::to_string(a.train_ratio) + "/" +
                                 std::to_string(a.val_ratio) + "/" +
                                 std::to_string(a.test_ratio));
    rc.set_default("augment", a.no_augment ? "false" : "true");
    write_run_manifest(a.out + "/manifest.txt", "prepare", rc,
                       {{"input.metadata", a.metadata},
                        {"input.images", a.images},
                        {"output.split", manifest_path}},
                       started, timestamp_now());
    return 0;
}

struct StatsArgs {
    std::string metadata, out;
    bool raw = false;
};

int run_stats(const StatsArgs& a) {
    auto records = load_metadata(a.metadata);
    if (!a.raw) records = cleanse(records);
    const StatsReport rep = stats_report(records);
    const std::string text = rep.to_text() + "\n" + rep.to_keyvalues();
    if (a.out.empty()) {
        std::cout << text;
    } else {
        write_file(a.out, text);
        std::cout << "wrote " << a.out << "\n";
    }
    return 0;
}

struct TrainArgs {
    std::string manifest, images, out;
    RunConfig rc;
};

int run_train(TrainArgs& a) {
    const std::string started = timestamp_now();
    fs::create_directories(a.out);
    const ViTConfig vcfg = vit_config_from(a.rc);
    const TrainConfig tcfg = train_config_from(a.rc);

    ViTModel model = a.rc.get("init_weights").empty()
                         ? init_weights(vcfg, a.rc.get_int("init_seed"))
                         : load_model_for(a.rc, a.rc.get("init_weights"));

    const auto all = read_manifest(a.manifest);
    ManifestImageDataset train_set(entries_for_split(all, "train"), a.images,
                                   vcfg.image_size);
    ManifestImageDataset val_set(entries_for_split(all, "val"), a.images,
                                 vcfg.image_size);

    const TrainResult result = train(model, train_set, val_set, tcfg, a.out);

    write_file(a.out + "/history.csv", result.history.to_csv(tcfg.csv_timing));
    write_file(a.out + "/summary.txt", result.history.summary());
    save_weights(model, a.out + "/final.vitw");
    std::cout << result.history.summary();
    if (!result.best_checkpoint.empty())
        std::cout << "best checkpoint: " << result.best_checkpoint << "\n";

    write_run_manifest(a.out + "/manifest.txt", "train", a.rc,
                       {{"input.manifest", a.manifest},
                        {"input.images", a.images},
                        {"output.history", a.out + "/history.csv"},
                        {"output.final", a.out + "/final.vitw"},
                        {"output.best", result.best_checkpoint}},
                       started, timestamp_now());
    return 0;
}

struct EvalArgs {
    std::string model_path, manifest, images, split = "test", out;
    RunConfig rc;
};

int run_eval(EvalArgs& a) {
    const std::string started = timestamp_now();
    const ViTConfig vcfg = vit_config_from(a.rc);
    ViTModel model = load_model_for(a.rc, a.model_path);

    const auto all = read_manifest(a.manifest);
    ManifestImageDataset data(entries_for_split(all, a.split), a.images, vcfg.image_size);
    const EvalStats stats = evaluate(model, data, 16);

    std::vector<int> labels;
    for (size_t i = 0; i < data.size(); ++i) labels.push_back(data.label(i));
    const ConfusionMatrix cm = confusion_matrix(stats.predictions, labels);

    std::vector<ReportRow> measured = {
        {"ViT_" + vcfg.name, accuracy(cm), recall(cm, class_id("mel")), false}};
    const std::string text = report(cm, measured);
    std::cout << text;

    if (!a.out.empty()) {
        fs::create_directories(a.out);
        write_file(a.out + "/report.txt", text);
        write_file(a.out + "/report.csv", report_csv(cm));
        write_file(a.out + "/confusion.txt", grid_file(cm));
        write_run_manifest(a.out + "/manifest.txt", "eval", a.rc,
                           {{"input.model", a.model_path},
                            {"input.manifest", a.manifest},
                            {"input.split", a.split},
                            {"output.report", a.out + "/report.txt"}},
                           started, timestamp_now());
        std::cout << "wrote " << a.out << "/report.{txt,csv} and confusion.txt\n";
    }
    return 0;
}

struct PredictArgs {
    std::string model_path, out;
    std::vector<std::string> images;
    RunConfig rc;
};

int run_predict(PredictArgs& a) {
    const ViTConfig vcfg = vit_config_from(a.rc);
    ViTModel model = load_model_for(a.rc, a.model_path);
    if (a.images.empty()) throw DataError("predict: no input images given");

    std::vector<std::string> rows(a.images.size());
    parallel_for(a.images.size(), [&](size_t i) {
        NoGradGuard no_grad;
        const Image img = load_input_image(a.images[i], vcfg.image_size);
        ForwardResult fwd = forward(model, {img}, Mode::Eval);
        int best = 0;
        std::string row = fs::path(a.images[i]).stem().string();
        char buf[32];
        for (int j = 0; j < vcfg.num_classes; ++j) {
            std::snprintf(buf, sizeof(buf), ",%.6f", fwd.probs.at(0, j));
            row += buf;
            if (fwd.probs.at(0, j) > fwd.probs.at(0, best)) best = j;
        }
        rows[i] = row + "," + class_labels()[best];
    });

    std::string csv = "image_id";
    for (const auto& l : class_labels()) csv += "," + l;
    csv += ",predicted\n";
    for (const auto& r : rows) csv += r + "\n";
    if (a.out.empty()) {
        std::cout << csv;
    } else {
        write_file(a.out, csv);
        std::cout << "wrote " << a.out << "\n";
    }
    return 0;
}

struct AttentionArgs {
    std::string model_path, image, out;
    double alpha = 0.6;
    std::string mode = "rollout";  // rollout | layer
    int layer = -1, head = -1;
    RunConfig rc;
};

int run_attention(AttentionArgs& a) {
    const std::string started = timestamp_now();
    const ViTConfig vcfg = vit_config_from(a.rc);
    ViTModel model = load_model_for(a.rc, a.model_path);
    fs::create_directories(a.out);

    NoGradGuard no_grad;
    const Image img = load_input_image(a.image, vcfg.image_size);
    ForwardResult fwd = forward(model, {img}, Mode::Eval, nullptr, true);

    AttentionMap map;
    if (a.mode == "rollout")
        map = attention_rollout(fwd.attention[0]);
    else if (a.mode == "layer")
        map = layer_attention(fwd.attention[0], a.layer, a.head);
    else
        throw ConfigError("unknown attention mode: '" + a.mode + "'");

    const std::string stem = fs::path(a.image).stem().string();
    const std::string ppm = a.out + "/" + stem + ".attn.ppm";
    const std::string pgm = a.out + "/" + stem + ".attn.pgm";
    save_ppm(render_heatmap(map, img, a.alpha), ppm);
    save_pgm(upsample_map(map, vcfg.image_size, vcfg.image_size), vcfg.image_size,
             vcfg.image_size, pgm);
    std::cout << "wrote " << ppm << " and " << pgm << "\n";

    RunConfig rc = a.rc;
    write_run_manifest(a.out + "/manifest.txt", "attention", rc,
                       {{"input.model", a.model_path},
                        {"input.image", a.image},
                        {"output.overlay", ppm},
                        {"output.map", pgm}},
                       started, timestamp_now());
    return 0;
}

struct AblateArgs {
    std::string manifest, images, out;
    std::vector<std::string> configs;
};

int run_ablate(const AblateArgs& a) {
    const std::string started = timestamp_now();
    fs::create_directories(a.out);

    auto flag = [](bool on) { return on ? "yes" : "no"; };
    std::string table =
        "config            batch epochs neurons activation l2  dropout lr_sched "
        "plateau optimizer accuracy\n";

    const auto all = read_manifest(a.manifest);
    for (const auto& cfg_path : a.configs) {
        RunConfig rc = model_defaults();
        add_train_defaults(rc);
        rc.apply_file(cfg_path);
        const ViTConfig vcfg = vit_config_from(rc);
        const TrainConfig tcfg = train_config_from(rc);

        const std::string name = fs::path(cfg_path).stem().string();
        const std::string run_dir = a.out + "/" + name;
        fs::create_directories(run_dir);

        ViTModel model = rc.get("init_weights").empty()
                             ? init_weights(vcfg, rc.get_int("init_seed"))
                             : load_model_for(rc, rc.get("init_weights"));
        ManifestImageDataset train_set(entries_for_split(all, "train"), a.images,
                                       vcfg.image_size);
        ManifestImageDataset val_set(entries_for_split(all, "val"), a.images,
                                     vcfg.image_size);
        const TrainResult result = train(model, train_set, val_set, tcfg, run_dir);
        write_file(run_dir + "/history.csv", result.history.to_csv(tcfg.csv_timing));

        // evaluate the best checkpoint (final weights if none was saved)
        ViTModel best = result.best_checkpoint.empty()
                            ? std::move(model)
                            : load_weights(result.best_checkpoint, vcfg);
        ManifestImageDataset test_set(entries_for_split(all, "test"), a.images,
                                      vcfg.image_size);
        const EvalStats stats = evaluate(best, test_set, tcfg.batch_size);

        char row[256];
        std::snprintf(row, sizeof(row),
                      "%-17s %5d %6d %7d %-10s %-3s %-7s %-8s %-7s %-9s %s\n",
                      name.c_str(), tcfg.batch_size, tcfg.epochs, vcfg.head_neurons,
                      to_string(vcfg.head_activation).c_str(), flag(tcfg.l2_lambda > 0),
                      flag(vcfg.dropout_rate > 0),
                      flag(tcfg.lr_policy == LrPolicy::StepScheduler),
                      flag(tcfg.lr_policy == LrPolicy::Plateau),
                      to_string(tcfg.optimizer).c_str(),
                      format_percent(stats.acc).c_str());
        table += row;
        std::cout << row;
    }
    write_file(a.out + "/ablation.txt", table);

    RunConfig rc;
    std::string joined;
    for (const auto& c : a.configs) joined += (joined.empty() ? "" : ",") + c;
    rc.set_default("configs", joined);
    write_run_manifest(a.out + "/manifest.txt", "ablate", rc,
                       {{"input.manifest", a.manifest},
                        {"input.images", a.images},
                        {"output.table", a.out + "/ablation.txt"}},
                       started, timestamp_now());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"vitderm - vision-transformer skin-lesion classification pipeline"};
    app.require_subcommand(1);

    PrepareArgs prepare_args;
    CLI::App* prepare = app.add_subcommand("prepare",
                                           "cleanse metadata, split and balance classes");
    prepare->add_option("--metadata", prepare_args.metadata, "metadata CSV")->required();
    prepare->add_option("--images", prepare_args.images, "image directory (existence check)");
    prepare->add_option("--seed", prepare_args.seed, "split/augment seed");
    prepare->add_option("--out", prepare_args.out, "output directory")->required();
    prepare->add_option("--train-ratio", prepare_args.train_ratio, "train fraction");
    prepare->add_option("--val-ratio", prepare_args.val_ratio, "validation fraction");
    prepare->add_option("--test-ratio", prepare_args.test_ratio, "test fraction");
    prepare->add_option("--balance-target", prepare_args.balance_target,
                        "per-class target count (default: nv count)");
    prepare->add_flag("--no-augment", prepare_args.no_augment, "skip class balancing");

    StatsArgs stats_args;
    CLI::App* stats = app.add_subcommand("stats", "exploratory data report");
    stats->add_option("--metadata", stats_args.metadata, "metadata CSV")->required();
    stats->add_option("--out", stats_args.out, "write the report to a file");
    stats->add_flag("--raw", stats_args.raw, "report on uncleansed records");

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "fine-tune a model");
    train_args.rc = model_defaults();
    add_train_defaults(train_args.rc);
    train_cmd->add_option("--manifest", train_args.manifest, "split manifest")->required();
    train_cmd->add_option("--images", train_args.images, "image directory")->required();
    train_cmd->add_option("--out", train_args.out, "output directory")->required();
    ConfigBinder train_binder(train_args.rc, train_cmd);
    train_binder.bind_all_model_keys();
    train_binder.bind_all_train_keys();

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "confusion matrix and report");
    eval_args.rc = model_defaults();
    eval_args.rc.set_default("backbone_only", "false");
    eval_args.rc.set_default("init_seed", "0");
    eval_cmd->add_option("--model", eval_args.model_path, "weight container")->required();
    eval_cmd->add_option("--manifest", eval_args.manifest, "split manifest")->required();
    eval_cmd->add_option("--images", eval_args.images, "image directory")->required();
    eval_cmd->add_option("--split", eval_args.split, "train|val|test");
    eval_cmd->add_option("--out", eval_args.out, "output directory");
    ConfigBinder eval_binder(eval_args.rc, eval_cmd);
    eval_binder.bind_all_model_keys("--arch");

    PredictArgs predict_args;
    CLI::App* predict = app.add_subcommand("predict", "per-image class probabilities");
    predict_args.rc = model_defaults();
    predict_args.rc.set_default("backbone_only", "false");
    predict_args.rc.set_default("init_seed", "0");
    predict->add_option("--model", predict_args.model_path, "weight container")->required();
    predict->add_option("--out", predict_args.out, "CSV output path (default stdout)");
    predict->add_option("images", predict_args.images, "PPM images")->required();
    ConfigBinder predict_binder(predict_args.rc, predict);
    predict_binder.bind_all_model_keys("--arch");

    AttentionArgs attn_args;
    CLI::App* attn = app.add_subcommand("attention", "attention heatmap for one image");
    attn_args.rc = model_defaults();
    attn_args.rc.set_default("backbone_only", "false");
    attn_args.rc.set_default("init_seed", "0");
    attn->add_option("--model", attn_args.model_path, "weight container")->required();
    attn->add_option("--image", attn_args.image, "input PPM image")->required();
    attn->add_option("--out", attn_args.out, "output directory")->required();
    attn->add_option("--alpha", attn_args.alpha, "overlay opacity");
    attn->add_option("--mode", attn_args.mode, "rollout|layer");
    attn->add_option("--layer", attn_args.layer, "layer for mode=layer (-1 = last)");
    attn->add_option("--head", attn_args.head, "head for mode=layer (-1 = mean)");
    ConfigBinder attn_binder(attn_args.rc, attn);
    attn_binder.bind_all_model_keys("--arch");

    AblateArgs ablate_args;
    CLI::App* ablate = app.add_subcommand("ablate", "run a series of training configs");
    ablate->add_option("--manifest", ablate_args.manifest, "split manifest")->required();
    ablate->add_option("--images", ablate_args.images, "image directory")->required();
    ablate->add_option("--out", ablate_args.out, "output directory")->required();
    ablate->add_option("--configs", ablate_args.configs, "config files, run in order")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (prepare->parsed()) return run_prepare(prepare_args);
        if (stats->parsed()) return run_stats(stats_args);
        if (train_cmd->parsed()) {
            train_binder.finalize();
            return run_train(train_args);
        }
        if (eval_cmd->parsed()) {
            eval_binder.finalize();
            return run_eval(eval_args);
        }
        if (predict->parsed()) {
            predict_binder.finalize();
            return run_predict(predict_args);
        }
        if (attn->parsed()) {
            attn_binder.finalize();
            return run_attention(attn_args);
        }
        if (ablate->parsed()) return run_ablate(ablate_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
