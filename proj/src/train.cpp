#include "vitderm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace vitderm {

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "sgd") return Optimizer::Sgd;
    if (s == "adam") return Optimizer::Adam;
    throw ConfigError("unknown optimizer: '" + s + "'");
}

LrPolicy lr_policy_from_string(const std::string& s) {
    if (s == "none") return LrPolicy::None;
    if (s == "plateau") return LrPolicy::Plateau;
    if (s == "scheduler") return LrPolicy::StepScheduler;
    throw ConfigError("unknown lr policy: '" + s + "'");
}

std::string to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

std::string to_string(LrPolicy p) {
    switch (p) {
        case LrPolicy::None: return "none";
        case LrPolicy::Plateau: return "plateau";
        case LrPolicy::StepScheduler: return "scheduler";
    }
    return "none";
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (l2_lambda < 0.0) throw ConfigError("l2_lambda must be nonnegative");
    if (plateau_patience < 1 || step_every < 1)
        throw ConfigError("plateau_patience and step_every must be >= 1");
    if (plateau_factor <= 0.0 || plateau_factor >= 1.0 || step_factor <= 0.0 ||
        step_factor >= 1.0)
        throw ConfigError("lr decay factors must lie in (0,1)");
    if (min_lr <= 0.0) throw ConfigError("min_lr must be positive");
    if (steps_per_epoch < 0) throw ConfigError("steps_per_epoch must be >= 0");
}

bool early_stopping_update(CallbackState& state, double val_loss, int patience) {
    if (!std::isfinite(val_loss)) throw NumericError("early stopping: non-finite loss");
    if (patience <= 0) return false;
    if (val_loss < state.best_val_loss) {
        state.best_val_loss = val_loss;
        state.epochs_since_loss_improve = 0;
    } else if (++state.epochs_since_loss_improve >= patience) {
        state.stop = true;
    }
    return state.stop;
}

double reduce_lr_on_plateau(CallbackState& state, double val_loss, int patience,
                            double factor, double min_lr) {
    if (!std::isfinite(val_loss)) throw NumericError("plateau: non-finite loss");
    if (val_loss < state.plateau_best) {
        state.plateau_best = val_loss;
        state.plateau_counter = 0;
    } else if (++state.plateau_counter >= patience) {
        state.current_lr = std::max(state.current_lr * factor, min_lr);
        state.plateau_counter = 0;
    }
    return state.current_lr;
}

bool checkpoint_update(CallbackState& state, double val_acc, const ViTModel& model,
                       const std::string& path) {
    if (val_acc <= state.best_val_acc) return false;
    save_weights(model, path);
    state.best_val_acc = val_acc;
    state.checkpoint_path = path;
    return true;
}

void sgd_step(Tensor& param, const std::vector<double>& grad, double lr,
              double momentum, std::vector<double>& velocity) {
    if (grad.size() != param.size())
        throw DimensionError("sgd_step: grad size " + std::to_string(grad.size()) +
                             " vs param size " + std::to_string(param.size()));
    if (velocity.size() != param.size()) velocity.assign(param.size(), 0.0);
    auto& w = param.data();
    for (size_t i = 0; i < w.size(); ++i) {
        velocity[i] = momentum * velocity[i] - lr * grad[i];
        w[i] += velocity[i];
    }
}

void adam_step(Tensor& param, const std::vector<double>& grad, double lr,
               double beta1, double beta2, double eps, AdamState& state) {
    if (grad.size() != param.size())
        throw DimensionError("adam_step: grad size " + std::to_string(grad.size()) +
                             " vs param size " + std::to_string(param.size()));
    if (state.m.size() != param.size()) {
        state.m.assign(param.size(), 0.0);
        state.v.assign(param.size(), 0.0);
        state.t = 0;
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    auto& w = param.data();
    for (size_t i = 0; i < w.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

std::string History::to_csv(bool include_timing) const {
    std::ostringstream os;
    os << "epoch,train_loss,train_acc,val_loss,val_acc,lr,seconds\n";
    char buf[256];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.6f,%.9g,%.6f,%.9g,%.3f\n", e.epoch,
                      e.train_loss, e.train_acc, e.val_loss, e.val_acc, e.lr,
                      include_timing ? e.seconds : 0.0);
        os << buf;
    }
    return os.str();
}

std::string History::summary() const {
    std::ostringstream os;
    os << "epochs_run=" << epochs.size() << "\n";
    if (!epochs.empty()) {
        const auto best_acc = std::max_element(
            epochs.begin(), epochs.end(),
            [](const EpochStats& a, const EpochStats& b) { return a.val_acc < b.val_acc; });
        const auto best_loss = std::min_element(
            epochs.begin(), epochs.end(),
            [](const EpochStats& a, const EpochStats& b) { return a.val_loss < b.val_loss; });
        char buf[128];
        std::snprintf(buf, sizeof(buf), "best_val_acc=%.6f\n", best_acc->val_acc);
        os << buf << "best_val_acc_epoch=" << best_acc->epoch << "\n";
        std::snprintf(buf, sizeof(buf), "best_val_loss=%.9g\n", best_loss->val_loss);
        os << buf << "best_val_loss_epoch=" << best_loss->epoch << "\n";
        std::snprintf(buf, sizeof(buf), "final_lr=%.9g\n", epochs.back().lr);
        os << buf;
        int warnings = 0;
        for (const auto& e : epochs) warnings += static_cast<int>(e.warnings.size());
        os << "warnings=" << warnings << "\n";
    }
    return os.str();
}

MemoryDataset::MemoryDataset(std::vector<Image> images, std::vector<int> labels)
    : images_(std::move(images)), labels_(std::move(labels)) {
    if (images_.size() != labels_.size())
        throw DataError("MemoryDataset: image/label count mismatch");
}

ManifestImageDataset::ManifestImageDataset(std::vector<ManifestEntry> entries,
                                           std::string image_dir, int image_size)
    : entries_(std::move(entries)), image_dir_(std::move(image_dir)),
      image_size_(image_size) {}

Image ManifestImageDataset::image(size_t i) const {
    const ManifestEntry& e = entries_[i];
    const std::string& id = e.synthetic ? e.source_image_id : e.image_id;
    Image img = load_ppm(image_dir_ + "/" + id + ".ppm");
    img = resize_bilinear(img, image_size_, image_size_);
    if (e.synthetic) img = transform_image(img, e.params);
    return img;
}

int ManifestImageDataset::label(size_t i) const { return class_id(entries_[i].dx); }

namespace {

int argmax_row(const Tensor& probs, int row) {
    const int c = probs.dim(1);
    int best = 0;
    for (int j = 1; j < c; ++j)
        if (probs.at(row, j) > probs.at(row, best)) best = j;
    return best;
}

Tensor onehot_batch(const std::vector<int>& labels, int num_classes) {
    Tensor t = Tensor::zeros({static_cast<int>(labels.size()), num_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        if (l < 0 || l >= num_classes)
            throw DataError("label " + std::to_string(l) + " out of range");
        t.data()[i * num_classes + l] = 1.0;
    }
    return t;
}

std::vector<std::string> l2_weight_names(const ViTModel& model, bool all_weights) {
    if (!all_weights) return {"head.dense1.w", "head.dense2.w"};
    std::vector<std::string> names;
    for (const auto& name : model.param_order) {
        const Tensor& t = model.p(name);
        if (t.requires_grad() && t.rank() == 2) names.push_back(name);
    }
    return names;
}

Tensor l2_penalty(ViTModel& model, double lambda, bool all_weights) {
    Tensor acc;
    for (const auto& name : l2_weight_names(model, all_weights)) {
        Tensor term = sumsq(model.p(name));
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale(acc, lambda);
}

} // namespace

EvalStats evaluate(ViTModel& model, const Dataset& data, int batch_size,
                   double l2_lambda, bool l2_all_weights) {
    if (data.size() == 0) throw DataError("evaluate: empty dataset");
    NoGradGuard no_grad;
    EvalStats stats;
    double loss_sum = 0.0;
    size_t correct = 0;
    const int classes = model.config.num_classes;
    for (size_t start = 0; start < data.size(); start += batch_size) {
        const size_t end = std::min(data.size(), start + batch_size);
        std::vector<Image> images;
        std::vector<int> labels;
        for (size_t i = start; i < end; ++i) {
            images.push_back(data.image(i));
            labels.push_back(data.label(i));
        }
        ForwardResult fwd = forward(model, images, Mode::Eval);
        const Tensor loss = softmax_cross_entropy(fwd.logits, onehot_batch(labels, classes));
        loss_sum += loss.item() * static_cast<double>(images.size());
        for (size_t i = 0; i < images.size(); ++i) {
            const int pred = argmax_row(fwd.probs, static_cast<int>(i));
            stats.predictions.push_back(pred);
            if (pred == labels[i]) ++correct;
        }
    }
    stats.loss = loss_sum / static_cast<double>(data.size());
    if (l2_lambda > 0.0)
        stats.loss += l2_penalty(model, l2_lambda, l2_all_weights).item();
    stats.acc = static_cast<double>(correct) / static_cast<double>(data.size());
    return stats;
}

TrainResult train(ViTModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    if (train_set.size() < 2) throw DataError("train: training set needs >= 2 samples");
    if (val_set.size() == 0) throw DataError("train: validation set is empty");

    if (cfg.freeze_backbone) {
        for (const auto& name : model.param_order)
            if (name.rfind("head.", 0) != 0) model.p(name).set_requires_grad(false);
    }
    std::vector<std::string> trainable;
    for (const auto& name : model.param_order)
        if (model.p(name).requires_grad()) trainable.push_back(name);

    std::seed_seq shuffle_seq{static_cast<uint32_t>(cfg.seed),
                              static_cast<uint32_t>(cfg.seed >> 32), 1u};
    std::seed_seq forward_seq{static_cast<uint32_t>(cfg.seed),
                              static_cast<uint32_t>(cfg.seed >> 32), 2u};
    std::mt19937_64 shuffle_rng(shuffle_seq);
    std::mt19937_64 forward_rng(forward_seq);

    std::map<std::string, std::vector<double>> velocity;
    std::map<std::string, AdamState> adam;

    CallbackState state;
    state.current_lr = cfg.learning_rate;
    const std::string ckpt_path = out_dir + "/best.vitw";
    const int classes = model.config.num_classes;

    History history;
    std::vector<size_t> indices(train_set.size());
    std::iota(indices.begin(), indices.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(indices.begin(), indices.end(), shuffle_rng);

        double loss_sum = 0.0;
        size_t seen = 0, correct = 0;
        int steps = 0;
        for (size_t start = 0; start < indices.size(); start += cfg.batch_size) {
            if (cfg.steps_per_epoch > 0 && steps >= cfg.steps_per_epoch) break;
            const size_t end = std::min(indices.size(), start + cfg.batch_size);
            if (end - start < 2) break;  // batch norm needs >= 2 samples
            std::vector<Image> images;
            std::vector<int> labels;
            for (size_t i = start; i < end; ++i) {
                images.push_back(train_set.image(indices[i]));
                labels.push_back(train_set.label(indices[i]));
            }
            model.zero_grads();
            ForwardResult fwd;
            Tensor loss;
            try {
                fwd = forward(model, images, Mode::Train, &forward_rng);
                loss = softmax_cross_entropy(fwd.logits, onehot_batch(labels, classes));
                if (cfg.l2_lambda > 0.0)
                    loss = add(loss, l2_penalty(model, cfg.l2_lambda, cfg.l2_all_weights));
                if (!std::isfinite(loss.item())) throw NumericError("non-finite loss");
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(steps + 1) + ": " + e.what());
            }
            backward(loss);
            for (const auto& name : trainable) {
                Tensor& p = model.p(name);
                if (!p.has_grad()) continue;
                if (cfg.optimizer == Optimizer::Sgd)
                    sgd_step(p, p.node()->grad, state.current_lr, cfg.momentum,
                             velocity[name]);
                else
                    adam_step(p, p.node()->grad, state.current_lr, cfg.beta1, cfg.beta2,
                              cfg.adam_eps, adam[name]);
            }
            loss_sum += loss.item() * static_cast<double>(images.size());
            for (size_t i = 0; i < images.size(); ++i)
                if (argmax_row(fwd.probs, static_cast<int>(i)) == labels[i]) ++correct;
            seen += images.size();
            ++steps;
        }
        if (seen == 0)
            throw DataError("train: no usable batches (check batch_size vs dataset size)");

        const EvalStats val = evaluate(model, val_set, cfg.batch_size, cfg.l2_lambda,
                                       cfg.l2_all_weights);
        EpochStats es;
        es.epoch = epoch;
        es.train_loss = loss_sum / static_cast<double>(seen);
        es.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
        es.val_loss = val.loss;
        es.val_acc = val.acc;
        es.lr = state.current_lr;
        es.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                         .count();

        // callbacks, in order: checkpoint, lr policy, early stopping
        try {
            checkpoint_update(state, val.acc, model, ckpt_path);
        } catch (const IoError& e) {
            es.warnings.push_back(std::string("checkpoint failed: ") + e.what());
        }
        if (cfg.lr_policy == LrPolicy::Plateau) {
            reduce_lr_on_plateau(state, val.loss, cfg.plateau_patience,
                                 cfg.plateau_factor, cfg.min_lr);
        } else if (cfg.lr_policy == LrPolicy::StepScheduler) {
            if (epoch % cfg.step_every == 0)
                state.current_lr = std::max(state.current_lr * cfg.step_factor, cfg.min_lr);
        }
        early_stopping_update(state, val.loss, cfg.early_stop_patience);

        history.epochs.push_back(std::move(es));
        if (state.stop) break;
    }
    return {std::move(history), state.checkpoint_path};
}

} // namespace vitderm
