#pragma once

#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vitderm/augment.hpp"
#include "vitderm/vit.hpp"
#include "vitderm/weights.hpp"

namespace vitderm {

enum class Optimizer { Sgd, Adam };
enum class LrPolicy { None, Plateau, StepScheduler };

Optimizer optimizer_from_string(const std::string& s);
LrPolicy lr_policy_from_string(const std::string& s);
std::string to_string(Optimizer o);
std::string to_string(LrPolicy p);

struct TrainConfig {
    Optimizer optimizer = Optimizer::Sgd;
    double learning_rate = 0.01;  // conventional default: 0.01 sgd, 0.001 adam
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-7;
    int batch_size = 16;
    int epochs = 20;
    double l2_lambda = 0.0;
    bool l2_all_weights = false;  // default: head dense weights only
    LrPolicy lr_policy = LrPolicy::Plateau;
    int plateau_patience = 3;
    double plateau_factor = 0.1;
    double min_lr = 1e-6;
    int step_every = 5;
    double step_factor = 0.5;
    int early_stop_patience = 5;  // 0 disables early stopping
    uint64_t seed = 0;
    bool freeze_backbone = false;
    int steps_per_epoch = 0;      // 0 = full pass over the training set
    bool csv_timing = false;      // wall seconds in the CSV break reproducibility

    void validate() const;
    static double default_lr(Optimizer o) { return o == Optimizer::Adam ? 0.001 : 0.01; }
};

// Shared state of the three training callbacks.
struct CallbackState {
    double best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_since_loss_improve = 0;
    double best_val_acc = -1.0;
    std::string checkpoint_path;
    double plateau_best = std::numeric_limits<double>::infinity();
    int plateau_counter = 0;
    double current_lr = 0.0;
    bool stop = false;
};

// Strict improvement resets the counter; `patience` consecutive
// non-improvements set the stop flag. patience <= 0 disables.
bool early_stopping_update(CallbackState& state, double val_loss, int patience);

// After `patience` consecutive non-improvements the learning rate shrinks to
// max(lr * factor, min_lr) and the counter resets. Returns the current lr.
double reduce_lr_on_plateau(CallbackState& state, double val_loss, int patience,
                            double factor, double min_lr);

// Saves the model iff val_acc strictly improves on the best seen; the file
// at `path` therefore always holds the max-val-accuracy weights so far.
bool checkpoint_update(CallbackState& state, double val_acc, const ViTModel& model,
                       const std::string& path);

// v <- momentum * v - lr * g ; w <- w + v
void sgd_step(Tensor& param, const std::vector<double>& grad, double lr,
              double momentum, std::vector<double>& velocity);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    int64_t t = 0;
};

void adam_step(Tensor& param, const std::vector<double>& grad, double lr,
               double beta1, double beta2, double eps, AdamState& state);

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
    std::vector<std::string> warnings;
};

struct History {
    std::vector<EpochStats> epochs;
    // epoch,train_loss,train_acc,val_loss,val_acc,lr,seconds; the seconds
    // column is written as 0.000 unless include_timing, keeping identical
    // seeded runs byte-equal.
    std::string to_csv(bool include_timing = false) const;
    std::string summary() const;
};

// Supplies one image+label per index; implementations may load lazily.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual size_t size() const = 0;
    virtual Image image(size_t i) const = 0;
    virtual int label(size_t i) const = 0;
};

class MemoryDataset : public Dataset {
public:
    MemoryDataset(std::vector<Image> images, std::vector<int> labels);
    size_t size() const override { return images_.size(); }
    Image image(size_t i) const override { return images_[i]; }
    int label(size_t i) const override { return labels_[i]; }

private:
    std::vector<Image> images_;
    std::vector<int> labels_;
};

// Backed by a split manifest: loads <image_id>.ppm from the image directory,
// resizes to the model input size, and applies the recorded augmentation
// parameters for synthetic entries.
class ManifestImageDataset : public Dataset {
public:
    ManifestImageDataset(std::vector<ManifestEntry> entries, std::string image_dir,
                         int image_size);
    size_t size() const override { return entries_.size(); }
    Image image(size_t i) const override;
    int label(size_t i) const override;
    const ManifestEntry& entry(size_t i) const { return entries_[i]; }

private:
    std::vector<ManifestEntry> entries_;
    std::string image_dir_;
    int image_size_;
};

struct TrainResult {
    History history;
    std::string best_checkpoint;  // empty if checkpointing never succeeded
};

// Fine-tuning loop: seeded shuffled mini-batches, cross-entropy loss with
// optional L2 penalty on the head dense weights, backward, optimizer step;
// per epoch a full eval-mode validation pass, then the callbacks in order
// (checkpoint, lr policy, early stopping). Non-finite loss aborts with the
// failing epoch/batch.
TrainResult train(ViTModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const std::string& out_dir);

// Eval-mode pass: mean loss (with the configured L2 penalty) and accuracy.
struct EvalStats {
    double loss = 0.0;
    double acc = 0.0;
    std::vector<int> predictions;
};

EvalStats evaluate(ViTModel& model, const Dataset& data, int batch_size,
                   double l2_lambda = 0.0, bool l2_all_weights = false);

} // namespace vitderm
