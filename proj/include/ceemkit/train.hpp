#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ceemkit/graph.hpp"
#include "ceemkit/tensor.hpp"

namespace ceemkit {

struct TrainConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 16;
  double lr0 = 0.75e-4;
  double lr_decay = 0.96;       // applied per epoch after the fixed phase
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::uint64_t seed = 0;
  double ratio_train = 0.70, ratio_test = 0.20, ratio_val = 0.10;
  // optional early stopping on validation loss; off by default
  std::size_t patience = 0;
};

struct EpochRow {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double secs = 0.0;
};

struct TrainLog {
  std::vector<EpochRow> rows;
  // CSV with header epoch,lr,train_loss,train_acc,val_loss,val_acc,secs.
  // include_secs=false zeroes the wall-time column for byte-reproducible logs.
  std::string to_csv(bool include_secs = true) const;
};

// probs are softmax outputs [B,K]; labels one-hot [B,K].
// Returns mean negative log-likelihood (p clamped to >= 1e-12) and the
// combined softmax+CCE gradient at the logits, (p - y)/B.
std::pair<double, Tensor> cce_loss(const Tensor &probs, const Tensor &labels);

struct AdamState {
  // mirrors ModelGraph parameter layout
  std::map<std::string, std::vector<std::pair<Tensor, Tensor>>> moments;
  std::size_t t = 0;

  static AdamState for_graph(const ModelGraph &g);
};

// Bias-corrected Adam update applied to every parameterized layer of g,
// reading gradients cached by the last backward().
void adam_step(ModelGraph &g, AdamState &state, const TrainConfig &cfg,
               double lr);

// lr0 for the first ceil(epochs/3) epochs, then *0.96 per epoch. e is 1-based.
double lr_at_epoch(std::size_t e, const TrainConfig &cfg);

// Per-class shuffled partition into train/test/val. Floor quotas, remainder
// by largest fractional part (ties toward the later bucket, matching the
// exact worked example). Disjoint and exhaustive.
struct SplitIndices {
  std::vector<std::size_t> train, test, val;
};
SplitIndices stratified_split(const std::vector<std::size_t> &labels,
                              double r_train, double r_test, double r_val,
                              std::uint64_t seed);

// Mini-batch dataset view used by fit/evaluate: images [N,H,W,C] plus labels.
struct Batch {
  Tensor images;
  Tensor onehot;
  std::vector<std::size_t> labels;
};

Batch gather(const Tensor &images, const std::vector<std::size_t> &labels,
             const std::vector<std::size_t> &idx, std::size_t class_count);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> predictions;
  Tensor scores;  // [N,K] probabilities
};

EvalResult evaluate(ModelGraph &g, const Tensor &images,
                    const std::vector<std::size_t> &labels,
                    const std::vector<std::size_t> &idx,
                    std::size_t batch_size);

// Epoch loop: seeded shuffle, batches of cfg.batch_size (partial last batch
// kept), forward / CCE / backward / Adam, then validation metrics.
// train_idx/val_idx index into images. Throws DivergedError on NaN loss.
TrainLog fit(ModelGraph &g, const Tensor &images,
             const std::vector<std::size_t> &labels,
             const std::vector<std::size_t> &train_idx,
             const std::vector<std::size_t> &val_idx, const TrainConfig &cfg,
             AdamState *state_out = nullptr,
             const std::function<void(const EpochRow &)> &on_epoch = {});

} // namespace ceemkit
