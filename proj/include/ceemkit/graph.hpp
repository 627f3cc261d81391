#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ceemkit/layers.hpp"
#include "ceemkit/tensor.hpp"

namespace ceemkit {

enum class LayerKind {
  conv2d,
  dwsc,
  relu,
  maxpool,
  maxminpool,
  twomaxminpool,
  negative,
  gap,
  concat,
  dense_softmax
};

const char *layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string &name);

// One layer of the model DAG. Only the fields relevant to `kind` are used.
// An empty `inputs` list means the layer reads the network input.
struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::conv2d;
  std::vector<std::string> inputs;

  std::size_t filters = 0;      // conv2d out channels / dwsc out channels
  std::size_t kernel = 3;       // conv2d
  std::size_t pool_h = 3, pool_w = 3, stride = 2;  // pooling kinds
  double kappa = 255.0;         // negative
  std::size_t classes = 0;      // dense_softmax

  // filled in by shape inference
  std::size_t in_channels = 0;
};

enum class Scale { full, tiny };

struct SummaryRow {
  std::string id;
  std::string kind;
  std::vector<std::size_t> out_shape;  // [H,W,C] or [C]
  std::size_t params_paper = 0;
  std::size_t params_true = 0;
};

// Optimizer state persisted alongside parameters when requested.
struct TrainState {
  std::size_t epoch = 0;
  double lr = 0.0;
  std::size_t step = 0;
  // per layer id, per parameter tensor: (first moment, second moment)
  std::map<std::string, std::vector<std::pair<Tensor, Tensor>>> moments;
};

// Two-branch DAG executor. Layers are stored topologically sorted; forward
// caches activations, backward reverses the order and accumulates gradients
// where a tensor fans out. A graph instance is single-owner during a
// forward/backward pair.
class ModelGraph {
public:
  ModelGraph() = default;
  // Validates ids, acyclicity and single sink, sorts topologically, infers
  // channel counts from input_channels and allocates zeroed parameters.
  ModelGraph(std::vector<LayerSpec> layers, std::size_t input_channels,
             std::size_t class_count, std::string tap_point = "");

  void init_params(std::uint64_t seed);  // He-uniform weights, zero biases
  void zero_params();

  Tensor forward(const Tensor &batch);          // -> probabilities [B,K]
  // grad_logits is the gradient at the softmax input (e.g. (p - y)/B).
  void backward(const Tensor &grad_logits);

  std::size_t layer_count() const { return nodes_.size(); }
  const LayerSpec &layer(std::size_t i) const { return nodes_[i].spec; }
  const LayerSpec &layer(const std::string &id) const;

  std::vector<Tensor> &params(const std::string &id);
  const std::vector<Tensor> &params(const std::string &id) const;
  const std::vector<Tensor> &grads(const std::string &id) const;
  const Tensor &activation(const std::string &id) const;
  const Tensor &input_grad() const;

  // ids of layers that own parameters, in topological order
  std::vector<std::string> param_layer_ids() const;
  std::size_t total_params() const;

  std::vector<SummaryRow> summary(std::size_t input_h,
                                  std::size_t input_w) const;

  // base:branch channel widths at the concat layer
  std::pair<std::size_t, std::size_t> attention_ratio() const;

  std::size_t class_count() const { return class_count_; }
  std::size_t input_channels() const { return input_channels_; }
  const std::string &tap_point() const { return tap_point_; }

  // test hook: negate one parameter gradient after backward
  void corrupt_backward(bool on) { corrupt_ = on; }

private:
  struct Node {
    LayerSpec spec;
    std::vector<Tensor> params;
    std::vector<Tensor> grads;
    // forward caches
    Tensor output;
    Tensor pre_activation;
    DwscCache dwsc_cache;
    PoolCache pool_cache;
    PoolSpec effective_pool;  // kernel clamped to the incoming plane
    std::vector<std::size_t> input_shape;
  };

  void validate_and_sort(std::vector<LayerSpec> layers);
  void infer_channels();
  const Node &node(const std::string &id) const;
  Node &node_mut(const std::string &id);

  std::vector<Node> nodes_;  // topological order
  std::map<std::string, std::size_t> index_;
  std::size_t input_channels_ = 1;
  std::size_t class_count_ = 6;
  std::string tap_point_;
  Tensor batch_cache_;
  Tensor input_grad_;
  bool ran_forward_ = false;
  bool corrupt_ = false;
};

// Presets reconstructing the published architecture. `tiny` divides every
// channel count by 8 (same topology) for test speed.
ModelGraph preset_vgg_lite(Scale scale);
ModelGraph preset_vgg_lite_ceem(Scale scale);
ModelGraph preset_by_name(const std::string &name, Scale scale);

// Model config file (JSON): layers, kinds, hyperparameters, edges.
std::string graph_to_config_json(const ModelGraph &g);
ModelGraph graph_from_config_json(const std::string &json_text);
ModelGraph load_config(const std::string &path);

// Checkpoint: text header (format version + graph config) followed by raw
// little-endian float64 parameter blobs, each prefixed by its layer id and
// length. Written atomically via temp-file rename.
void save_checkpoint(const ModelGraph &g, const std::string &path,
                     const TrainState *state = nullptr);
ModelGraph load_checkpoint(const std::string &path,
                           std::optional<TrainState> *state = nullptr);

} // namespace ceemkit
