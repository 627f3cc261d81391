#include "ceemkit/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ceemkit {

const char *layer_kind_name(LayerKind kind) {
  switch (kind) {
  case LayerKind::conv2d: return "conv2d";
  case LayerKind::dwsc: return "dwsc";
  case LayerKind::relu: return "relu";
  case LayerKind::maxpool: return "maxpool";
  case LayerKind::maxminpool: return "maxminpool";
  case LayerKind::twomaxminpool: return "twomaxminpool";
  case LayerKind::negative: return "negative";
  case LayerKind::gap: return "gap";
  case LayerKind::concat: return "concat";
  case LayerKind::dense_softmax: return "dense_softmax";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string &name) {
  static const std::map<std::string, LayerKind> table = {
      {"conv2d", LayerKind::conv2d},
      {"dwsc", LayerKind::dwsc},
      {"relu", LayerKind::relu},
      {"maxpool", LayerKind::maxpool},
      {"maxminpool", LayerKind::maxminpool},
      {"twomaxminpool", LayerKind::twomaxminpool},
      {"negative", LayerKind::negative},
      {"gap", LayerKind::gap},
      {"concat", LayerKind::concat},
      {"dense_softmax", LayerKind::dense_softmax}};
  auto it = table.find(name);
  if (it == table.end())
    throw ValueError("unknown layer kind: " + name);
  return it->second;
}

static bool is_pool(LayerKind k) {
  return k == LayerKind::maxpool || k == LayerKind::maxminpool ||
         k == LayerKind::twomaxminpool;
}

static PoolKind pool_kind_of(LayerKind k) {
  if (k == LayerKind::maxpool) return PoolKind::max;
  if (k == LayerKind::maxminpool) return PoolKind::maxmin;
  return PoolKind::twomaxmin;
}

ModelGraph::ModelGraph(std::vector<LayerSpec> layers,
                       std::size_t input_channels, std::size_t class_count,
                       std::string tap_point)
    : input_channels_(input_channels), class_count_(class_count),
      tap_point_(std::move(tap_point)) {
  validate_and_sort(std::move(layers));
  infer_channels();
}

void ModelGraph::validate_and_sort(std::vector<LayerSpec> layers) {
  std::map<std::string, std::size_t> decl;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].id.empty())
      throw ValueError("layer id must not be empty");
    if (!decl.emplace(layers[i].id, i).second)
      throw ValueError("duplicate layer id: " + layers[i].id);
  }
  std::vector<std::size_t> consumers(layers.size(), 0);
  for (const auto &l : layers) {
    const std::size_t want = l.kind == LayerKind::concat ? 2 : 1;
    if (l.kind == LayerKind::concat && l.inputs.size() != 2)
      throw ValueError("concat layer " + l.id + " needs exactly 2 inputs");
    if (l.kind != LayerKind::concat && l.inputs.size() > want)
      throw ValueError("layer " + l.id + " has too many inputs");
    for (const auto &in : l.inputs) {
      auto it = decl.find(in);
      if (it == decl.end())
        throw ValueError("layer " + l.id + " references unknown input " + in);
      ++consumers[it->second];
    }
  }
  std::size_t sinks = 0;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (consumers[i] == 0)
      ++sinks;
  if (sinks != 1)
    throw ValueError("graph must have exactly one sink layer");

  // Kahn, preferring declaration order for a stable result.
  std::vector<std::size_t> indeg(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i)
    indeg[i] = layers[i].inputs.size();
  std::vector<bool> placed(layers.size(), false);
  nodes_.clear();
  index_.clear();
  while (nodes_.size() < layers.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (placed[i] || indeg[i] != 0)
        continue;
      bool ready = true;
      for (const auto &in : layers[i].inputs)
        if (!index_.count(in))
          ready = false;
      if (!ready)
        continue;
      placed[i] = true;
      progressed = true;
      index_[layers[i].id] = nodes_.size();
      Node n;
      n.spec = layers[i];
      nodes_.push_back(std::move(n));
    }
    // recompute readiness from placement only
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (placed[i])
        continue;
      std::size_t missing = 0;
      for (const auto &in : layers[i].inputs)
        if (!index_.count(in))
          ++missing;
      indeg[i] = missing;
    }
    if (!progressed)
      throw ValueError("graph contains a cycle");
  }
}

void ModelGraph::infer_channels() {
  // channel/width propagation; -1 rank means 2-D features
  std::map<std::string, std::pair<std::size_t, bool>> out;  // ch, is2d
  for (auto &n : nodes_) {
    auto &s = n.spec;
    auto in_of = [&](std::size_t which) -> std::pair<std::size_t, bool> {
      if (s.inputs.empty())
        return {input_channels_, false};
      return out.at(s.inputs[which]);
    };
    std::pair<std::size_t, bool> result{0, false};
    switch (s.kind) {
    case LayerKind::conv2d: {
      auto [ch, is2d] = in_of(0);
      if (is2d)
        throw ShapeError("conv2d layer " + s.id + " needs a 4-D input");
      s.in_channels = ch;
      n.params = {Tensor({s.kernel, s.kernel, ch, s.filters}),
                  Tensor({s.filters})};
      result = {s.filters, false};
      break;
    }
    case LayerKind::dwsc: {
      auto [ch, is2d] = in_of(0);
      if (is2d)
        throw ShapeError("dwsc layer " + s.id + " needs a 4-D input");
      s.in_channels = ch;
      n.params = {Tensor({3, 3, ch}), Tensor({ch}), Tensor({ch, s.filters}),
                  Tensor({s.filters})};
      result = {s.filters, false};
      break;
    }
    case LayerKind::relu:
    case LayerKind::negative: {
      auto in = in_of(0);
      s.in_channels = in.first;
      result = in;
      break;
    }
    case LayerKind::maxpool:
    case LayerKind::maxminpool:
    case LayerKind::twomaxminpool: {
      auto [ch, is2d] = in_of(0);
      if (is2d)
        throw ShapeError("pool layer " + s.id + " needs a 4-D input");
      s.in_channels = ch;
      result = {ch, false};
      break;
    }
    case LayerKind::gap: {
      auto [ch, is2d] = in_of(0);
      if (is2d)
        throw ShapeError("gap layer " + s.id + " needs a 4-D input");
      s.in_channels = ch;
      result = {ch, true};
      break;
    }
    case LayerKind::concat: {
      auto [ca, a2d] = in_of(0);
      auto [cb, b2d] = in_of(1);
      if (!a2d || !b2d)
        throw ShapeError("concat layer " + s.id + " needs 2-D inputs");
      s.in_channels = ca;  // base width; branch width is cb
      result = {ca + cb, true};
      break;
    }
    case LayerKind::dense_softmax: {
      auto [ch, is2d] = in_of(0);
      if (!is2d)
        throw ShapeError("dense_softmax layer " + s.id + " needs 2-D input");
      s.in_channels = ch;
      if (s.classes == 0)
        s.classes = class_count_;
      n.params = {Tensor({ch, s.classes}), Tensor({s.classes})};
      result = {s.classes, true};
      break;
    }
    }
    out[s.id] = result;
  }
  const auto &sink = nodes_.back().spec;
  if (sink.kind != LayerKind::dense_softmax)
    throw ValueError("graph sink must be a dense_softmax layer");
}

void ModelGraph::init_params(std::uint64_t seed) {
  for (auto &n : nodes_) {
    if (n.params.empty())
      continue;
    Rng rng(seed_for(seed, n.spec.id));
    auto fill = [&rng](Tensor &t, std::size_t fan_in) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = rng.uniform(-limit, limit);
    };
    const auto &s = n.spec;
    switch (s.kind) {
    case LayerKind::conv2d:
      fill(n.params[0], s.kernel * s.kernel * s.in_channels);
      std::fill(n.params[1].values().begin(), n.params[1].values().end(), 0.0);
      break;
    case LayerKind::dwsc:
      fill(n.params[0], 9);
      std::fill(n.params[1].values().begin(), n.params[1].values().end(), 0.0);
      fill(n.params[2], s.in_channels);
      std::fill(n.params[3].values().begin(), n.params[3].values().end(), 0.0);
      break;
    case LayerKind::dense_softmax:
      fill(n.params[0], s.in_channels);
      std::fill(n.params[1].values().begin(), n.params[1].values().end(), 0.0);
      break;
    default:
      break;
    }
  }
}

void ModelGraph::zero_params() {
  for (auto &n : nodes_)
    for (auto &p : n.params)
      std::fill(p.values().begin(), p.values().end(), 0.0);
}

const ModelGraph::Node &ModelGraph::node(const std::string &id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    throw ValueError("unknown layer id: " + id);
  return nodes_[it->second];
}

ModelGraph::Node &ModelGraph::node_mut(const std::string &id) {
  return const_cast<Node &>(node(id));
}

const LayerSpec &ModelGraph::layer(const std::string &id) const {
  return node(id).spec;
}

std::vector<Tensor> &ModelGraph::params(const std::string &id) {
  return node_mut(id).params;
}

const std::vector<Tensor> &ModelGraph::params(const std::string &id) const {
  return node(id).params;
}

const std::vector<Tensor> &ModelGraph::grads(const std::string &id) const {
  const Node &n = node(id);
  if (n.grads.size() != n.params.size())
    throw StateError("no gradients available; run backward first");
  return n.grads;
}

const Tensor &ModelGraph::activation(const std::string &id) const {
  if (!ran_forward_)
    throw StateError("no activations available; run forward first");
  return node(id).output;
}

const Tensor &ModelGraph::input_grad() const { return input_grad_; }

std::vector<std::string> ModelGraph::param_layer_ids() const {
  std::vector<std::string> ids;
  for (const auto &n : nodes_)
    if (!n.params.empty())
      ids.push_back(n.spec.id);
  return ids;
}

std::size_t ModelGraph::total_params() const {
  std::size_t n = 0;
  for (const auto &nd : nodes_)
    for (const auto &p : nd.params)
      n += p.size();
  return n;
}

// Pool kernels clamp to the incoming plane so tiny inputs degrade to a
// full-plane window instead of erroring out.
static PoolSpec clamped_pool(const LayerSpec &s, std::size_t H,
                             std::size_t W) {
  PoolSpec p;
  p.kind = pool_kind_of(s.kind);
  p.pool_h = std::min(s.pool_h, H);
  p.pool_w = std::min(s.pool_w, W);
  p.stride = s.stride;
  return p;
}

Tensor ModelGraph::forward(const Tensor &batch) {
  if (batch.rank() != 4)
    throw ShapeError("forward: batch must be [B,H,W,C]");
  if (batch.dim(3) != input_channels_)
    throw ShapeError("forward: batch channel count does not match graph");
  input_grad_ = Tensor();
  batch_cache_ = batch;

  auto input_of = [&](const Node &n, std::size_t which) -> const Tensor & {
    if (n.spec.inputs.empty())
      return batch;
    return nodes_[index_.at(n.spec.inputs[which])].output;
  };

  for (auto &n : nodes_) {
    const auto &s = n.spec;
    const Tensor &x = input_of(n, 0);
    switch (s.kind) {
    case LayerKind::conv2d: {
      Conv2DSpec cs{s.in_channels, s.filters, s.kernel, Activation::relu};
      n.output = conv2d_forward(x, cs, n.params[0], n.params[1],
                                &n.pre_activation);
      break;
    }
    case LayerKind::dwsc: {
      DWSConv2DSpec ds{s.in_channels, s.filters};
      n.output = dwsc_forward(x, ds, n.params[0], n.params[1], n.params[2],
                              n.params[3], &n.dwsc_cache);
      break;
    }
    case LayerKind::relu:
      n.output = relu_forward(x);
      break;
    case LayerKind::maxpool:
    case LayerKind::maxminpool:
    case LayerKind::twomaxminpool:
      n.effective_pool = clamped_pool(s, x.dim(1), x.dim(2));
      n.input_shape = x.shape();
      n.output = pool_forward(x, n.effective_pool, &n.pool_cache);
      break;
    case LayerKind::negative:
      n.output = negative_forward(x, s.kappa);
      break;
    case LayerKind::gap:
      n.input_shape = x.shape();
      n.output = gap_forward(x);
      break;
    case LayerKind::concat:
      n.output = concat_channels(x, input_of(n, 1));
      break;
    case LayerKind::dense_softmax: {
      DenseSoftmaxSpec ds{s.in_channels, s.classes};
      n.output = dense_softmax_forward(x, ds, n.params[0], n.params[1],
                                       &n.pre_activation);
      break;
    }
    }
  }
  ran_forward_ = true;
  return nodes_.back().output;
}

void ModelGraph::backward(const Tensor &grad_logits) {
  if (!ran_forward_)
    throw StateError("backward called before forward");
  if (!grad_logits.same_shape(nodes_.back().output))
    throw ShapeError("backward: gradient shape does not match output");

  // accumulated gradient flowing into each node's output; index -1 == input
  std::vector<Tensor> acc(nodes_.size());
  Tensor input_acc;
  auto add_into = [](Tensor &slot, const Tensor &g) {
    if (slot.size() == 0)
      slot = g;
    else
      slot = elementwise(slot, g, BinOp::add);
  };
  auto route = [&](const Node &n, std::size_t which, const Tensor &g) {
    if (n.spec.inputs.empty())
      add_into(input_acc, g);
    else
      add_into(acc[index_.at(n.spec.inputs[which])], g);
  };

  acc[nodes_.size() - 1] = grad_logits;

  for (std::size_t ri = nodes_.size(); ri-- > 0;) {
    Node &n = nodes_[ri];
    const auto &s = n.spec;
    if (acc[ri].size() == 0)
      continue;
    const Tensor &g = acc[ri];
    // producer activation (or the batch, which backward never needs to read
    // for pool/gap/negative paths; conv/dwsc need it and cache shapes)
    const Tensor *x = nullptr;
    if (!s.inputs.empty())
      x = &nodes_[index_.at(s.inputs[0])].output;

    switch (s.kind) {
    case LayerKind::conv2d: {
      Conv2DSpec cs{s.in_channels, s.filters, s.kernel, Activation::relu};
      Tensor gx, gw, gb;
      conv2d_backward(x ? *x : batch_cache_, cs, n.params[0],
                      n.pre_activation, g, gx, gw, gb);
      n.grads = {std::move(gw), std::move(gb)};
      route(n, 0, gx);
      break;
    }
    case LayerKind::dwsc: {
      DWSConv2DSpec ds{s.in_channels, s.filters};
      Tensor gx, gdw, gdb, gpw, gpb;
      dwsc_backward(x ? *x : batch_cache_, ds, n.params[0], n.params[2],
                    n.dwsc_cache, g, gx, gdw, gdb, gpw, gpb);
      n.grads = {std::move(gdw), std::move(gdb), std::move(gpw),
                 std::move(gpb)};
      route(n, 0, gx);
      break;
    }
    case LayerKind::relu:
      route(n, 0, relu_backward(g, x ? *x : batch_cache_));
      break;
    case LayerKind::maxpool:
    case LayerKind::maxminpool:
    case LayerKind::twomaxminpool:
      route(n, 0, pool_backward(g, n.effective_pool, n.pool_cache,
                                n.input_shape));
      break;
    case LayerKind::negative:
      route(n, 0, negative_backward(g));
      break;
    case LayerKind::gap:
      route(n, 0, gap_backward(g, n.input_shape[1], n.input_shape[2]));
      break;
    case LayerKind::concat: {
      const std::size_t ca = nodes_[index_.at(s.inputs[0])].output.dim(1);
      const std::size_t cb = nodes_[index_.at(s.inputs[1])].output.dim(1);
      Tensor ga, gb;
      concat_backward(g, ca, cb, ga, gb);
      route(n, 0, ga);
      route(n, 1, gb);
      break;
    }
    case LayerKind::dense_softmax: {
      Tensor gx, gw, gb;
      dense_backward(*x, n.params[0], g, gx, gw, gb);
      n.grads = {std::move(gw), std::move(gb)};
      route(n, 0, gx);
      break;
    }
    }
  }
  input_grad_ = std::move(input_acc);

  if (corrupt_) {
    for (auto &n : nodes_)
      for (auto &g : n.grads)
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] = -g[i] + 1.0;
  }
}

std::vector<SummaryRow> ModelGraph::summary(std::size_t input_h,
                                            std::size_t input_w) const {
  std::map<std::string, std::vector<std::size_t>> shapes;  // [H,W,C] or [C]
  std::vector<SummaryRow> rows;
  for (const auto &n : nodes_) {
    const auto &s = n.spec;
    std::vector<std::size_t> in_shape =
        s.inputs.empty() ? std::vector<std::size_t>{input_h, input_w,
                                                    input_channels_}
                         : shapes.at(s.inputs[0]);
    SummaryRow row;
    row.id = s.id;
    row.kind = layer_kind_name(s.kind);
    switch (s.kind) {
    case LayerKind::conv2d:
      row.out_shape = {in_shape[0], in_shape[1], s.filters};
      row.params_paper =
          conv2d_param_count(s.in_channels, s.filters, s.kernel);
      row.params_true = row.params_paper;
      break;
    case LayerKind::dwsc:
      row.out_shape = {in_shape[0], in_shape[1], s.filters};
      row.params_paper = dwsc_param_count_paper(s.in_channels);
      row.params_true = dwsc_param_count_true(s.in_channels, s.filters);
      break;
    case LayerKind::maxpool:
    case LayerKind::maxminpool:
    case LayerKind::twomaxminpool: {
      PoolSpec p = clamped_pool(s, in_shape[0], in_shape[1]);
      row.out_shape = {(in_shape[0] - p.pool_h) / p.stride + 1,
                       (in_shape[1] - p.pool_w) / p.stride + 1, in_shape[2]};
      break;
    }
    case LayerKind::relu:
    case LayerKind::negative:
      row.out_shape = in_shape;
      break;
    case LayerKind::gap:
      row.out_shape = {in_shape[2]};
      break;
    case LayerKind::concat:
      row.out_shape = {shapes.at(s.inputs[0])[0] + shapes.at(s.inputs[1])[0]};
      break;
    case LayerKind::dense_softmax:
      row.out_shape = {s.classes};
      row.params_paper = s.in_channels * s.classes + s.classes;
      row.params_true = row.params_paper;
      break;
    }
    shapes[s.id] = row.out_shape;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::pair<std::size_t, std::size_t> ModelGraph::attention_ratio() const {
  for (const auto &n : nodes_) {
    if (n.spec.kind != LayerKind::concat)
      continue;
    auto width = [&](const std::string &id) {
      // GAP width equals its channel count
      return node(id).spec.in_channels;
    };
    return {width(n.spec.inputs[0]), width(n.spec.inputs[1])};
  }
  throw ValueError("graph has no concat layer");
}

// -- presets ------------------------------------------------------------------

static LayerSpec conv(std::string id, std::size_t filters, std::size_t kernel,
                      std::vector<std::string> inputs) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = LayerKind::conv2d;
  s.filters = filters;
  s.kernel = kernel;
  s.inputs = std::move(inputs);
  return s;
}

static LayerSpec dwsc(std::string id, std::size_t filters,
                      std::vector<std::string> inputs) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = LayerKind::dwsc;
  s.filters = filters;
  s.inputs = std::move(inputs);
  return s;
}

static LayerSpec pool(std::string id, LayerKind kind, std::size_t size,
                      std::size_t stride, std::vector<std::string> inputs) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = kind;
  s.pool_h = s.pool_w = size;
  s.stride = stride;
  s.inputs = std::move(inputs);
  return s;
}

static LayerSpec simple(std::string id, LayerKind kind,
                        std::vector<std::string> inputs) {
  LayerSpec s;
  s.id = std::move(id);
  s.kind = kind;
  s.inputs = std::move(inputs);
  return s;
}

static std::vector<LayerSpec> base_layers(std::size_t div) {
  std::vector<LayerSpec> L;
  L.push_back(conv("b1_conv1", 32 / div, 3, {}));
  L.push_back(dwsc("b1_dwsc", 32 / div, {"b1_conv1"}));
  L.push_back(pool("b1_pool", LayerKind::maxpool, 2, 2, {"b1_dwsc"}));
  L.push_back(conv("b2_conv1", 64 / div, 3, {"b1_pool"}));
  L.push_back(dwsc("b2_dwsc", 64 / div, {"b2_conv1"}));
  L.push_back(pool("b2_pool", LayerKind::maxpool, 2, 2, {"b2_dwsc"}));
  L.push_back(conv("b3_conv1", 128 / div, 3, {"b2_pool"}));
  L.push_back(conv("b3_conv2", 128 / div, 3, {"b3_conv1"}));
  L.push_back(dwsc("b3_dwsc", 128 / div, {"b3_conv2"}));
  L.push_back(pool("b3_pool", LayerKind::maxpool, 2, 2, {"b3_dwsc"}));
  L.push_back(conv("b4_conv1", 256 / div, 3, {"b3_pool"}));
  L.push_back(conv("b4_conv2", 512 / div, 3, {"b4_conv1"}));
  L.push_back(dwsc("b4_dwsc", 512 / div, {"b4_conv2"}));
  L.push_back(pool("b4_pool", LayerKind::maxpool, 2, 2, {"b4_dwsc"}));
  L.push_back(simple("base_gap", LayerKind::gap, {"b4_pool"}));
  return L;
}

ModelGraph preset_vgg_lite(Scale scale) {
  const std::size_t div = scale == Scale::full ? 1 : 8;
  auto L = base_layers(div);
  LayerSpec head;
  head.id = "head";
  head.kind = LayerKind::dense_softmax;
  head.classes = 6;
  head.inputs = {"base_gap"};
  L.push_back(head);
  return ModelGraph(std::move(L), 1, 6);
}

ModelGraph preset_vgg_lite_ceem(Scale scale) {
  const std::size_t div = scale == Scale::full ? 1 : 8;
  auto L = base_layers(div);
  L.push_back(simple("ceem_neg", LayerKind::negative, {"b2_pool"}));
  L.push_back(
      pool("ceem_pool", LayerKind::twomaxminpool, 3, 2, {"ceem_neg"}));
  L.push_back(conv("ceem_conv1", 32 / div, 3, {"ceem_pool"}));
  L.push_back(dwsc("ceem_dwsc", 32 / div, {"ceem_conv1"}));
  L.push_back(conv("ceem_conv2", 64 / div, 5, {"ceem_dwsc"}));
  L.push_back(conv("ceem_conv3", 224 / div, 3, {"ceem_conv2"}));
  L.push_back(simple("ceem_gap", LayerKind::gap, {"ceem_conv3"}));
  L.push_back(simple("fuse", LayerKind::concat, {"base_gap", "ceem_gap"}));
  LayerSpec head;
  head.id = "head";
  head.kind = LayerKind::dense_softmax;
  head.classes = 6;
  head.inputs = {"fuse"};
  L.push_back(head);
  return ModelGraph(std::move(L), 1, 6, "b2_pool");
}

ModelGraph preset_by_name(const std::string &name, Scale scale) {
  if (name == "vgg_lite")
    return preset_vgg_lite(scale);
  if (name == "vgg_lite_ceem")
    return preset_vgg_lite_ceem(scale);
  throw ValueError("unknown preset: " + name);
}

// -- config JSON ----------------------------------------------------------------

using nlohmann::json;

static json layer_to_json(const LayerSpec &s) {
  json j;
  j["id"] = s.id;
  j["kind"] = layer_kind_name(s.kind);
  j["inputs"] = s.inputs;
  switch (s.kind) {
  case LayerKind::conv2d:
    j["filters"] = s.filters;
    j["kernel"] = s.kernel;
    break;
  case LayerKind::dwsc:
    j["filters"] = s.filters;
    break;
  case LayerKind::maxpool:
  case LayerKind::maxminpool:
  case LayerKind::twomaxminpool:
    j["pool"] = {s.pool_h, s.pool_w};
    j["stride"] = s.stride;
    break;
  case LayerKind::negative:
    j["kappa"] = s.kappa;
    break;
  case LayerKind::dense_softmax:
    j["classes"] = s.classes;
    break;
  default:
    break;
  }
  return j;
}

static LayerSpec layer_from_json(const json &j) {
  LayerSpec s;
  s.id = j.at("id").get<std::string>();
  s.kind = layer_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("inputs"))
    s.inputs = j.at("inputs").get<std::vector<std::string>>();
  if (j.contains("filters"))
    s.filters = j.at("filters").get<std::size_t>();
  if (j.contains("kernel"))
    s.kernel = j.at("kernel").get<std::size_t>();
  if (j.contains("pool")) {
    s.pool_h = j.at("pool")[0].get<std::size_t>();
    s.pool_w = j.at("pool")[1].get<std::size_t>();
  }
  if (j.contains("stride"))
    s.stride = j.at("stride").get<std::size_t>();
  if (j.contains("kappa"))
    s.kappa = j.at("kappa").get<double>();
  if (j.contains("classes"))
    s.classes = j.at("classes").get<std::size_t>();
  return s;
}

static json graph_config_json(const ModelGraph &g) {
  json j;
  j["format_version"] = 1;
  j["input_channels"] = g.input_channels();
  j["class_count"] = g.class_count();
  j["tap_point"] = g.tap_point();
  json layers = json::array();
  for (std::size_t i = 0; i < g.layer_count(); ++i)
    layers.push_back(layer_to_json(g.layer(i)));
  j["layers"] = layers;
  return j;
}

static ModelGraph graph_from_json(const json &j) {
  std::vector<LayerSpec> layers;
  for (const auto &lj : j.at("layers"))
    layers.push_back(layer_from_json(lj));
  return ModelGraph(std::move(layers),
                    j.at("input_channels").get<std::size_t>(),
                    j.at("class_count").get<std::size_t>(),
                    j.value("tap_point", std::string()));
}

std::string graph_to_config_json(const ModelGraph &g) {
  return graph_config_json(g).dump(2) + "\n";
}

ModelGraph graph_from_config_json(const std::string &json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception &e) {
    throw ValueError(std::string("bad model config JSON: ") + e.what());
  }
  return graph_from_json(j);
}

ModelGraph load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open model config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return graph_from_config_json(ss.str());
}

// -- checkpoint -----------------------------------------------------------------

static constexpr const char *kCkptMagic = "CEEMKIT-CKPT 1";

static void write_blob(std::ostream &out, const std::string &section,
                       const std::string &id, std::size_t idx,
                       const Tensor &t) {
  out << "BLOB " << section << ' ' << id << ' ' << idx << ' ' << t.size()
      << '\n';
  // doubles written as little-endian raw bits
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, t.data() + i, 8);
    unsigned char buf[8];
    for (int b = 0; b < 8; ++b)
      buf[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char *>(buf), 8);
  }
}

static void read_blob_data(std::istream &in, Tensor &t, std::size_t count) {
  if (t.size() != count)
    throw CheckpointMalformedError(
        "parameter blob length does not match layer spec");
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char *>(buf), 8))
      throw CheckpointMalformedError("truncated parameter blob");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    double v;
    std::memcpy(&v, &bits, 8);
    t[i] = v;
  }
}

void save_checkpoint(const ModelGraph &g, const std::string &path,
                     const TrainState *state) {
  json header = graph_config_json(g);
  if (state) {
    header["train_state"] = {
        {"epoch", state->epoch}, {"lr", state->lr}, {"step", state->step}};
  }
  const std::string header_text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out)
      throw IoError("cannot write checkpoint: " + path);
    out << kCkptMagic << '\n';
    out << "CONFIG " << header_text.size() << '\n' << header_text << '\n';
    for (std::size_t i = 0; i < g.layer_count(); ++i) {
      const auto &id = g.layer(i).id;
      const auto &params = g.params(id);
      for (std::size_t pi = 0; pi < params.size(); ++pi)
        write_blob(out, "param", id, pi, params[pi]);
      if (state) {
        auto it = state->moments.find(id);
        if (it != state->moments.end())
          for (std::size_t pi = 0; pi < it->second.size(); ++pi) {
            write_blob(out, "adam_m", id, pi, it->second[pi].first);
            write_blob(out, "adam_v", id, pi, it->second[pi].second);
          }
      }
    }
    out << "END\n";
    if (!out)
      throw IoError("write failure on checkpoint: " + path);
  }
  std::remove(path.c_str());
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename checkpoint into place: " + path);
}

ModelGraph load_checkpoint(const std::string &path,
                           std::optional<TrainState> *state) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw CheckpointMalformedError("empty checkpoint file");
  if (line != kCkptMagic)
    throw CheckpointVersionError("unsupported checkpoint header: " + line);
  if (!std::getline(in, line) || line.rfind("CONFIG ", 0) != 0)
    throw CheckpointMalformedError("missing CONFIG section");
  std::size_t config_len = 0;
  try {
    config_len = std::stoull(line.substr(7));
  } catch (...) {
    throw CheckpointMalformedError("bad CONFIG length");
  }
  std::string header_text(config_len, '\0');
  if (!in.read(header_text.data(), static_cast<std::streamsize>(config_len)))
    throw CheckpointMalformedError("truncated CONFIG section");
  in.get();  // trailing newline

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception &e) {
    throw CheckpointMalformedError(std::string("bad config JSON: ") +
                                   e.what());
  }
  if (header.value("format_version", 0) != 1)
    throw CheckpointVersionError("unsupported checkpoint format_version");

  ModelGraph g;
  try {
    g = graph_from_json(header);
  } catch (const ValueError &e) {
    // an unknown layer kind tag is a format/version problem, not corruption
    if (std::string(e.what()).rfind("unknown layer kind", 0) == 0)
      throw CheckpointVersionError(e.what());
    throw;
  }

  std::optional<TrainState> ts;
  if (header.contains("train_state")) {
    ts.emplace();
    ts->epoch = header["train_state"].at("epoch").get<std::size_t>();
    ts->lr = header["train_state"].at("lr").get<double>();
    ts->step = header["train_state"].at("step").get<std::size_t>();
  }

  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line == "END") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag, section, id;
    std::size_t idx = 0, count = 0;
    if (!(ls >> tag >> section >> id >> idx >> count) || tag != "BLOB")
      throw CheckpointMalformedError("bad blob header line: " + line);
    if (section == "param") {
      auto &params = g.params(id);
      if (idx >= params.size())
        throw CheckpointMalformedError("blob index out of range for " + id);
      read_blob_data(in, params[idx], count);
    } else if (section == "adam_m" || section == "adam_v") {
      if (!ts)
        ts.emplace();
      auto &slots = ts->moments[id];
      const auto &params = g.params(id);
      if (idx >= params.size())
        throw CheckpointMalformedError("moment index out of range for " + id);
      if (slots.size() <= idx)
        slots.resize(params.size(),
                     {Tensor({1}), Tensor({1})});
      // moments mirror parameter shapes
      Tensor t(params[idx].shape());
      read_blob_data(in, t, count);
      if (section == "adam_m")
        slots[idx].first = std::move(t);
      else
        slots[idx].second = std::move(t);
    } else {
      throw CheckpointMalformedError("unknown blob section: " + section);
    }
  }
  if (!saw_end)
    throw CheckpointMalformedError("checkpoint missing END marker");
  if (state)
    *state = std::move(ts);
  return g;
}

} // namespace ceemkit
