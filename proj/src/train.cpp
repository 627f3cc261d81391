#include "ceemkit/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace ceemkit {

std::string TrainLog::to_csv(bool include_secs) const {
  std::ostringstream out;
  out << "epoch,lr,train_loss,train_acc,val_loss,val_acc,secs\n";
  char buf[256];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%.12g,%.12g,%.3f\n",
                  r.epoch, r.lr, r.train_loss, r.train_acc, r.val_loss,
                  r.val_acc, include_secs ? r.secs : 0.0);
    out << buf;
  }
  return out.str();
}

std::pair<double, Tensor> cce_loss(const Tensor &probs, const Tensor &labels) {
  if (!probs.same_shape(labels))
    throw ShapeError("cce_loss: probs and labels shapes differ");
  const std::size_t B = probs.dim(0), K = probs.dim(1);
  double loss = 0.0;
  Tensor grad({B, K});
  const double invB = 1.0 / static_cast<double>(B);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) {
      const double y = labels.at(b, k);
      const double p = probs.at(b, k);
      if (y != 0.0)
        loss -= y * std::log(std::max(p, 1e-12));
      grad.at(b, k) = (p - y) * invB;
    }
  return {loss * invB, grad};
}

AdamState AdamState::for_graph(const ModelGraph &g) {
  AdamState s;
  for (const auto &id : g.param_layer_ids()) {
    const auto &params = g.params(id);
    auto &slots = s.moments[id];
    for (const auto &p : params)
      slots.emplace_back(Tensor(p.shape()), Tensor(p.shape()));
  }
  return s;
}

void adam_step(ModelGraph &g, AdamState &state, const TrainConfig &cfg,
               double lr) {
  ++state.t;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (const auto &id : g.param_layer_ids()) {
    auto &params = g.params(id);
    const auto &grads = g.grads(id);
    auto &slots = state.moments.at(id);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor &p = params[pi];
      const Tensor &grad = grads[pi];
      Tensor &m = slots[pi].first;
      Tensor &v = slots[pi].second;
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / b1t;
        const double vhat = v[i] / b2t;
        p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    }
  }
}

double lr_at_epoch(std::size_t e, const TrainConfig &cfg) {
  if (e < 1 || e > cfg.epochs)
    throw ValueError("epoch out of range for lr schedule");
  // 1/3 of the budget at the initial rate (8 of 25), never fewer than 1 epoch
  const std::size_t fixed = std::max<std::size_t>(1, cfg.epochs / 3);
  if (e <= fixed)
    return cfg.lr0;
  return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(e - fixed));
}

SplitIndices stratified_split(const std::vector<std::size_t> &labels,
                              double r_train, double r_test, double r_val,
                              std::uint64_t seed) {
  if (std::abs(r_train + r_test + r_val - 1.0) > 1e-9)
    throw ValueError("split ratios must sum to 1");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(i);

  SplitIndices out;
  for (auto &[cls, idx] : by_class) {
    if (idx.size() < 3)
      throw StratifyError("class " + std::to_string(cls) +
                          " has fewer than 3 samples");
    Rng rng(seed_for(seed, "split/" + std::to_string(cls)));
    rng.shuffle(idx);

    const double n = static_cast<double>(idx.size());
    const double quota[3] = {n * r_train, n * r_test, n * r_val};
    std::size_t count[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
      count[i] = static_cast<std::size_t>(quota[i]);
      assigned += count[i];
    }
    // largest fractional part takes the leftovers; ties go to the later
    // bucket so n=5 lands (3,1,1)
    std::size_t leftover = idx.size() - assigned;
    std::vector<int> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const double fa = quota[a] - std::floor(quota[a]);
      const double fb = quota[b] - std::floor(quota[b]);
      if (fa != fb)
        return fa > fb;
      return a > b;
    });
    for (std::size_t i = 0; i < leftover; ++i)
      ++count[order[i % 3]];

    std::size_t pos = 0;
    for (std::size_t i = 0; i < count[0]; ++i)
      out.train.push_back(idx[pos++]);
    for (std::size_t i = 0; i < count[1]; ++i)
      out.test.push_back(idx[pos++]);
    for (std::size_t i = 0; i < count[2]; ++i)
      out.val.push_back(idx[pos++]);
  }
  return out;
}

Batch gather(const Tensor &images, const std::vector<std::size_t> &labels,
             const std::vector<std::size_t> &idx, std::size_t class_count) {
  const std::size_t H = images.dim(1), W = images.dim(2), C = images.dim(3);
  Batch b;
  b.images = Tensor({idx.size(), H, W, C});
  b.onehot = Tensor({idx.size(), class_count});
  const std::size_t plane = H * W * C;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(images.data() + idx[i] * plane, plane,
                b.images.data() + i * plane);
    b.onehot.at(i, labels[idx[i]]) = 1.0;
    b.labels.push_back(labels[idx[i]]);
  }
  return b;
}

EvalResult evaluate(ModelGraph &g, const Tensor &images,
                    const std::vector<std::size_t> &labels,
                    const std::vector<std::size_t> &idx,
                    std::size_t batch_size) {
  EvalResult res;
  const std::size_t K = g.class_count();
  res.scores = Tensor({std::max<std::size_t>(idx.size(), 1), K});
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, idx.size());
    std::vector<std::size_t> chunk(idx.begin() + start, idx.begin() + end);
    Batch batch = gather(images, labels, chunk, K);
    Tensor probs = g.forward(batch.images);
    auto [loss, grad] = cce_loss(probs, batch.onehot);
    loss_sum += loss * static_cast<double>(chunk.size());
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      std::size_t arg = 0;
      for (std::size_t k = 1; k < K; ++k)
        if (probs.at(i, k) > probs.at(i, arg))
          arg = k;
      res.predictions.push_back(arg);
      if (arg == batch.labels[i])
        ++correct;
      for (std::size_t k = 0; k < K; ++k)
        res.scores.at(start + i, k) = probs.at(i, k);
    }
  }
  if (!idx.empty()) {
    res.loss = loss_sum / static_cast<double>(idx.size());
    res.accuracy =
        static_cast<double>(correct) / static_cast<double>(idx.size());
  }
  return res;
}

TrainLog fit(ModelGraph &g, const Tensor &images,
             const std::vector<std::size_t> &labels,
             const std::vector<std::size_t> &train_idx,
             const std::vector<std::size_t> &val_idx, const TrainConfig &cfg,
             AdamState *state_out,
             const std::function<void(const EpochRow &)> &on_epoch) {
  if (train_idx.empty())
    throw ValueError("fit: empty training set");
  AdamState state = AdamState::for_graph(g);
  TrainLog log;
  const std::size_t K = g.class_count();

  double best_val = 1e300;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(epoch, cfg);

    std::vector<std::size_t> order = train_idx;
    Rng rng(seed_for(cfg.seed, "epoch/" + std::to_string(epoch)));
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<std::size_t> chunk(order.begin() + start,
                                     order.begin() + end);
      Batch batch = gather(images, labels, chunk, K);
      Tensor probs = g.forward(batch.images);
      auto [loss, grad] = cce_loss(probs, batch.onehot);
      if (!std::isfinite(loss))
        throw DivergedError("training diverged at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batch_no));
      loss_sum += loss * static_cast<double>(chunk.size());
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        std::size_t arg = 0;
        for (std::size_t k = 1; k < K; ++k)
          if (probs.at(i, k) > probs.at(i, arg))
            arg = k;
        if (arg == batch.labels[i])
          ++correct;
      }
      g.backward(grad);
      adam_step(g, state, cfg, lr);
    }

    EvalResult val = evaluate(g, images, labels, val_idx, cfg.batch_size);

    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_sum / static_cast<double>(order.size());
    row.train_acc =
        static_cast<double>(correct) / static_cast<double>(order.size());
    row.val_loss = val.loss;
    row.val_acc = val.accuracy;
    row.secs = std::chrono::duration<double>(
                   std::chrono::steady_clock::now() - t0)
                   .count();
    log.rows.push_back(row);
    if (on_epoch)
      on_epoch(row);

    if (cfg.patience > 0 && !val_idx.empty()) {
      if (val.loss < best_val) {
        best_val = val.loss;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  if (state_out)
    *state_out = std::move(state);
  return log;
}

} // namespace ceemkit
