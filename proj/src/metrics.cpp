#include "ceemkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace ceemkit {

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t k = 0; k < classes; ++k)
    t += at(k, k);
  return t;
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream out;
  out << "true\\pred";
  for (std::size_t k = 0; k < classes; ++k)
    out << ',' << (k < class_names.size() ? class_names[k] : std::to_string(k));
  out << '\n';
  for (std::size_t i = 0; i < classes; ++i) {
    out << (i < class_names.size() ? class_names[i] : std::to_string(i));
    for (std::size_t j = 0; j < classes; ++j)
      out << ',' << at(i, j);
    out << '\n';
  }
  return out.str();
}

ConfusionMatrix confusion(const std::vector<std::size_t> &truth,
                          const std::vector<std::size_t> &pred,
                          std::size_t classes,
                          std::vector<std::string> class_names) {
  if (truth.size() != pred.size())
    throw ValueError("confusion: label vectors differ in length");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(classes * classes, 0);
  cm.class_names = std::move(class_names);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes || pred[i] >= classes)
      throw ValueError("confusion: label out of range");
    ++cm.at(truth[i], pred[i]);
  }
  return cm;
}

ClassReport report(const ConfusionMatrix &cm) {
  ClassReport rep;
  rep.class_names = cm.class_names;
  const std::size_t K = cm.classes;
  const double N = static_cast<double>(cm.total());
  double sp = 0, sr = 0, sf = 0, wp = 0, wr = 0, wf = 0;
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t colsum = 0, rowsum = 0;
    for (std::size_t i = 0; i < K; ++i) {
      colsum += cm.at(i, k);
      rowsum += cm.at(k, i);
    }
    ClassMetrics m;
    m.support = rowsum;
    const double tp = static_cast<double>(cm.at(k, k));
    if (colsum == 0 || rowsum == 0)
      m.zero_division = true;
    m.precision = colsum ? tp / static_cast<double>(colsum) : 0.0;
    m.recall = rowsum ? tp / static_cast<double>(rowsum) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    sp += m.precision;
    sr += m.recall;
    sf += m.f1;
    wp += m.precision * static_cast<double>(rowsum);
    wr += m.recall * static_cast<double>(rowsum);
    wf += m.f1 * static_cast<double>(rowsum);
    rep.per_class.push_back(m);
  }
  rep.accuracy = N > 0 ? static_cast<double>(cm.trace()) / N : 0.0;
  rep.macro_precision = sp / static_cast<double>(K);
  rep.macro_recall = sr / static_cast<double>(K);
  rep.macro_f1 = sf / static_cast<double>(K);
  if (N > 0) {
    rep.weighted_precision = wp / N;
    rep.weighted_recall = wr / N;
    rep.weighted_f1 = wf / N;
  }
  return rep;
}

std::string ClassReport::to_json() const {
  nlohmann::json j;
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    const auto &m = per_class[k];
    nlohmann::json c;
    c["class"] =
        k < class_names.size() ? class_names[k] : std::to_string(k);
    c["precision"] = m.precision;
    c["recall"] = m.recall;
    c["f1"] = m.f1;
    c["support"] = m.support;
    c["zero_division"] = m.zero_division;
    classes.push_back(c);
  }
  j["classes"] = classes;
  j["accuracy"] = accuracy;
  j["macro_avg"] = {{"precision", macro_precision},
                    {"recall", macro_recall},
                    {"f1", macro_f1}};
  j["weighted_avg"] = {{"precision", weighted_precision},
                       {"recall", weighted_recall},
                       {"f1", weighted_f1}};
  return j.dump(2) + "\n";
}

std::vector<RocCurve> roc_auc(const std::vector<std::size_t> &truth,
                              const Tensor &scores) {
  const std::size_t N = truth.size(), K = scores.dim(1);
  if (scores.dim(0) != N)
    throw ValueError("roc_auc: score rows do not match labels");
  std::vector<RocCurve> curves;
  for (std::size_t cls = 0; cls < K; ++cls) {
    RocCurve c;
    c.cls = cls;
    std::size_t P = 0;
    for (std::size_t i = 0; i < N; ++i)
      if (truth[i] == cls)
        ++P;
    const std::size_t Neg = N - P;
    if (P == 0 || Neg == 0) {
      c.defined = false;
      curves.push_back(std::move(c));
      continue;
    }
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores.at(a, cls) > scores.at(b, cls);
    });
    c.thresholds.push_back(std::numeric_limits<double>::infinity());
    c.fpr.push_back(0.0);
    c.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < N) {
      const double thr = scores.at(order[i], cls);
      // consume all samples tied at this threshold together
      while (i < N && scores.at(order[i], cls) == thr) {
        if (truth[order[i]] == cls)
          ++tp;
        else
          ++fp;
        ++i;
      }
      c.thresholds.push_back(thr);
      c.tpr.push_back(static_cast<double>(tp) / static_cast<double>(P));
      c.fpr.push_back(static_cast<double>(fp) / static_cast<double>(Neg));
    }
    double auc = 0.0;
    for (std::size_t p = 1; p < c.fpr.size(); ++p)
      auc += (c.fpr[p] - c.fpr[p - 1]) * (c.tpr[p] + c.tpr[p - 1]) * 0.5;
    c.auc = auc;
    curves.push_back(std::move(c));
  }
  return curves;
}

double weighted_auc(const std::vector<RocCurve> &curves,
                    const std::vector<std::size_t> &truth) {
  double sum = 0.0, weight = 0.0;
  for (const auto &c : curves) {
    if (!c.defined)
      continue;
    std::size_t support = 0;
    for (auto t : truth)
      if (t == c.cls)
        ++support;
    sum += c.auc * static_cast<double>(support);
    weight += static_cast<double>(support);
  }
  return weight > 0 ? sum / weight : 0.0;
}

std::string RocCurve::to_csv_rows(const std::string &class_name) const {
  std::ostringstream out;
  char buf[160];
  for (std::size_t i = 0; i < fpr.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g,%.12g\n",
                  class_name.c_str(), thresholds[i], fpr[i], tpr[i]);
    out << buf;
  }
  return out.str();
}

std::vector<std::vector<std::size_t>>
stratified_folds(const std::vector<std::size_t> &labels, std::size_t k,
                 std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(i);
  for (const auto &[cls, idx] : by_class)
    if (idx.size() < k)
      throw StratifyError("class " + std::to_string(cls) +
                          " has fewer samples than folds");
  std::vector<std::vector<std::size_t>> folds(k);
  for (auto &[cls, idx] : by_class) {
    Rng rng(seed_for(seed, "fold/" + std::to_string(cls)));
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i)
      folds[i % k].push_back(idx[i]);
  }
  return folds;
}

std::string FoldSummary::to_csv() const {
  std::ostringstream out;
  out << "fold,accuracy,precision,recall,f1,auc\n";
  char buf[200];
  auto line = [&](const std::string &tag, const FoldMetrics &m) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  tag.c_str(), m.accuracy, m.precision, m.recall, m.f1, m.auc);
    out << buf;
  };
  for (std::size_t i = 0; i < folds.size(); ++i)
    line("fold" + std::to_string(i + 1), folds[i]);
  line("mean", mean);
  line("std", stddev);
  return out.str();
}

FoldSummary kfold(const std::vector<std::size_t> &labels, std::size_t classes,
                  std::size_t k, std::uint64_t seed, const TrainFn &train_fn,
                  std::size_t threads) {
  auto folds = stratified_folds(labels, k, seed);
  FoldSummary summary;
  summary.folds.resize(k);

  auto run_fold = [&](std::size_t fold) {
    std::vector<std::size_t> test = folds[fold];
    std::vector<std::size_t> train;
    for (std::size_t f = 0; f < k; ++f)
      if (f != fold)
        train.insert(train.end(), folds[f].begin(), folds[f].end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());

    FoldResult result = train_fn(train, test, fold);
    std::vector<std::size_t> truth;
    for (auto i : test)
      truth.push_back(labels[i]);
    ClassReport rep = report(confusion(truth, result.predictions, classes));
    auto curves = roc_auc(truth, result.scores);
    FoldMetrics m;
    m.accuracy = rep.accuracy;
    m.precision = rep.weighted_precision;
    m.recall = rep.weighted_recall;
    m.f1 = rep.weighted_f1;
    m.auc = weighted_auc(curves, truth);
    summary.folds[fold] = m;
  };

  if (threads <= 1) {
    for (std::size_t fold = 0; fold < k; ++fold)
      run_fold(fold);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    while (next < k) {
      const std::size_t batch = std::min(threads, k - next);
      for (std::size_t i = 0; i < batch; ++i)
        pool.emplace_back(run_fold, next + i);
      for (auto &t : pool)
        t.join();
      pool.clear();
      next += batch;
    }
  }

  auto acc = [&](auto proj) {
    double m = 0;
    for (const auto &f : summary.folds)
      m += proj(f);
    m /= static_cast<double>(k);
    double s = 0;
    for (const auto &f : summary.folds)
      s += (proj(f) - m) * (proj(f) - m);
    s = k > 1 ? std::sqrt(s / static_cast<double>(k - 1)) : 0.0;
    return std::pair<double, double>{m, s};
  };
  std::tie(summary.mean.accuracy, summary.stddev.accuracy) =
      acc([](const FoldMetrics &f) { return f.accuracy; });
  std::tie(summary.mean.precision, summary.stddev.precision) =
      acc([](const FoldMetrics &f) { return f.precision; });
  std::tie(summary.mean.recall, summary.stddev.recall) =
      acc([](const FoldMetrics &f) { return f.recall; });
  std::tie(summary.mean.f1, summary.stddev.f1) =
      acc([](const FoldMetrics &f) { return f.f1; });
  std::tie(summary.mean.auc, summary.stddev.auc) =
      acc([](const FoldMetrics &f) { return f.auc; });
  return summary;
}

} // namespace ceemkit
