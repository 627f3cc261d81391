#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ceemkit/tensor.hpp"

namespace ceemkit {

// rows = true class, cols = predicted class
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;  // row-major K*K
  std::vector<std::string> class_names;

  std::size_t &at(std::size_t truth, std::size_t pred) {
    return counts[truth * classes + pred];
  }
  std::size_t at(std::size_t truth, std::size_t pred) const {
    return counts[truth * classes + pred];
  }
  std::size_t total() const;
  std::size_t trace() const;
  std::string to_csv() const;
};

ConfusionMatrix confusion(const std::vector<std::size_t> &truth,
                          const std::vector<std::size_t> &pred,
                          std::size_t classes,
                          std::vector<std::string> class_names = {});

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool zero_division = false;  // empty predicted column or empty row
};

struct ClassReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
  std::vector<std::string> class_names;

  std::string to_json() const;
};

ClassReport report(const ConfusionMatrix &cm);

struct RocCurve {
  std::size_t cls = 0;
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;
  bool defined = true;  // false when the class has no positives or negatives

  std::string to_csv_rows(const std::string &class_name) const;
};

// One-vs-rest threshold sweep (ties grouped), trapezoidal AUC.
std::vector<RocCurve> roc_auc(const std::vector<std::size_t> &truth,
                              const Tensor &scores);

// Support-weighted mean AUC over classes with defined curves.
double weighted_auc(const std::vector<RocCurve> &curves,
                    const std::vector<std::size_t> &truth);

// Stratified k-fold cross validation. train_fn receives (train indices,
// test indices, fold number) and returns predictions plus score rows for the
// test indices, in order.
struct FoldResult {
  std::vector<std::size_t> predictions;
  Tensor scores;  // [n_test, K]
};

struct FoldMetrics {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0, auc = 0.0;
};

struct FoldSummary {
  std::vector<FoldMetrics> folds;
  FoldMetrics mean;
  FoldMetrics stddev;  // sample (n-1) estimator
  std::string to_csv() const;
};

using TrainFn = std::function<FoldResult(const std::vector<std::size_t> &,
                                         const std::vector<std::size_t> &,
                                         std::size_t)>;

std::vector<std::vector<std::size_t>>
stratified_folds(const std::vector<std::size_t> &labels, std::size_t k,
                 std::uint64_t seed);

FoldSummary kfold(const std::vector<std::size_t> &labels, std::size_t classes,
                  std::size_t k, std::uint64_t seed, const TrainFn &train_fn,
                  std::size_t threads = 1);

} // namespace ceemkit
