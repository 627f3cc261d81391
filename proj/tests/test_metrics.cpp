#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "json.hpp"

#include "ceemkit/metrics.hpp"

using namespace ceemkit;

namespace {

double pair_count_auc(const std::vector<std::size_t> &truth,
                      const Tensor &scores, std::size_t cls) {
  double num = 0.0, pairs = 0.0;
  const std::size_t N = truth.size();
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      if (truth[i] != cls || truth[j] == cls)
        continue;
      pairs += 1.0;
      if (scores.at(i, cls) > scores.at(j, cls))
        num += 1.0;
      else if (scores.at(i, cls) == scores.at(j, cls))
        num += 0.5;
    }
  return num / pairs;
}

} // namespace

TEST_CASE("confusion matrix construction") {
  SUBCASE("perfect predictions are diagonal") {
    ConfusionMatrix cm = confusion({0, 1, 2, 2}, {0, 1, 2, 2}, 3);
    CHECK(cm.trace() == 4);
    CHECK(cm.total() == 4);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t p = 0; p < 3; ++p)
        if (t != p)
          CHECK(cm.at(t, p) == 0);
  }
  SUBCASE("hand-counted example") {
    ConfusionMatrix cm = confusion({0, 0, 1}, {0, 1, 1}, 2);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 0) == 0);
    CHECK(cm.at(1, 1) == 1);
  }
  SUBCASE("empty input gives all zeros") {
    ConfusionMatrix cm = confusion({}, {}, 4);
    CHECK(cm.total() == 0);
  }
  SUBCASE("out-of-range labels are rejected") {
    CHECK_THROWS_AS(confusion({0, 5}, {0, 1}, 2), ValueError);
    CHECK_THROWS_AS(confusion({0, 1}, {0, 2}, 2), ValueError);
    CHECK_THROWS_AS(confusion({0, 1}, {0}, 2), ValueError);
  }
}

TEST_CASE("classification report closed forms") {
  SUBCASE("diagonal matrix scores all ones") {
    ConfusionMatrix cm = confusion({0, 1, 2}, {0, 1, 2}, 3);
    ClassReport rep = report(cm);
    CHECK(rep.accuracy == 1.0);
    for (const auto &c : rep.per_class) {
      CHECK(c.precision == 1.0);
      CHECK(c.recall == 1.0);
      CHECK(c.f1 == 1.0);
      CHECK_FALSE(c.zero_division);
    }
    CHECK(rep.macro_f1 == 1.0);
    CHECK(rep.weighted_f1 == 1.0);
  }
  SUBCASE("never-predicted class gets zero precision and a flag") {
    ConfusionMatrix cm = confusion({0, 0, 1, 1}, {0, 0, 0, 0}, 2);
    ClassReport rep = report(cm);
    CHECK(rep.per_class[1].precision == 0.0);
    CHECK(rep.per_class[1].recall == 0.0);
    CHECK(rep.per_class[1].f1 == 0.0);
    CHECK(rep.per_class[1].zero_division);
    CHECK_FALSE(rep.per_class[0].zero_division);
  }
  SUBCASE("binary example against hand computation") {
    ConfusionMatrix cm;
    cm.classes = 2;
    cm.counts = {50, 10, 5, 35};
    ClassReport rep = report(cm);
    const double p0 = 50.0 / 55.0, r0 = 50.0 / 60.0;
    CHECK(rep.per_class[0].precision == doctest::Approx(p0).epsilon(1e-12));
    CHECK(rep.per_class[0].recall == doctest::Approx(r0).epsilon(1e-12));
    CHECK(rep.per_class[0].f1 ==
          doctest::Approx(2 * p0 * r0 / (p0 + r0)).epsilon(1e-12));
    CHECK(rep.per_class[0].support == 60);
    CHECK(rep.accuracy == doctest::Approx(0.85).epsilon(1e-12));
  }
}

TEST_CASE("weighted recall equals accuracy on random matrices") {
  Rng rng(1);
  for (int n = 0; n < 200; ++n) {
    const std::size_t K = 2 + rng.index(5);
    ConfusionMatrix cm;
    cm.classes = K;
    cm.counts.assign(K * K, 0);
    for (auto &c : cm.counts)
      c = rng.index(25);
    if (cm.total() == 0)
      cm.counts[1] = 3;
    ClassReport rep = report(cm);
    CHECK(rep.weighted_recall == doctest::Approx(rep.accuracy).epsilon(1e-12));
    double lo = 1.0, hi = 0.0;
    for (const auto &c : rep.per_class) {
      lo = std::min(lo, c.f1);
      hi = std::max(hi, c.f1);
    }
    CHECK(rep.macro_f1 >= lo - 1e-12);
    CHECK(rep.macro_f1 <= hi + 1e-12);
  }
}

TEST_CASE("report json round-trips at six decimals") {
  ConfusionMatrix cm = confusion({0, 0, 1, 2, 2, 2}, {0, 1, 1, 2, 2, 0}, 3,
                                 {"a", "b", "c"});
  ClassReport rep = report(cm);
  auto parsed = nlohmann::json::parse(rep.to_json());
  REQUIRE(parsed["classes"].size() == 3);
  CHECK(parsed["classes"][0]["class"] == "a");
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(parsed["classes"][k]["precision"].get<double>() -
                   rep.per_class[k].precision) < 5e-7);
    CHECK(std::abs(parsed["classes"][k]["recall"].get<double>() -
                   rep.per_class[k].recall) < 5e-7);
  }
  CHECK(std::abs(parsed["accuracy"].get<double>() - rep.accuracy) < 5e-7);
  CHECK(std::abs(parsed["macro_avg"]["f1"].get<double>() - rep.macro_f1) <
        5e-7);
  CHECK(std::abs(parsed["weighted_avg"]["f1"].get<double>() -
                 rep.weighted_f1) < 5e-7);
}

TEST_CASE("confusion matrix csv carries class names") {
  ConfusionMatrix cm = confusion({0, 1}, {0, 1}, 2, {"x", "y"});
  const std::string csv = cm.to_csv();
  CHECK(csv.find("x") != std::string::npos);
  CHECK(csv.find("y") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows
}

TEST_CASE("roc and auc") {
  SUBCASE("perfect separation gives auc 1") {
    std::vector<std::size_t> truth = {1, 1, 0, 0};
    Tensor scores({4, 2}, {0.1, 0.9, 0.2, 0.8, 0.9, 0.1, 0.7, 0.3});
    auto curves = roc_auc(truth, scores);
    CHECK(curves[1].auc == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(curves[0].auc == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("constant scores give auc one half") {
    std::vector<std::size_t> truth = {0, 0, 1, 1};
    Tensor scores({4, 2});
    for (std::size_t i = 0; i < scores.size(); ++i)
      scores[i] = 0.5;
    auto curves = roc_auc(truth, scores);
    CHECK(curves[0].auc == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("class without positives is flagged undefined") {
    std::vector<std::size_t> truth = {0, 0, 1};
    Tensor scores({3, 3});
    auto curves = roc_auc(truth, scores);
    CHECK_FALSE(curves[2].defined);
    CHECK(curves[0].defined);
  }
  SUBCASE("curve is monotone and matches the pair-count oracle") {
    Rng rng(2);
    for (int n = 0; n < 50; ++n) {
      const std::size_t N = 5 + rng.index(196), K = 2 + rng.index(3);
      std::vector<std::size_t> truth(N);
      Tensor scores({N, K});
      for (std::size_t i = 0; i < N; ++i) {
        truth[i] = rng.index(K);
        double s = 0;
        for (std::size_t k = 0; k < K; ++k) {
          scores.at(i, k) = rng.index(8) / 8.0;  // coarse grid forces ties
          s += scores.at(i, k);
        }
        if (s > 0)
          for (std::size_t k = 0; k < K; ++k)
            scores.at(i, k) /= s;
      }
      for (const auto &c : roc_auc(truth, scores)) {
        if (!c.defined)
          continue;
        CHECK(c.auc >= 0.0);
        CHECK(c.auc <= 1.0);
        CHECK(c.auc ==
              doctest::Approx(pair_count_auc(truth, scores, c.cls))
                  .epsilon(1e-12));
        for (std::size_t i = 1; i < c.fpr.size(); ++i) {
          CHECK(c.fpr[i] >= c.fpr[i - 1]);
          CHECK(c.tpr[i] >= c.tpr[i - 1]);
        }
      }
    }
  }
  SUBCASE("csv rows expose class, threshold, fpr, tpr") {
    std::vector<std::size_t> truth = {0, 1};
    Tensor scores({2, 2}, {0.8, 0.2, 0.3, 0.7});
    auto curves = roc_auc(truth, scores);
    const std::string rows = curves[0].to_csv_rows("alpha");
    CHECK(rows.rfind("alpha,", 0) == 0);
    CHECK(std::count(rows.begin(), rows.end(), ',') >= 3);
  }
}

TEST_CASE("weighted auc skips undefined classes") {
  std::vector<std::size_t> truth = {0, 0, 0, 1};
  Tensor scores({4, 3}, {0.9, 0.1, 0, 0.8, 0.2, 0, 0.3, 0.7, 0,
                         0.2, 0.8, 0});
  auto curves = roc_auc(truth, scores);
  REQUIRE_FALSE(curves[2].defined);
  const double w = weighted_auc(curves, truth);
  const double expect =
      (3.0 * curves[0].auc + 1.0 * curves[1].auc) / 4.0;
  CHECK(w == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("stratified folds partition the data") {
  SUBCASE("exact division: 5 classes of 10 into 5 folds") {
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < 5; ++c)
      labels.insert(labels.end(), 10, c);
    auto folds = stratified_folds(labels, 5, 3);
    REQUIRE(folds.size() == 5);
    for (const auto &f : folds) {
      CHECK(f.size() == 10);
      for (std::size_t c = 0; c < 5; ++c)
        CHECK(std::count_if(f.begin(), f.end(), [&](std::size_t i) {
                return labels[i] == c;
              }) == 2);
    }
  }
  SUBCASE("disjoint and exhaustive on uneven classes") {
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < 4; ++c)
      labels.insert(labels.end(), 7 + 3 * c, c);
    auto folds = stratified_folds(labels, 5, 4);
    std::set<std::size_t> seen;
    for (const auto &f : folds)
      for (auto i : f)
        CHECK(seen.insert(i).second);
    CHECK(seen.size() == labels.size());
  }
  SUBCASE("a class smaller than k is rejected") {
    std::vector<std::size_t> labels = {0, 0, 0, 0, 0, 1, 1};
    CHECK_THROWS_AS(stratified_folds(labels, 5, 1), StratifyError);
  }
}

TEST_CASE("kfold aggregates fold metrics") {
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 3; ++c)
    labels.insert(labels.end(), 10, c);

  SUBCASE("constant metrics give zero std") {
    TrainFn perfect = [&](const std::vector<std::size_t> &,
                          const std::vector<std::size_t> &test,
                          std::size_t) {
      FoldResult r;
      r.scores = Tensor({test.size(), 3});
      for (std::size_t i = 0; i < test.size(); ++i) {
        r.predictions.push_back(labels[test[i]]);
        r.scores.at(i, labels[test[i]]) = 1.0;
      }
      return r;
    };
    FoldSummary sum = kfold(labels, 3, 5, 7, perfect);
    REQUIRE(sum.folds.size() == 5);
    CHECK(sum.mean.accuracy == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sum.stddev.accuracy == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sum.mean.f1 == doctest::Approx(1.0).epsilon(1e-12));
    const std::string csv = sum.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);  // 5 + mean + std + hdr
  }

  SUBCASE("sample standard deviation uses n-1") {
    TrainFn alternating = [&](const std::vector<std::size_t> &,
                              const std::vector<std::size_t> &test,
                              std::size_t fold) {
      FoldResult r;
      r.scores = Tensor({test.size(), 3});
      for (std::size_t i = 0; i < test.size(); ++i) {
        const std::size_t p = fold % 2 == 0 ? labels[test[i]] : 0;
        r.predictions.push_back(p);
        r.scores.at(i, p) = 1.0;
      }
      return r;
    };
    FoldSummary sum = kfold(labels, 3, 5, 7, alternating);
    double mean = 0, var = 0;
    for (const auto &f : sum.folds)
      mean += f.accuracy / 5.0;
    for (const auto &f : sum.folds)
      var += (f.accuracy - mean) * (f.accuracy - mean) / 4.0;
    CHECK(sum.mean.accuracy == doctest::Approx(mean).epsilon(1e-12));
    CHECK(sum.stddev.accuracy ==
          doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  }

  SUBCASE("parallel folds match sequential results") {
    TrainFn fn = [&](const std::vector<std::size_t> &,
                     const std::vector<std::size_t> &test, std::size_t fold) {
      FoldResult r;
      r.scores = Tensor({test.size(), 3});
      for (std::size_t i = 0; i < test.size(); ++i) {
        const std::size_t p = (labels[test[i]] + fold) % 3;
        r.predictions.push_back(p);
        r.scores.at(i, p) = 1.0;
      }
      return r;
    };
    FoldSummary seq = kfold(labels, 3, 5, 7, fn, 1);
    FoldSummary par = kfold(labels, 3, 5, 7, fn, 4);
    REQUIRE(seq.folds.size() == par.folds.size());
    for (std::size_t i = 0; i < seq.folds.size(); ++i) {
      CHECK(seq.folds[i].accuracy == par.folds[i].accuracy);
      CHECK(seq.folds[i].f1 == par.folds[i].f1);
    }
  }
}
