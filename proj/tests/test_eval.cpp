#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "bridgekd/datagen.hpp"
#include "bridgekd/eval.hpp"
#include "bridgekd/rng.hpp"
#include "bridgekd/zoo.hpp"
#include "doctest.h"

using namespace bridgekd;

namespace {

// Mann-Whitney statistic: concordant positive/negative pairs, ties half.
// Independent O(P*N) oracle for the trapezoidal AUC.
double mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double num = 0.0;
  int pos = 0, neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++pos;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) num += 1.0;
      else if (scores[i] == scores[j]) num += 0.5;
    }
  }
  for (size_t j = 0; j < scores.size(); ++j)
    if (!labels[j]) ++neg;
  return num / (static_cast<double>(pos) * neg);
}

std::filesystem::path temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() / (std::string("bridgekd_eval_") + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// 12 identities -> 4 private / 6 public / 2 target, degraded views at 16.
DatasetIndex eval_dataset(const std::filesystem::path& dir) {
  DatasetConfig cfg;
  cfg.identities = 12;
  cfg.samples_per_identity = 5;
  cfg.hr_size = 32;
  cfg.resolutions = {16};
  cfg.degrade.count = 2;
  return write_dataset(dir.string(), cfg, 123);
}

Tensor<float> random_images(int n, int hw, uint64_t seed) {
  Tensor<float> t = Tensor<float>::zeros({n, 1, hw, hw});
  Rng rng(seed);
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rng.uniform(0.0, 1.0));
  return t;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("cosine similarity matches its definition") {
  std::vector<double> v = {1.0, 2.0, -3.0, 0.5};
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> neg(v);
  for (auto& x : neg) x = -x;
  CHECK(cosine_similarity(v, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(cosine_similarity({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));

  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(8), b(8);
    for (int i = 0; i < 8; ++i) {
      a[i] = rng.uniform(-2.0, 2.0);
      b[i] = rng.uniform(-2.0, 2.0);
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < 8; ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    const double want = dot / (std::sqrt(na) * std::sqrt(nb));
    CHECK(cosine_similarity(a, b) == doctest::Approx(want).epsilon(1e-12));
    CHECK(cosine_similarity(a, b) <= 1.0 + 1e-12);
    CHECK(cosine_similarity(a, b) >= -1.0 - 1e-12);
  }

  CHECK_THROWS_AS(cosine_similarity({0.0, 0.0}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(cosine_similarity({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("roc curve handles separable, degenerate and tied scores") {
  RocCurve sep = roc_curve({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  CHECK(sep.auc == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sep.points.front().fpr == 0.0);
  CHECK(sep.points.front().tpr == 0.0);
  CHECK(sep.points.back().fpr == doctest::Approx(1.0));
  CHECK(sep.points.back().tpr == doctest::Approx(1.0));

  // Identical scores collapse to the diagonal.
  RocCurve flat = roc_curve({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
  CHECK(flat.auc == doctest::Approx(0.5).epsilon(1e-12));
  REQUIRE(flat.points.size() == 2);
  CHECK(flat.points[1].fpr == doctest::Approx(1.0));
  CHECK(flat.points[1].tpr == doctest::Approx(1.0));

  CHECK_THROWS_AS(roc_curve({0.1, 0.2}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(roc_curve({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(roc_curve({0.1, 0.2}, {1}), std::invalid_argument);
}

TEST_CASE("trapezoidal auc equals the pair-counting statistic") {
  Rng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_int(116));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      // Quantized scores force tie groups.
      scores[i] = std::round(rng.uniform(0.0, 1.0) * 10.0) / 10.0;
      labels[i] = rng.uniform() < 0.5 ? 1 : 0;
      pos += labels[i];
    }
    if (pos == 0) labels[0] = 1;
    if (pos == n) labels[0] = 0;

    RocCurve curve = roc_curve(scores, labels);
    CHECK(curve.auc == doctest::Approx(mann_whitney_auc(scores, labels)).epsilon(1e-12));
    CHECK(curve.auc >= 0.0);
    CHECK(curve.auc <= 1.0);
    for (size_t k = 1; k < curve.points.size(); ++k) {
      CHECK(curve.points[k].fpr >= curve.points[k - 1].fpr);
      CHECK(curve.points[k].tpr >= curve.points[k - 1].tpr);
      CHECK(curve.points[k].threshold < curve.points[k - 1].threshold);
    }
  }
}

TEST_CASE("independent scores and labels give a chance-level auc") {
  Rng rng(424242);
  const int n = 10000;
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    scores[i] = rng.uniform();
    labels[i] = rng.uniform() < 0.5 ? 1 : 0;
  }
  RocCurve curve = roc_curve(scores, labels);
  CHECK(curve.auc > 0.48);
  CHECK(curve.auc < 0.52);
}

TEST_CASE("operating point lookups on a hand-built curve") {
  const std::vector<double> scores = {0.9, 0.8, 0.7, 0.6, 0.5};
  const std::vector<int> labels = {1, 1, 0, 1, 0};
  RocCurve curve = roc_curve(scores, labels);
  // Points: (0,1/3) (0,2/3) (.5,2/3) (.5,1) (1,1); area = 1/3 + 1/2.
  CHECK(curve.auc == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(tpr_at_fpr(curve, 0.1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(tpr_at_fpr(curve, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tpr_at_fpr(curve, 0.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  ThresholdAccuracy best = best_threshold_accuracy(scores, labels);
  CHECK(best.accuracy == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(best.threshold == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("best-threshold accuracy never drops below the base rates") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_int(60));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      scores[i] = std::round(rng.uniform(0.0, 1.0) * 20.0) / 20.0;
      labels[i] = rng.uniform() < 0.3 ? 1 : 0;
      pos += labels[i];
    }
    if (pos == 0) labels[0] = 1;
    if (pos == n) labels[0] = 0;
    pos = 0;
    for (int l : labels) pos += l;

    const double base = std::max(pos, n - pos) / static_cast<double>(n);
    CHECK(best_threshold_accuracy(scores, labels).accuracy >= base - 1e-12);
  }
  CHECK_THROWS_AS(best_threshold_accuracy({0.5, 0.6}, {1, 1}), std::invalid_argument);
}

TEST_CASE("verification embedding normalizes both branches") {
  auto student = build_student<float>(16, 6, 7);
  Tensor<float> images = random_images(5, 16, 61);
  Tensor<float> emb = verification_embedding(student, images);
  REQUIRE(emb.shape() == std::vector<int>({5, 128 + 6}));
  for (int i = 0; i < 5; ++i) {
    double nf = 0.0, nl = 0.0;
    for (int k = 0; k < 128; ++k) {
      const double v = emb.data()[i * 134 + k];
      nf += v * v;
    }
    for (int k = 128; k < 134; ++k) {
      const double v = emb.data()[i * 134 + k];
      nl += v * v;
    }
    CHECK(std::sqrt(nf) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(std::sqrt(nl) == doctest::Approx(1.0).epsilon(1e-5));
  }

  // Batch size must not affect inference-mode embeddings.
  Tensor<float> emb1 = verification_embedding(student, images, 2);
  for (int i = 0; i < emb.numel(); ++i)
    CHECK(emb1.data()[i] == doctest::Approx(emb.data()[i]).epsilon(1e-6));
}

TEST_CASE("verification on a generated dataset") {
  auto dir = temp_dir("verify");
  DatasetIndex idx = eval_dataset(dir);
  std::vector<int> target_ids = idx.identities(Split::kTarget);
  REQUIRE(target_ids.size() == 2);

  auto pairs = verification_pairs(target_ids, idx.samples_per_identity(), 8, 8,
                                  derive_seed(idx.manifest_hash(), "verify-pairs", 0));
  auto student = build_student<float>(16, 6, 11);

  VerifyReport report = verify(student, idx, pairs);
  CHECK(report.n_pairs == 16);
  CHECK(report.accuracy >= 0.5);  // base rate of a balanced pair set
  CHECK(report.auc >= 0.0);
  CHECK(report.auc <= 1.0);
  CHECK(report.roc.points.front().fpr == 0.0);
  CHECK(report.roc.points.back().tpr == doctest::Approx(1.0));
  CHECK(report.tpr_at_fpr01 >= 0.0);

  VerifyReport again = verify(student, idx, pairs);
  CHECK(again.accuracy == report.accuracy);
  CHECK(again.auc == report.auc);
  CHECK(again.best_threshold == report.best_threshold);

  CHECK_THROWS_AS(verify(student, idx, {}), std::invalid_argument);

  // The dataset only holds 16x16 views, so a 32-input student cannot score.
  auto wide = build_student<float>(32, 6, 13);
  CHECK_THROWS_AS(verify(wide, idx, pairs), std::runtime_error);

  const std::string roc_path = (dir / "roc.txt").string();
  write_roc(roc_path, report.roc);
  std::ifstream f(roc_path);
  std::string first;
  std::getline(f, first);
  CHECK(first == "0.000000 0.000000");
}

TEST_CASE("top-k ranking matches a sort-and-count oracle") {
  Rng rng(37);
  const int n = 40, width = 7;
  Tensor<float> logits = Tensor<float>::zeros({n, width});
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(rng.uniform_int(width));
    for (int j = 0; j < width; ++j)
      logits.data()[i * width + j] =
          static_cast<float>(std::round(rng.uniform(-1.0, 1.0) * 10.0) / 10.0);
  }

  const std::vector<int> ks = {1, 3, 7};
  std::vector<double> got = topk_errors_from_logits(logits, labels, ks);

  std::vector<double> want(ks.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    std::vector<int> order(width);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return logits.data()[i * width + a] > logits.data()[i * width + b];
    });
    int rank = 0;
    while (order[rank] != labels[i]) ++rank;
    for (size_t ki = 0; ki < ks.size(); ++ki)
      if (rank >= ks[ki]) want[ki] += 1.0;
  }
  for (auto& w : want) w /= n;

  for (size_t ki = 0; ki < ks.size(); ++ki) CHECK(got[ki] == doctest::Approx(want[ki]));
  CHECK(got[0] >= got[1]);
  CHECK(got[2] == 0.0);  // k equal to the class count can never miss

  // A constant predictor stuck on class 0 misses every other label.
  Tensor<float> constant = Tensor<float>::zeros({4, 5});
  for (int i = 0; i < 4; ++i) constant.data()[i * 5] = 10.0f;
  CHECK(topk_errors_from_logits(constant, {1, 2, 3, 4}, {1})[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS(topk_errors_from_logits(logits, labels, {0}), std::invalid_argument);
  CHECK_THROWS_AS(topk_errors_from_logits(logits, labels, {8}), std::invalid_argument);
}

TEST_CASE("closed-set identification on the target split") {
  auto dir = temp_dir("identify");
  DatasetIndex idx = eval_dataset(dir);
  auto student = build_student<float>(16, 6, 19);

  IdentifyConfig cfg;
  cfg.k_list = {1, 2};
  cfg.head_epochs = 15;
  cfg.seed = 3;
  IdentifyReport report = topk_error(student, idx, cfg);
  CHECK(report.n_probes == 4);  // 2 identities x 1 eval sample x 2 views
  CHECK(report.error_at(2) == 0.0);
  CHECK(report.error_at(1) >= report.error_at(2));
  CHECK(report.error_at(1) <= 1.0);

  IdentifyReport again = topk_error(student, idx, cfg);
  CHECK(again.errors == report.errors);

  IdentifyConfig bad = cfg;
  bad.k_list = {3};  // only 2 target identities exist
  CHECK_THROWS_AS(topk_error(student, idx, bad), std::invalid_argument);
  CHECK_THROWS_AS(report.error_at(5), std::invalid_argument);
}

TEST_CASE("result lines follow the pinned format") {
  ResultRow row{"S-16-sc-V", 3, 0.8125, 0.9, 0.75, 0.2, 0.04};
  CHECK(result_line(row) ==
        "model=S-16-sc-V seed=3 acc=0.812500 auc=0.900000 tpr@0.1=0.750000 top1=0.200000 "
        "top5=0.040000");

  auto dir = temp_dir("results");
  const std::string path = (dir / "results.txt").string();
  write_results(path, {row, row});
  std::ifstream f(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(text == result_table({row, row}));
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("classification accuracy counts argmax hits") {
  Model<float> head(head_spec("probe", 2, 2), 1);
  std::map<std::string, Tensor<float>> state;
  Tensor<float> w = Tensor<float>::zeros({2, 2});
  w.data()[0] = 1.0f;  // identity weights: prediction = argmax of the input
  w.data()[3] = 1.0f;
  state.emplace("probe.fc.weight", w);
  state.emplace("probe.fc.bias", Tensor<float>::zeros({2}));
  head.load_state(state);

  Tensor<float> x = Tensor<float>::zeros({4, 2});
  const float rows[4][2] = {{2.0f, 1.0f}, {0.0f, 3.0f}, {5.0f, 4.0f}, {1.0f, 2.0f}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) x.data()[i * 2 + j] = rows[i][j];

  CHECK(classification_accuracy(head, x, {0, 1, 0, 1}) == doctest::Approx(1.0));
  CHECK(classification_accuracy(head, x, {0, 1, 1, 1}) == doctest::Approx(0.75));
  CHECK(classification_accuracy(head, x, {1, 0, 1, 0}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(classification_accuracy(head, x, {0, 1}), std::invalid_argument);
}

}  // TEST_SUITE
