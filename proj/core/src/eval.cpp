#include "bridgekd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "bridgekd/rng.hpp"

namespace bridgekd {

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("cosine_similarity: vectors must share a non-zero length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12)
    throw std::invalid_argument("cosine_similarity: zero-norm vector");
  return dot / (na * nb);
}

namespace {

// Scores sorted descending with their labels, plus class totals. Shared by
// the ROC sweep and the threshold search so both walk identical tie groups.
struct SweepData {
  std::vector<std::pair<double, int>> by_score;  // (score, label), descending
  int n_pos = 0;
  int n_neg = 0;
};

SweepData prepare_sweep(const std::vector<double>& scores, const std::vector<int>& labels,
                        const char* where) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument(std::string(where) + ": scores and labels must match and be non-empty");
  SweepData s;
  s.by_score.reserve(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw std::invalid_argument(std::string(where) + ": non-finite score");
    s.by_score.emplace_back(scores[i], labels[i] ? 1 : 0);
    s.by_score.back().second ? ++s.n_pos : ++s.n_neg;
  }
  if (s.n_pos == 0 || s.n_neg == 0)
    throw std::invalid_argument(std::string(where) +
                                ": need at least one positive and one negative label");
  std::sort(s.by_score.begin(), s.by_score.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  return s;
}

}  // namespace

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  SweepData s = prepare_sweep(scores, labels, "roc_curve");
  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  int tp = 0, fp = 0;
  size_t i = 0;
  while (i < s.by_score.size()) {
    const double value = s.by_score[i].first;
    while (i < s.by_score.size() && s.by_score[i].first == value) {
      s.by_score[i].second ? ++tp : ++fp;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / s.n_neg,
                            static_cast<double>(tp) / s.n_pos, value});
  }
  double auc = 0.0;
  for (size_t k = 1; k < curve.points.size(); ++k)
    auc += (curve.points[k].fpr - curve.points[k - 1].fpr) *
           (curve.points[k].tpr + curve.points[k - 1].tpr) * 0.5;
  curve.auc = auc;
  return curve;
}

double tpr_at_fpr(const RocCurve& curve, double limit) {
  double best = 0.0;
  for (const auto& p : curve.points)
    if (p.fpr <= limit + 1e-12) best = std::max(best, p.tpr);
  return best;
}

ThresholdAccuracy best_threshold_accuracy(const std::vector<double>& scores,
                                          const std::vector<int>& labels) {
  SweepData s = prepare_sweep(scores, labels, "best_threshold_accuracy");
  const double n = static_cast<double>(s.by_score.size());
  // Accepting nothing gets every negative right.
  ThresholdAccuracy best{s.n_neg / n, std::numeric_limits<double>::infinity()};
  int tp = 0, fp = 0;
  size_t i = 0;
  while (i < s.by_score.size()) {
    const double value = s.by_score[i].first;
    while (i < s.by_score.size() && s.by_score[i].first == value) {
      s.by_score[i].second ? ++tp : ++fp;
      ++i;
    }
    const double acc = (tp + (s.n_neg - fp)) / n;
    if (acc > best.accuracy) best = {acc, value};
  }
  return best;
}

void write_roc(const std::string& path, const RocCurve& curve) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write ROC curve: " + path);
  char line[64];
  for (const auto& p : curve.points) {
    std::snprintf(line, sizeof(line), "%.6f %.6f\n", p.fpr, p.tpr);
    f << line;
  }
  if (!f) throw std::runtime_error("short write on ROC curve: " + path);
}

void student_forward_batched(StudentModel<float>& student, const Tensor<float>& images, int batch,
                             Tensor<float>* features, Tensor<float>* logits) {
  if (!images.defined() || images.dim(0) < 1)
    throw std::invalid_argument("student_forward_batched: empty image batch");
  if (batch < 1) throw std::invalid_argument("student_forward_batched: batch must be positive");
  const int n = images.dim(0);
  if (features) *features = Tensor<float>::zeros({n, student.mimic_dim});
  if (logits) *logits = Tensor<float>::zeros({n, student.num_classes});
  for (int start = 0; start < n; start += batch) {
    const int end = std::min(n, start + batch);
    std::vector<int> rows(end - start);
    std::iota(rows.begin(), rows.end(), start);
    auto fwd = student.net.forward(gather_rows(images, rows), nullptr, false);
    if (features)
      std::copy(fwd.features.data(), fwd.features.data() + fwd.features.numel(),
                features->data() + static_cast<size_t>(start) * student.mimic_dim);
    if (logits)
      std::copy(fwd.output.data(), fwd.output.data() + fwd.output.numel(),
                logits->data() + static_cast<size_t>(start) * student.num_classes);
  }
}

double classification_accuracy(Model<float>& net, const Tensor<float>& inputs,
                               const std::vector<int>& labels, int batch) {
  if (!inputs.defined() || inputs.dim(0) < 1)
    throw std::invalid_argument("classification_accuracy: empty input");
  const int n = inputs.dim(0);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("classification_accuracy: labels do not match rows");
  int correct = 0;
  for (int start = 0; start < n; start += batch) {
    const int end = std::min(n, start + batch);
    std::vector<int> rows(end - start);
    std::iota(rows.begin(), rows.end(), start);
    Tensor<float> out = net.forward(gather_rows(inputs, rows), nullptr, false).output;
    const int width = out.dim(1);
    for (int j = 0; j < end - start; ++j) {
      const float* row = out.data() + static_cast<size_t>(j) * width;
      int arg = 0;
      for (int k = 1; k < width; ++k)
        if (row[k] > row[arg]) arg = k;
      if (arg == labels[start + j]) ++correct;
    }
  }
  return static_cast<double>(correct) / n;
}

namespace {

void l2_normalize_rows(Tensor<float>& t, const char* what) {
  const int n = t.dim(0), d = t.dim(1);
  for (int i = 0; i < n; ++i) {
    float* row = t.data() + static_cast<size_t>(i) * d;
    double norm = 0.0;
    for (int k = 0; k < d; ++k) norm += static_cast<double>(row[k]) * row[k];
    norm = std::sqrt(norm);
    if (norm < 1e-12)
      throw std::runtime_error(std::string("verification_embedding: zero-norm ") + what +
                               " in row " + std::to_string(i));
    for (int k = 0; k < d; ++k) row[k] = static_cast<float>(row[k] / norm);
  }
}

}  // namespace

Tensor<float> verification_embedding(StudentModel<float>& student, const Tensor<float>& images,
                                     int batch) {
  Tensor<float> feats, logits;
  student_forward_batched(student, images, batch, &feats, &logits);
  l2_normalize_rows(feats, "mimicking features");
  l2_normalize_rows(logits, "identity logits");
  const int n = images.dim(0), df = student.mimic_dim, dl = student.num_classes;
  Tensor<float> out = Tensor<float>::zeros({n, df + dl});
  for (int i = 0; i < n; ++i) {
    std::copy(feats.data() + static_cast<size_t>(i) * df,
              feats.data() + static_cast<size_t>(i + 1) * df,
              out.data() + static_cast<size_t>(i) * (df + dl));
    std::copy(logits.data() + static_cast<size_t>(i) * dl,
              logits.data() + static_cast<size_t>(i + 1) * dl,
              out.data() + static_cast<size_t>(i) * (df + dl) + df);
  }
  return out;
}

VerifyReport verify(StudentModel<float>& student, const DatasetIndex& index,
                    const std::vector<VerificationPair>& pairs, int batch) {
  if (pairs.empty()) throw std::invalid_argument("verify: empty pair list");

  // Each (identity, sample) reference resolves to its first degraded view at
  // the student's resolution.
  std::map<std::pair<int, int>, const ManifestEntry*> probe_of;
  for (const auto* e : index.degraded(Split::kTarget, student.input_resolution))
    if (e->variant == 0) probe_of[{e->identity, e->sample}] = e;

  std::map<std::pair<int, int>, int> row_of;
  std::vector<const ManifestEntry*> picked;
  auto claim = [&](int id, int sample) {
    auto key = std::make_pair(id, sample);
    if (row_of.count(key)) return;
    auto it = probe_of.find(key);
    if (it == probe_of.end())
      throw std::runtime_error("verify: no degraded view for identity " + std::to_string(id) +
                               " sample " + std::to_string(sample) + " at resolution " +
                               std::to_string(student.input_resolution));
    row_of.emplace(key, static_cast<int>(picked.size()));
    picked.push_back(it->second);
  };
  for (const auto& p : pairs) {
    claim(p.id_a, p.sample_a);
    claim(p.id_b, p.sample_b);
  }

  const int n = static_cast<int>(picked.size());
  const int hw = student.input_resolution;
  Tensor<float> images = Tensor<float>::zeros({n, 1, hw, hw});
  const size_t plane = static_cast<size_t>(hw) * hw;
  for (int i = 0; i < n; ++i) {
    Tensor<float> img = index.load_image(*picked[i]);
    std::copy(img.data(), img.data() + plane, images.data() + plane * i);
  }
  Tensor<float> emb = verification_embedding(student, images, batch);

  const int dim = emb.dim(1);
  std::vector<double> scores(pairs.size());
  std::vector<int> labels(pairs.size());
  std::vector<double> va(dim), vb(dim);
  for (size_t p = 0; p < pairs.size(); ++p) {
    const int ra = row_of.at({pairs[p].id_a, pairs[p].sample_a});
    const int rb = row_of.at({pairs[p].id_b, pairs[p].sample_b});
    for (int k = 0; k < dim; ++k) {
      va[k] = emb.data()[static_cast<size_t>(ra) * dim + k];
      vb[k] = emb.data()[static_cast<size_t>(rb) * dim + k];
    }
    scores[p] = cosine_similarity(va, vb);
    labels[p] = pairs[p].same_identity ? 1 : 0;
  }

  VerifyReport report;
  report.roc = roc_curve(scores, labels);
  report.auc = report.roc.auc;
  report.tpr_at_fpr01 = tpr_at_fpr(report.roc, 0.1);
  ThresholdAccuracy best = best_threshold_accuracy(scores, labels);
  report.accuracy = best.accuracy;
  report.best_threshold = best.threshold;
  report.n_pairs = static_cast<int>(pairs.size());
  return report;
}

double IdentifyReport::error_at(int k) const {
  for (size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return errors[i];
  throw std::invalid_argument("identify report: no entry for k=" + std::to_string(k));
}

std::vector<double> topk_errors_from_logits(const Tensor<float>& logits,
                                            const std::vector<int>& labels,
                                            const std::vector<int>& k_list) {
  if (!logits.defined() || logits.rank() != 2)
    throw std::invalid_argument("topk_errors_from_logits: logits must be (N,K)");
  const int n = logits.dim(0), width = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("topk_errors_from_logits: labels do not match rows");
  for (int k : k_list)
    if (k < 1 || k > width)
      throw std::invalid_argument("topk_errors_from_logits: k=" + std::to_string(k) +
                                  " outside [1, " + std::to_string(width) + "]");

  std::vector<double> errors(k_list.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data() + static_cast<size_t>(i) * width;
    const int truth = labels[i];
    // Rank of the true class under descending logits, earlier index first on
    // ties: the number of classes sorted strictly ahead of it.
    int rank = 0;
    for (int j = 0; j < width; ++j)
      if (row[j] > row[truth] || (row[j] == row[truth] && j < truth)) ++rank;
    for (size_t ki = 0; ki < k_list.size(); ++ki)
      if (rank >= k_list[ki]) errors[ki] += 1.0;
  }
  for (auto& e : errors) e /= n;
  return errors;
}

IdentifyReport topk_error(StudentModel<float>& student, const DatasetIndex& index,
                          const IdentifyConfig& cfg) {
  if (cfg.k_list.empty()) throw std::invalid_argument("topk_error: empty k list");
  TrainSet gallery = load_degraded_set(index, Split::kTarget, student.input_resolution,
                                       SampleFilter::kTrain);
  TrainSet probe = load_degraded_set(index, Split::kTarget, student.input_resolution,
                                     SampleFilter::kEval);
  for (int k : cfg.k_list)
    if (k > gallery.num_classes)
      throw std::invalid_argument("topk_error: k=" + std::to_string(k) + " exceeds the " +
                                  std::to_string(gallery.num_classes) + " gallery identities");

  // Frozen trunk, fresh head: only the identity head is fit to the gallery.
  Tensor<float> gallery_feats, probe_feats;
  student_forward_batched(student, gallery.inputs, cfg.batch, &gallery_feats, nullptr);
  student_forward_batched(student, probe.inputs, cfg.batch, &probe_feats, nullptr);

  Model<float> head(head_spec("identity_head", student.mimic_dim, gallery.num_classes),
                    derive_seed(cfg.seed, "identify-head", 0));
  TrainSet head_set{gallery_feats, gallery.labels, {}, gallery.num_classes};
  train_classifier(head, head_set, cfg.head_epochs, cfg.head_lr, cfg.batch, cfg.seed,
                   "identity_head");

  Tensor<float> logits = head.forward(probe_feats, nullptr, false).output;
  IdentifyReport report;
  report.ks = cfg.k_list;
  report.errors = topk_errors_from_logits(logits, probe.labels, cfg.k_list);
  report.n_probes = probe.size();
  return report;
}

std::string result_line(const ResultRow& row) {
  char line[256];
  std::snprintf(line, sizeof(line),
                "model=%s seed=%llu acc=%.6f auc=%.6f tpr@0.1=%.6f top1=%.6f top5=%.6f",
                row.model.c_str(), static_cast<unsigned long long>(row.seed), row.acc, row.auc,
                row.tpr_at_01, row.top1, row.top5);
  return line;
}

std::string result_table(const std::vector<ResultRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += result_line(r);
    out += '\n';
  }
  return out;
}

void write_results(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write results table: " + path);
  f << result_table(rows);
  if (!f) throw std::runtime_error("short write on results table: " + path);
}

}  // namespace bridgekd
