#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridgekd/datagen.hpp"
#include "bridgekd/distill.hpp"
#include "bridgekd/zoo.hpp"

namespace bridgekd {

// Verification and identification metrics. Everything here is a pure
// function of its inputs; the only randomness (batch order of the
// identification head fine-tune) is seeded explicitly.

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// ----- ROC -----

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // accept when score >= threshold
};

struct RocCurve {
  std::vector<RocPoint> points;  // starts at (0,0), ends at (1,1), monotone
  double auc = 0.0;              // trapezoidal
};

// Sweeps thresholds over the unique score values, descending, grouping ties.
// Needs at least one positive and one negative label. The trapezoidal AUC
// over grouped ties equals the Mann-Whitney statistic (ties count half).
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

// Largest TPR among curve points with FPR <= limit.
double tpr_at_fpr(const RocCurve& curve, double limit);

// Accuracy of the best accept-if-score>=threshold rule over this same pair
// set, and the threshold attaining it. Never below the larger base rate.
struct ThresholdAccuracy {
  double accuracy = 0.0;
  double threshold = 0.0;
};
ThresholdAccuracy best_threshold_accuracy(const std::vector<double>& scores,
                                          const std::vector<int>& labels);

// Two-column "fpr tpr" text, one line per curve point.
void write_roc(const std::string& path, const RocCurve& curve);

// ----- batched inference helpers -----

// Runs the student over the stacked images in inference mode, `batch` rows at
// a time. Either output may be null.
void student_forward_batched(StudentModel<float>& student, const Tensor<float>& images, int batch,
                             Tensor<float>* features, Tensor<float>* logits);

// Fraction of rows whose argmax logit matches the label.
double classification_accuracy(Model<float>& net, const Tensor<float>& inputs,
                               const std::vector<int>& labels, int batch = 32);

// ----- verification -----

// Row-wise embedding used for verification: the mimicking-layer features and
// the identity logits, each L2-normalized, concatenated. Normalizing per
// branch keeps the cosine score scale-free in both parts.
Tensor<float> verification_embedding(StudentModel<float>& student, const Tensor<float>& images,
                                     int batch = 32);

struct VerifyReport {
  double accuracy = 0.0;        // at the best threshold over these pairs
  double best_threshold = 0.0;
  double auc = 0.0;
  double tpr_at_fpr01 = 0.0;    // TPR where FPR <= 0.1
  int n_pairs = 0;
  RocCurve roc;
};

// Scores every pair by cosine similarity of verification embeddings. Each
// (identity, sample) reference resolves to that sample's first degraded view
// at the student's input resolution. Empty pair lists are rejected.
VerifyReport verify(StudentModel<float>& student, const DatasetIndex& index,
                    const std::vector<VerificationPair>& pairs, int batch = 32);

// ----- identification -----

struct IdentifyConfig {
  std::vector<int> k_list = {1, 5};
  int head_epochs = 30;
  double head_lr = 0.1;
  int batch = 16;
  uint64_t seed = 0;
};

struct IdentifyReport {
  std::vector<int> ks;
  std::vector<double> errors;  // aligned with ks, non-increasing in k
  int n_probes = 0;

  double error_at(int k) const;
};

// Top-k error from raw logits: rank of the true class, ranks resolved by
// descending logit with index order breaking ties. Exposed separately so
// the ranking can be oracle-checked without a model.
std::vector<double> topk_errors_from_logits(const Tensor<float>& logits,
                                            const std::vector<int>& labels,
                                            const std::vector<int>& k_list);

// Closed-set identification on the target split at the student's resolution:
// freezes the trunk, fine-tunes a fresh identity head on the train-portion
// degraded views, then measures top-k error on the eval-portion views.
IdentifyReport topk_error(StudentModel<float>& student, const DatasetIndex& index,
                          const IdentifyConfig& cfg);

// ----- results table -----

// One grid cell's metrics. top1/top5 are identification errors.
struct ResultRow {
  std::string model;  // "S-<resolution>-<mode>-<teachers>"
  uint64_t seed = 0;
  double acc = 0.0;
  double auc = 0.0;
  double tpr_at_01 = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
};

// "model=<s> seed=<n> acc=<f> auc=<f> tpr@0.1=<f> top1=<f> top5=<f>"
std::string result_line(const ResultRow& row);
std::string result_table(const std::vector<ResultRow>& rows);
void write_results(const std::string& path, const std::vector<ResultRow>& rows);

}  // namespace bridgekd
