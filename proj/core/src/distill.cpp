#include "bridgekd/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "bridgekd/rng.hpp"

namespace bridgekd {

namespace {

int argmax_row(const float* row, int width) {
  int best = 0;
  for (int k = 1; k < width; ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

// Shuffled batch schedule for one epoch. A trailing batch of a single row is
// dropped: batch statistics need at least two rows.
std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

void check_finite(double loss, const std::string& name, int epoch) {
  if (!std::isfinite(loss))
    throw std::runtime_error(name + ": training diverged (non-finite loss in epoch " +
                             std::to_string(epoch) + ")");
}

// Rolling per-epoch sums, weighted by batch size so the record holds true
// set-level means.
struct EpochAccum {
  double c = 0.0, aux = 0.0, total = 0.0;
  int seen = 0, correct = 0;

  void add(double bc, double baux, double btotal, const Tensor<float>& logits,
           const std::vector<int>& labels, const std::vector<int>& rows) {
    const int bs = static_cast<int>(rows.size());
    c += bc * bs;
    aux += baux * bs;
    total += btotal * bs;
    const int width = logits.dim(1);
    for (int j = 0; j < bs; ++j)
      if (argmax_row(logits.data() + static_cast<size_t>(j) * width, width) == labels[rows[j]])
        ++correct;
    seen += bs;
  }

  EpochRecord record(int epoch) const {
    EpochRecord r;
    r.epoch = epoch;
    r.classification = c / seen;
    r.auxiliary = aux / seen;
    r.total = total / seen;
    r.accuracy = static_cast<double>(correct) / seen;
    return r;
  }
};

void check_train_set(const TrainSet& data, const char* where) {
  if (!data.inputs.defined() || data.size() < 2)
    throw std::invalid_argument(std::string(where) + ": need at least 2 training rows");
  if (static_cast<int>(data.labels.size()) != data.size())
    throw std::invalid_argument(std::string(where) + ": labels do not match the input rows");
  if (data.num_classes < 2)
    throw std::invalid_argument(std::string(where) + ": need at least 2 classes");
}

}  // namespace

const char* mode_name(SupervisionMode m) {
  switch (m) {
    case SupervisionMode::kC: return "c";
    case SupervisionMode::kS: return "s";
    case SupervisionMode::kDC: return "dc";
    case SupervisionMode::kSC: return "sc";
  }
  throw std::logic_error("mode_name: bad enum value");
}

SupervisionMode mode_from_name(const std::string& s) {
  if (s == "c") return SupervisionMode::kC;
  if (s == "s") return SupervisionMode::kS;
  if (s == "dc") return SupervisionMode::kDC;
  if (s == "sc") return SupervisionMode::kSC;
  throw std::invalid_argument("unknown supervision mode '" + s + "' (expected c, s, dc or sc)");
}

const char* teacher_set_name(TeacherSet t) {
  switch (t) {
    case TeacherSet::kO: return "O";
    case TeacherSet::kV: return "V";
    case TeacherSet::kC: return "C";
    case TeacherSet::kE: return "E";
  }
  throw std::logic_error("teacher_set_name: bad enum value");
}

TeacherSet teacher_set_from_name(const std::string& s) {
  if (s == "O") return TeacherSet::kO;
  if (s == "V") return TeacherSet::kV;
  if (s == "C") return TeacherSet::kC;
  if (s == "E") return TeacherSet::kE;
  throw std::invalid_argument("unknown teacher set '" + s + "' (expected O, V, C or E)");
}

std::string model_name(int resolution, SupervisionMode mode, TeacherSet teachers) {
  return "S-" + std::to_string(resolution) + "-" + mode_name(mode) + "-" +
         teacher_set_name(teachers);
}

void validate(const DistillConfig& cfg) {
  if (!resolution_supported(cfg.resolution))
    throw std::invalid_argument("distill config: unsupported resolution " +
                                std::to_string(cfg.resolution));
  if (cfg.temperature <= 0.0)
    throw std::invalid_argument("distill config: temperature must be positive");
  if (cfg.lambda < 0.0)
    throw std::invalid_argument("distill config: lambda must be non-negative");
  if (cfg.lr <= 0.0) throw std::invalid_argument("distill config: learning rate must be positive");
  if (cfg.batch_size < 2)
    throw std::invalid_argument("distill config: batch size must be at least 2");
  if (cfg.epochs_pretrain < 0 || cfg.epochs_main < 1)
    throw std::invalid_argument("distill config: epochs_pretrain >= 0 and epochs_main >= 1");
  const bool has_teacher = cfg.teacher_set != TeacherSet::kO;
  if (cfg.mode == SupervisionMode::kC && has_teacher)
    throw std::invalid_argument("distill config: mode c takes no teacher (use teacher set O)");
  if (cfg.mode != SupervisionMode::kC && !has_teacher)
    throw std::invalid_argument("distill config: mode " + std::string(mode_name(cfg.mode)) +
                                " needs a teacher set other than O");
}

std::string TrainReport::to_text() const {
  std::string out;
  char line[160];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof(line), "epoch=%d C=%.6f D_or_R=%.6f total=%.6f acc=%.6f\n", e.epoch,
                  e.classification, e.auxiliary, e.total, e.accuracy);
    out += line;
  }
  return out;
}

void write_train_report(const std::string& path, const TrainReport& report) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write training report: " + path);
  f << report.to_text();
  if (!f) throw std::runtime_error("short write on training report: " + path);
}

std::vector<int> class_ids(const DatasetIndex& index, Split split) {
  return index.identities(split);
}

namespace {

int dense_label(const std::vector<int>& ids, int identity) {
  auto it = std::lower_bound(ids.begin(), ids.end(), identity);
  if (it == ids.end() || *it != identity)
    throw std::runtime_error("dataset: identity " + std::to_string(identity) +
                             " missing from its split's class list");
  return static_cast<int>(it - ids.begin());
}

bool sample_passes(int sample, int train_cut, SampleFilter filter) {
  switch (filter) {
    case SampleFilter::kTrain: return sample < train_cut;
    case SampleFilter::kEval: return sample >= train_cut;
    case SampleFilter::kAll: return true;
  }
  return false;
}

TrainSet stack_entries(const DatasetIndex& index, const std::vector<const ManifestEntry*>& picked,
                       const std::vector<int>& ids, const char* where) {
  if (picked.empty()) throw std::runtime_error(std::string(where) + ": no matching images");
  std::vector<Tensor<float>> images;
  images.reserve(picked.size());
  for (const auto* e : picked) images.push_back(index.load_image(*e));
  const int h = images[0].dim(1), w = images[0].dim(2);
  const int n = static_cast<int>(images.size());
  TrainSet set;
  set.inputs = Tensor<float>::zeros({n, 1, h, w});
  set.labels.resize(n);
  set.num_classes = static_cast<int>(ids.size());
  const size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    if (images[i].dim(1) != h || images[i].dim(2) != w)
      throw std::runtime_error(std::string(where) + ": mixed image sizes in one set");
    std::copy(images[i].data(), images[i].data() + plane, set.inputs.data() + plane * i);
    set.labels[i] = dense_label(ids, picked[i]->identity);
  }
  return set;
}

}  // namespace

TrainSet load_original_set(const DatasetIndex& index, Split split, SampleFilter filter) {
  const std::vector<int> ids = index.identities(split);
  const int cut = static_cast<int>(std::floor(0.8 * index.samples_per_identity()));
  std::vector<const ManifestEntry*> picked;
  for (const auto* e : index.originals(split))
    if (sample_passes(e->sample, cut, filter)) picked.push_back(e);
  TrainSet set = stack_entries(index, picked, ids, "load_original_set");
  set.parent_index.resize(picked.size());
  std::iota(set.parent_index.begin(), set.parent_index.end(), 0);
  return set;
}

TrainSet load_degraded_set(const DatasetIndex& index, Split split, int resolution,
                           SampleFilter filter) {
  const std::vector<int> ids = index.identities(split);
  const int cut = static_cast<int>(std::floor(0.8 * index.samples_per_identity()));

  // Position of each surviving original, in the same order load_original_set
  // uses, so parent_index lines up with that set.
  std::map<std::pair<int, int>, int> parent_of;
  for (const auto* e : index.originals(split))
    if (sample_passes(e->sample, cut, filter))
      parent_of.emplace(std::make_pair(e->identity, e->sample),
                        static_cast<int>(parent_of.size()));

  std::vector<const ManifestEntry*> picked;
  for (const auto* e : index.degraded(split, resolution))
    if (sample_passes(e->sample, cut, filter)) picked.push_back(e);
  if (picked.empty())
    throw std::runtime_error("load_degraded_set: split " + std::string(split_name(split)) +
                             " has no degraded views at resolution " + std::to_string(resolution));

  TrainSet set = stack_entries(index, picked, ids, "load_degraded_set");
  set.parent_index.resize(picked.size());
  for (size_t i = 0; i < picked.size(); ++i) {
    auto it = parent_of.find({picked[i]->identity, picked[i]->sample});
    if (it == parent_of.end())
      throw std::runtime_error("load_degraded_set: degraded view without a source original");
    set.parent_index[i] = it->second;
  }
  return set;
}

Tensor<float> onehot_labels(const std::vector<int>& labels, int num_classes) {
  const int n = static_cast<int>(labels.size());
  Tensor<float> out = Tensor<float>::zeros({n, num_classes});
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("onehot_labels: label " + std::to_string(labels[i]) +
                                  " outside [0, " + std::to_string(num_classes) + ")");
    out.data()[static_cast<size_t>(i) * num_classes + labels[i]] = 1.0f;
  }
  return out;
}

Tensor<float> gather_rows(const Tensor<float>& stacked, const std::vector<int>& rows) {
  if (!stacked.defined() || stacked.rank() < 1)
    throw std::invalid_argument("gather_rows: undefined input");
  const int n = stacked.dim(0);
  std::vector<int> shape = stacked.shape();
  shape[0] = static_cast<int>(rows.size());
  Tensor<float> out = Tensor<float>::zeros(shape);
  const size_t row_elems = stacked.numel() / n;
  for (size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] < 0 || rows[j] >= n)
      throw std::invalid_argument("gather_rows: row " + std::to_string(rows[j]) +
                                  " outside [0, " + std::to_string(n) + ")");
    std::copy(stacked.data() + row_elems * rows[j], stacked.data() + row_elems * (rows[j] + 1),
              out.data() + row_elems * j);
  }
  return out;
}

TrainReport train_classifier(Model<float>& net, const TrainSet& data, int epochs, double lr,
                             int batch_size, uint64_t seed, const std::string& report_name) {
  check_train_set(data, "train_classifier");
  if (epochs < 1) throw std::invalid_argument("train_classifier: need at least 1 epoch");
  const auto start = std::chrono::steady_clock::now();

  auto params = net.trainable();
  const Tensor<float> onehot = onehot_labels(data.labels, data.num_classes);
  const float flr = static_cast<float>(lr);

  TrainReport report;
  report.model_name = report_name;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng rng(derive_seed(seed, "epoch", static_cast<uint64_t>(epoch)));
    EpochAccum acc;
    for (const auto& rows : make_batches(data.size(), batch_size, rng)) {
      Tensor<float> x = gather_rows(data.inputs, rows);
      Tensor<float> t = gather_rows(onehot, rows);
      Tape<float> tape;
      auto fwd = net.forward(x, &tape, true);
      Tensor<float> loss = soft_cross_entropy(fwd.output, t, 1.0f, &tape);
      const double l = loss.item();
      check_finite(l, report_name, epoch);
      acc.add(l, 0.0, l, fwd.output, data.labels, rows);
      backward(loss, tape);
      sgd_step(params, flr);
    }
    report.epochs.push_back(acc.record(epoch));
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

TrainReport finetune_teacher_softmax(TeacherHandle<float>& teacher,
                                     const std::vector<int>& private_ids,
                                     const std::vector<int>& public_ids,
                                     const Tensor<float>& public_features,
                                     const std::vector<int>& labels, int num_classes, int epochs,
                                     double lr, int batch_size, uint64_t seed) {
  std::vector<int> a = private_ids, b = public_ids, overlap;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(overlap));
  if (!overlap.empty())
    throw std::invalid_argument(
        "finetune_teacher_softmax: private and public identity sets overlap (identity " +
        std::to_string(overlap.front()) + ")");
  if (!public_features.defined() || public_features.rank() != 2 ||
      public_features.dim(1) != teacher.feature_dim)
    throw std::invalid_argument(
        "finetune_teacher_softmax: features must be (N, " + std::to_string(teacher.feature_dim) +
        ")");

  Model<float> head(head_spec("finetuned_head", teacher.feature_dim, num_classes),
                    derive_seed(seed, "finetuned-head", 0));
  TrainSet data{public_features, labels, {}, num_classes};
  TrainReport report =
      train_classifier(head, data, epochs, lr, batch_size, seed, "teacher-finetune");
  teacher.finetuned_head = std::move(head);
  return report;
}

TrainReport train_adapter(AdapterModule<float>& adapter, const Tensor<float>& teacher_feats,
                          const Tensor<float>& soft_targets, const std::vector<int>& labels,
                          int num_classes, const DistillConfig& cfg, int epochs) {
  TrainSet data{teacher_feats, labels, {}, num_classes};
  check_train_set(data, "train_adapter");
  if (epochs < 1) throw std::invalid_argument("train_adapter: need at least 1 epoch");
  if (!soft_targets.defined() || soft_targets.rank() != 2 ||
      soft_targets.dim(0) != data.size() || soft_targets.dim(1) != num_classes)
    throw std::invalid_argument("train_adapter: soft targets must be (N, num_classes)");
  if (teacher_feats.dim(1) != adapter.in_dim)
    throw std::invalid_argument("train_adapter: feature width " +
                                std::to_string(teacher_feats.dim(1)) +
                                " does not match the adapter input " +
                                std::to_string(adapter.in_dim));
  const auto start = std::chrono::steady_clock::now();

  auto params = adapter.net.trainable();
  const Tensor<float> onehot = onehot_labels(labels, num_classes);
  const float flr = static_cast<float>(cfg.lr);
  const float lambda = static_cast<float>(cfg.lambda);
  const float temperature = static_cast<float>(cfg.temperature);

  TrainReport report;
  report.model_name = "adapter";
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "adapter-epoch", static_cast<uint64_t>(epoch)));
    EpochAccum acc;
    for (const auto& rows : make_batches(data.size(), cfg.batch_size, rng)) {
      Tensor<float> x = gather_rows(teacher_feats, rows);
      Tensor<float> t = gather_rows(onehot, rows);
      Tensor<float> s = gather_rows(soft_targets, rows);
      Tape<float> tape;
      auto losses = adapter_objective_on_features(adapter, x, t, s, lambda, temperature,
                                                  cfg.literal_temperature_scaling, &tape, true);
      const double l = losses.total.item();
      check_finite(l, "train_adapter", epoch);
      acc.add(losses.classification.item(), losses.auxiliary.item(), l, losses.logits, labels,
              rows);
      backward(losses.total, tape);
      sgd_step(params, flr);
    }
    report.epochs.push_back(acc.record(epoch));
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {

TrainReport run_student_loop(StudentModel<float>& student, const TrainSet& lr_set,
                             const Tensor<float>& mimic_per_parent, SupervisionMode mode,
                             const DistillConfig& cfg, int epochs, const char* epoch_stream,
                             std::string report_name) {
  check_train_set(lr_set, "train_student");
  const bool needs_mimic = mode != SupervisionMode::kC;
  if (needs_mimic) {
    if (!mimic_per_parent.defined() || mimic_per_parent.rank() != 2)
      throw std::invalid_argument("train_student: mode " + std::string(mode_name(mode)) +
                                  " needs per-source mimic targets");
    if (static_cast<int>(lr_set.parent_index.size()) != lr_set.size())
      throw std::invalid_argument("train_student: training set lacks source indices");
    for (int p : lr_set.parent_index)
      if (p < 0 || p >= mimic_per_parent.dim(0))
        throw std::invalid_argument("train_student: source index " + std::to_string(p) +
                                    " outside the mimic target rows");
  }
  const auto start = std::chrono::steady_clock::now();

  auto params = student.net.trainable();
  const Tensor<float> onehot = onehot_labels(lr_set.labels, lr_set.num_classes);
  const float flr = static_cast<float>(cfg.lr);

  TrainReport report;
  report.model_name = std::move(report_name);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch_stream, static_cast<uint64_t>(epoch)));
    EpochAccum acc;
    for (const auto& rows : make_batches(lr_set.size(), cfg.batch_size, rng)) {
      Tensor<float> x = gather_rows(lr_set.inputs, rows);
      Tensor<float> t = gather_rows(onehot, rows);
      Tensor<float> m;
      if (needs_mimic) {
        std::vector<int> parents(rows.size());
        for (size_t j = 0; j < rows.size(); ++j) parents[j] = lr_set.parent_index[rows[j]];
        m = gather_rows(mimic_per_parent, parents);
      }
      Tape<float> tape;
      auto losses = student_objective(student, x, t, m, mode, &tape, true);
      const double l = losses.total.item();
      check_finite(l, report.model_name, epoch);
      acc.add(losses.classification.item(), losses.auxiliary.item(), l, losses.logits,
              lr_set.labels, rows);
      backward(losses.total, tape);
      sgd_step(params, flr);
    }
    report.epochs.push_back(acc.record(epoch));
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

TrainReport pretrain_student(StudentModel<float>& student, const TrainSet& lr_set,
                             const DistillConfig& cfg) {
  validate(cfg);
  if (cfg.epochs_pretrain < 1)
    throw std::invalid_argument("pretrain_student: epochs_pretrain must be at least 1");
  return run_student_loop(student, lr_set, Tensor<float>(), SupervisionMode::kC, cfg,
                          cfg.epochs_pretrain, "student-pretrain-epoch",
                          model_name(cfg.resolution, cfg.mode, cfg.teacher_set) + "-pretrain");
}

TrainReport train_student(StudentModel<float>& student, const TrainSet& lr_set,
                          const Tensor<float>& mimic_per_parent, const DistillConfig& cfg) {
  validate(cfg);
  return run_student_loop(student, lr_set, mimic_per_parent, cfg.mode, cfg, cfg.epochs_main,
                          "student-epoch",
                          model_name(cfg.resolution, cfg.mode, cfg.teacher_set));
}

}  // namespace bridgekd
