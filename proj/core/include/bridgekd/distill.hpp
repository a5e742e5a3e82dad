#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridgekd/datagen.hpp"
#include "bridgekd/ops.hpp"
#include "bridgekd/zoo.hpp"

namespace bridgekd {

// Two-stage knowledge transfer.
//
// Stage one adapts a frozen high-resolution teacher to the public identities:
// a softmax head is fine-tuned on the teacher's features, then a small
// adapter network learns to compress those features while matching both hard
// labels (classification term C) and the head's temperature-softened
// predictive distribution (distillation term D), weighted total = C + lambda*D.
//
// Stage two trains the compact low-resolution student: classification over
// degraded views (term C) plus regression of its embedding onto the adapted
// teacher feature of the source image (term R), total = C + R.

// How the student is supervised. The string forms appear in model names
// (S-<resolution>-<mode>-<teachers>) and in configuration files.
//   c  - classification only (no teacher involved)
//   s  - embedding regression only
//   dc - classification + regression onto raw teacher features (no adapter;
//        requires the student embedding width to equal the teacher's)
//   sc - classification + regression onto adapted features (the full method)
enum class SupervisionMode { kC, kS, kDC, kSC };

// Which pretrained teachers feed the transfer. O means none (plain baseline),
// V and C are independently trained teachers, E concatenates both.
enum class TeacherSet { kO, kV, kC, kE };

const char* mode_name(SupervisionMode m);
SupervisionMode mode_from_name(const std::string& s);
const char* teacher_set_name(TeacherSet t);
TeacherSet teacher_set_from_name(const std::string& s);

// "S-<resolution>-<mode>-<teachers>"
std::string model_name(int resolution, SupervisionMode mode, TeacherSet teachers);

struct DistillConfig {
  SupervisionMode mode = SupervisionMode::kSC;
  TeacherSet teacher_set = TeacherSet::kV;
  int resolution = 16;
  double lambda = 1.0;       // weight of the distillation term in stage one
  double temperature = 4.0;  // softening temperature for soft targets
  double lr = 0.001;
  int batch_size = 32;
  int epochs_pretrain = 3;   // classification-only warm-up of the student
  int epochs_main = 12;
  uint64_t seed = 1;
  // Alternative soft-target reading: divide the teacher's softmax output by
  // the temperature instead of softening both logit sets. Equivalent to
  // scaling the distillation term by 1/T with unsoftened distributions.
  bool literal_temperature_scaling = false;
};

// Throws on contradictory settings (non-positive temperature, negative
// lambda, unsupported resolution, mode/teacher combinations that cannot run:
// mode c must use teacher set O, every other mode needs a real teacher).
void validate(const DistillConfig& cfg);

// ----- training reports -----

struct EpochRecord {
  int epoch = 0;            // 1-based
  double classification = 0.0;
  double auxiliary = 0.0;   // D in stage one, R in stage two, 0 when unused
  double total = 0.0;
  double accuracy = 0.0;    // training accuracy over the epoch
};

struct TrainReport {
  std::string model_name;
  std::vector<EpochRecord> epochs;
  double wall_clock_seconds = 0.0;  // never serialized; reports must be reproducible

  // One line per epoch: "epoch=<n> C=<f> D_or_R=<f> total=<f> acc=<f>"
  std::string to_text() const;
};

void write_train_report(const std::string& path, const TrainReport& report);

// ----- in-memory training sets -----

// Stacked inputs plus dense labels. For degraded sets, parent_index[i] points
// into the ordered list of source originals, so per-source teacher targets
// can be gathered per view.
struct TrainSet {
  Tensor<float> inputs;           // (N,1,H,W) images or (N,D) features
  std::vector<int> labels;        // dense, in [0, num_classes)
  std::vector<int> parent_index;  // size N
  int num_classes = 0;

  int size() const { return inputs.defined() ? inputs.dim(0) : 0; }
};

// Which within-identity samples to take: the first 80% (rounded down) of each
// identity's samples are the training portion, the rest evaluate.
enum class SampleFilter { kTrain, kEval, kAll };

// Dense class order for a split: its identities, sorted ascending.
std::vector<int> class_ids(const DatasetIndex& index, Split split);

TrainSet load_original_set(const DatasetIndex& index, Split split, SampleFilter filter);
TrainSet load_degraded_set(const DatasetIndex& index, Split split, int resolution,
                           SampleFilter filter);

Tensor<float> onehot_labels(const std::vector<int>& labels, int num_classes);
Tensor<float> gather_rows(const Tensor<float>& stacked, const std::vector<int>& rows);

// ----- stage one: teacher adaptation -----

// Frozen source of stage-one supervision: one or two teachers plus the head
// fine-tuned on their (concatenated) features.
template <typename T>
struct TeacherContext {
  std::vector<TeacherHandle<T>*> teachers;
  Model<T>* head = nullptr;

  int feature_dim() const {
    int d = 0;
    for (auto* t : teachers) d += t->feature_dim;
    return d;
  }

  Tensor<T> features(const Tensor<T>& images) {
    if (teachers.empty()) throw std::logic_error("teacher context: no teachers attached");
    return teachers.size() == 1 ? teachers[0]->features(images)
                                : ensemble_features(teachers, images);
  }

  Tensor<T> head_logits(const Tensor<T>& feats) {
    if (!head)
      throw std::logic_error(
          "stage ordering violation: fine-tune the teacher softmax head before requesting soft "
          "targets");
    return head->forward(feats, nullptr, false).output;
  }
};

// Softened predictive distribution of the fine-tuned head. The literal
// variant keeps the distribution unsoftened; its 1/T factor moves into the
// loss weight (cross entropy is linear in the target).
template <typename T>
Tensor<T> make_soft_targets(TeacherContext<T>& teacher, const Tensor<T>& hr_images, T temperature,
                            bool literal = false) {
  Tensor<T> logits = teacher.head_logits(teacher.features(hr_images));
  return softmax_t<T>(logits, literal ? T(1) : temperature, nullptr);
}

template <typename T>
struct StageLosses {
  Tensor<T> total;
  Tensor<T> classification;
  Tensor<T> auxiliary;
  Tensor<T> logits;  // head outputs of the trained module, for accuracy bookkeeping
};

// Stage-one objective on precomputed teacher signals:
// total = C + lambda * D.
template <typename T>
StageLosses<T> adapter_objective_on_features(AdapterModule<T>& adapter,
                                             const Tensor<T>& teacher_feats,
                                             const Tensor<T>& onehot,
                                             const Tensor<T>& soft_targets, T lambda,
                                             T temperature, bool literal, Tape<T>* tape,
                                             bool train) {
  auto fwd = adapter.net.forward(teacher_feats, tape, train);
  Tensor<T> c = soft_cross_entropy(fwd.output, onehot, T(1), tape);
  Tensor<T> d = literal ? scale(soft_cross_entropy(fwd.output, soft_targets, T(1), tape),
                                T(1) / temperature, tape)
                        : soft_cross_entropy(fwd.output, soft_targets, temperature, tape);
  Tensor<T> total = add(c, scale(d, lambda, tape), tape);
  return {total, c, d, fwd.output};
}

// Convenience form that runs the frozen teacher on a batch of public
// originals first. Requires the fine-tuned head to exist.
template <typename T>
StageLosses<T> adapter_objective(AdapterModule<T>& adapter, TeacherContext<T>& teacher,
                                 const Tensor<T>& hr_batch, const Tensor<T>& onehot, T lambda,
                                 T temperature, bool literal = false, Tape<T>* tape = nullptr,
                                 bool train = false) {
  Tensor<T> feats = teacher.features(hr_batch);
  Tensor<T> soft = make_soft_targets(teacher, hr_batch, temperature, literal);
  return adapter_objective_on_features(adapter, feats, onehot, soft, lambda, temperature, literal,
                                       tape, train);
}

// ----- stage two: student training -----

// total = C + R (or a single term for modes c and s). mimic_targets carries
// one row per batch element: the (adapted) teacher feature of the source
// image behind each degraded view. Must be undefined for mode c.
template <typename T>
StageLosses<T> student_objective(StudentModel<T>& student, const Tensor<T>& images,
                                 const Tensor<T>& onehot, const Tensor<T>& mimic_targets,
                                 SupervisionMode mode, Tape<T>* tape, bool train) {
  const bool needs_mimic = mode != SupervisionMode::kC;
  if (needs_mimic) {
    if (!mimic_targets.defined())
      throw std::invalid_argument("student_objective: mode " + std::string(mode_name(mode)) +
                                  " needs mimic targets");
    if (mimic_targets.rank() != 2 || mimic_targets.dim(1) != student.mimic_dim)
      throw std::invalid_argument(
          "student_objective: mimic target width " + std::to_string(mimic_targets.dim(1)) +
          " does not match the student embedding width " + std::to_string(student.mimic_dim));
  }
  auto fwd = student.net.forward(images, tape, train);
  StageLosses<T> out;
  out.logits = fwd.output;
  switch (mode) {
    case SupervisionMode::kC: {
      out.classification = soft_cross_entropy(fwd.output, onehot, T(1), tape);
      out.auxiliary = Tensor<T>::scalar(T(0));
      out.total = out.classification;
      break;
    }
    case SupervisionMode::kS: {
      out.classification = Tensor<T>::scalar(T(0));
      out.auxiliary = sum_squared_error(fwd.features, mimic_targets, tape);
      out.total = out.auxiliary;
      break;
    }
    case SupervisionMode::kDC:
    case SupervisionMode::kSC: {
      out.classification = soft_cross_entropy(fwd.output, onehot, T(1), tape);
      out.auxiliary = sum_squared_error(fwd.features, mimic_targets, tape);
      out.total = add(out.classification, out.auxiliary, tape);
      break;
    }
  }
  return out;
}

// ----- training loops (single-threaded, deterministic) -----

// Plain classifier training: cross entropy against one-hot labels. Works for
// any model whose input matches data.inputs (teacher pretraining, fine-tuned
// softmax heads, identification heads).
TrainReport train_classifier(Model<float>& net, const TrainSet& data, int epochs, double lr,
                             int batch_size, uint64_t seed, const std::string& report_name);

// Fine-tunes a public-class head on frozen teacher features and attaches it
// to the teacher. The private and public identity sets must be disjoint.
TrainReport finetune_teacher_softmax(TeacherHandle<float>& teacher,
                                     const std::vector<int>& private_ids,
                                     const std::vector<int>& public_ids,
                                     const Tensor<float>& public_features,
                                     const std::vector<int>& labels, int num_classes, int epochs,
                                     double lr, int batch_size, uint64_t seed);

// Stage-one adapter training over precomputed teacher features and soft
// targets for the whole public training set.
TrainReport train_adapter(AdapterModule<float>& adapter, const Tensor<float>& teacher_feats,
                          const Tensor<float>& soft_targets, const std::vector<int>& labels,
                          int num_classes, const DistillConfig& cfg, int epochs);

// Classification-only warm-up of the student on the degraded set.
TrainReport pretrain_student(StudentModel<float>& student, const TrainSet& lr_set,
                             const DistillConfig& cfg);

// Stage-two training. mimic_per_parent holds one row per source original
// (undefined for mode c); rows are gathered through lr_set.parent_index.
TrainReport train_student(StudentModel<float>& student, const TrainSet& lr_set,
                          const Tensor<float>& mimic_per_parent, const DistillConfig& cfg);

}  // namespace bridgekd
