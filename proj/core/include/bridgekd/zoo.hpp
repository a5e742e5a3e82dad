#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridgekd/checkpoint.hpp"
#include "bridgekd/model.hpp"
#include "bridgekd/model_spec.hpp"

namespace bridgekd {

// Resolutions the compact student accepts. Global average pooling makes the
// trunk size-agnostic; this list is the contract the pipeline validates
// against.
inline const std::vector<int>& supported_resolutions() {
  static const std::vector<int> r = {96, 64, 32, 16};
  return r;
}

inline bool resolution_supported(int p) {
  for (int r : supported_resolutions())
    if (r == p) return true;
  return false;
}

// Compact recognizer: ten conv layers alternating 3x3 and 1x1, three 2x2 max
// pools, two identity skips, batchnorm after every conv, global average
// pooling, then fc -> relu -> fc into the embedding ("mimic") layer and a
// softmax head on top. Roughly 0.21M parameters at the default embedding
// width, independent of input resolution.
ModelSpec student_spec(int resolution, int num_classes, int mimic_dim = 128);

// Bulky teacher stand-in: five 3x3 conv stages with pooling, then wide fully
// connected layers. The final fc before the head is the teacher feature
// f_t(I). arch_scale shrinks the widths for fast tests.
ModelSpec teacher_spec(int feature_dim, int num_classes, double arch_scale = 1.0);

// Bridge adapter f_a: two fully connected layers (hidden 512, output 128 by
// default) on top of frozen teacher features, plus a softmax head that is
// only used while the adapter trains.
ModelSpec adapter_spec(int teacher_feature_dim, int num_classes, int hidden_dim = 512,
                       int out_dim = 128);

// The adapter's feature layers alone, the shape its checkpoints take: the
// softmax head is training scaffolding and is not persisted.
ModelSpec adapter_feature_spec(int teacher_feature_dim, int hidden_dim = 512, int out_dim = 128);

// A bare linear classifier over fixed features (fine-tuned teacher softmax,
// identification heads).
ModelSpec head_spec(const std::string& name, int in_dim, int num_classes);

// Student plus the metadata the training stages need.
template <typename T>
struct StudentModel {
  Model<T> net;
  int input_resolution = 0;
  int mimic_dim = 0;
  int num_classes = 0;
};

template <typename T>
StudentModel<T> build_student(int resolution, int num_classes, uint64_t seed, int mimic_dim = 128) {
  if (!resolution_supported(resolution))
    throw std::invalid_argument("build_student: unsupported resolution " +
                                std::to_string(resolution));
  if (num_classes < 2) throw std::invalid_argument("build_student: need at least 2 classes");
  ModelSpec spec = student_spec(resolution, num_classes, mimic_dim);
  validate_spec(spec, resolution, resolution);
  return {Model<T>(spec, seed), resolution, mimic_dim, num_classes};
}

// Frozen high-resolution teacher with an optional fine-tuned softmax head on
// the public classes. The private head used during pretraining stays in the
// net; features come from the penultimate fc.
template <typename T>
struct TeacherHandle {
  Model<T> net;
  int feature_dim = 0;
  int input_resolution = 0;
  std::optional<Model<T>> finetuned_head;

  Tensor<T> features(const Tensor<T>& images) {
    return net.features_only(images, nullptr, false);
  }

  // Fine-tuned public-class logits; errors until the head exists.
  Tensor<T> public_logits(const Tensor<T>& feats) {
    if (!finetuned_head)
      throw std::logic_error(
          "teacher: softmax head has not been fine-tuned on the public classes yet");
    return finetuned_head->forward(feats, nullptr, false).output;
  }
};

template <typename T>
TeacherHandle<T> build_teacher(int feature_dim, int num_private_classes, int input_resolution,
                               uint64_t seed, double arch_scale = 1.0) {
  ModelSpec spec = teacher_spec(feature_dim, num_private_classes, arch_scale);
  validate_spec(spec, input_resolution, input_resolution);
  return {Model<T>(spec, seed), feature_dim, input_resolution, std::nullopt};
}

// Adapter with its training-time head. features() is what stage two consumes;
// the head is dropped when the adapter is checkpointed.
template <typename T>
struct AdapterModule {
  Model<T> net;
  int in_dim = 0;
  int out_dim = 0;

  Tensor<T> features(const Tensor<T>& teacher_feats, Tape<T>* tape = nullptr, bool train = false) {
    return net.features_only(teacher_feats, tape, train);
  }
};

template <typename T>
AdapterModule<T> build_adapter(int teacher_feature_dim, int num_classes, uint64_t seed,
                               int hidden_dim = 512, int out_dim = 128) {
  ModelSpec spec = adapter_spec(teacher_feature_dim, num_classes, hidden_dim, out_dim);
  validate_spec(spec, 0, 0);
  return {Model<T>(spec, seed), teacher_feature_dim, out_dim};
}

// Persists only the feature layers; the head entries are filtered out so a
// checkpoint loads into the adapter_feature_spec shape.
template <typename T>
void save_adapter(const std::string& path, AdapterModule<T>& adapter) {
  std::vector<CheckpointTensor> recs;
  for (auto& [name, tensor] : adapter.net.named_state())
    if (name.find(".head.") == std::string::npos) recs.push_back(to_record(name, tensor));
  save_checkpoint(path, recs);
}

template <typename T>
AdapterModule<T> load_adapter(const std::string& path, int teacher_feature_dim,
                              int hidden_dim = 512, int out_dim = 128) {
  ModelSpec spec = adapter_feature_spec(teacher_feature_dim, hidden_dim, out_dim);
  validate_spec(spec, 0, 0);
  AdapterModule<T> adapter{Model<T>(spec, 0), teacher_feature_dim, out_dim};
  load_model(path, adapter.net);
  return adapter;
}

// Concatenated features from several teachers, in the order given. All
// teachers must see the same batch; output dim is the sum of feature dims.
template <typename T>
Tensor<T> ensemble_features(std::vector<TeacherHandle<T>*> teachers, const Tensor<T>& images) {
  if (teachers.empty()) throw std::invalid_argument("ensemble_features: no teachers");
  std::vector<Tensor<T>> feats;
  int total = 0;
  for (auto* t : teachers) {
    feats.push_back(t->features(images));
    total += t->feature_dim;
  }
  const int N = images.dim(0);
  Tensor<T> out({N, total});
  for (int n = 0; n < N; ++n) {
    T* dst = out.data() + static_cast<size_t>(n) * total;
    for (const auto& f : feats) {
      const int d = f.dim(1);
      std::copy(f.data() + static_cast<size_t>(n) * d, f.data() + static_cast<size_t>(n + 1) * d,
                dst);
      dst += d;
    }
  }
  return out;
}

template <typename T>
int64_t param_count(Model<T>& model) {
  return model.param_count();
}

}  // namespace bridgekd
