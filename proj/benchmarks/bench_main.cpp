#include <benchmark/benchmark.h>

#include <vector>

#include "bridgekd/datagen.hpp"
#include "bridgekd/distill.hpp"
#include "bridgekd/eval.hpp"
#include "bridgekd/ops.hpp"
#include "bridgekd/rng.hpp"
#include "bridgekd/tape.hpp"
#include "bridgekd/zoo.hpp"

using namespace bridgekd;

namespace {

Tensor<float> random_images(int n, int size, uint64_t seed) {
  Tensor<float> x({n, 1, size, size});
  Rng rng(seed);
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform());
  return x;
}

void BM_StudentForward(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  StudentModel<float> student = build_student<float>(res, 30, 1);
  Tensor<float> x = random_images(1, res, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(student.net.forward(x, nullptr, false).output.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_StudentForward)->Arg(16)->Arg(32)->Arg(64)->Arg(96);

void BM_TeacherForward(benchmark::State& state) {
  TeacherHandle<float> teacher = build_teacher<float>(256, 20, 64, 1);
  Tensor<float> x = random_images(1, 64, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(teacher.features(x).data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_TeacherForward);

void BM_AdapterForward(benchmark::State& state) {
  AdapterModule<float> adapter = build_adapter<float>(256, 30, 1);
  Tensor<float> feats({8, 256});
  Rng rng(7);
  for (auto& v : feats.values()) v = static_cast<float>(rng.normal());
  for (auto _ : state) {
    benchmark::DoNotOptimize(adapter.features(feats).data());
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_AdapterForward);

void BM_StudentTrainStep(benchmark::State& state) {
  StudentModel<float> student = build_student<float>(16, 30, 1);
  Tensor<float> x = random_images(8, 16, 7);
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) labels.push_back(i % 30);
  Tensor<float> onehot = onehot_labels(labels, 30);
  Tensor<float> mimic({8, 128});
  Rng rng(9);
  for (auto& v : mimic.values()) v = static_cast<float>(rng.normal());
  auto params = student.net.trainable();
  for (auto _ : state) {
    Tape<float> tape;
    StageLosses<float> losses =
        student_objective<float>(student, x, onehot, mimic, SupervisionMode::kSC, &tape, true);
    tape.backward(losses.total);
    sgd_step(params, 0.001f);
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_StudentTrainStep);

void BM_DegradeImage(benchmark::State& state) {
  IdentityParams identity = synth_identities(1, 3)[0];
  Tensor<float> hr = render_hr(identity, 11, 64);
  DegradeConfig cfg;
  cfg.count = 1;
  cfg.target_resolution = 16;
  uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(degrade(hr, cfg, ++seed));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DegradeImage);

void BM_RocCurve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(123);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < n; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(i % 2);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(roc_curve(scores, labels).auc);
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_RocCurve)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
