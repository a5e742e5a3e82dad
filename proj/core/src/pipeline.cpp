#include "bridgekd/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <unistd.h>

#include "bridgekd/checkpoint.hpp"
#include "bridgekd/datagen.hpp"
#include "bridgekd/distill.hpp"
#include "bridgekd/rng.hpp"
#include "bridgekd/zoo.hpp"

namespace fs = std::filesystem;

namespace bridgekd {

namespace {

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("short write to " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

DatasetIndex open_dataset(const RunConfig& config) {
  try {
    return load_dataset(config.dataset_dir);
  } catch (const std::exception& e) {
    throw std::runtime_error("dataset at " + config.dataset_dir + " unavailable (" + e.what() +
                             "); run gen-data first");
  }
}

uint64_t teacher_seed(const RunConfig& config, const std::string& name) {
  return derive_seed(config.seed, ("teacher-" + name).c_str(), 0);
}

TeacherHandle<float> make_teacher(const RunConfig& config, const std::string& name, int classes) {
  return build_teacher<float>(config.teacher_feature_dim, classes, config.teacher_resolution,
                              teacher_seed(config, name), config.teacher_arch_scale);
}

std::string resolve_teacher_run(const RunConfig& config) {
  return config.distill_teacher_run == "self" ? config.out_dir : config.distill_teacher_run;
}

TeacherHandle<float> load_teacher(const RunConfig& config, const RunPaths& teacher_paths,
                                  const std::string& name, int private_classes) {
  std::string path = teacher_paths.checkpoint("teacher-" + name + ".ckpt");
  if (!fs::exists(path)) {
    throw std::runtime_error("missing teacher checkpoint " + path + "; run train-teacher first");
  }
  TeacherHandle<float> teacher = make_teacher(config, name, private_classes);
  load_model(path, teacher.net);
  return teacher;
}

// Teachers for the configured set, plus the fine-tuned public head once
// attach_public_head ran. The head always hangs off the first handle; for an
// ensemble it reads the concatenated features.
struct StageOneAssets {
  std::vector<TeacherHandle<float>> teachers;

  int concat_dim() const {
    int d = 0;
    for (const auto& t : teachers) d += t.feature_dim;
    return d;
  }

  TeacherContext<float> context() {
    TeacherContext<float> ctx;
    for (auto& t : teachers) ctx.teachers.push_back(&t);
    if (!teachers.empty() && teachers.front().finetuned_head) {
      ctx.head = &*teachers.front().finetuned_head;
    }
    return ctx;
  }
};

StageOneAssets load_stage_one(const RunConfig& config, const RunPaths& teacher_paths,
                              int private_classes) {
  auto names = teacher_names_for(config.distill_teacher);
  if (names.empty()) {
    throw std::invalid_argument("teacher set O has no teachers; nothing to load");
  }
  StageOneAssets assets;
  assets.teachers.reserve(names.size());
  for (const auto& name : names) {
    assets.teachers.push_back(load_teacher(config, teacher_paths, name, private_classes));
  }
  return assets;
}

void attach_public_head(StageOneAssets& assets, const RunConfig& config,
                        const RunPaths& teacher_paths, int public_classes) {
  std::string path =
      teacher_paths.checkpoint("teacher-" + config.distill_teacher + "-head.ckpt");
  if (!fs::exists(path)) {
    throw std::runtime_error("missing fine-tuned head " + path + "; run adapt first");
  }
  Model<float> head(head_spec("finetuned_head", assets.concat_dim(), public_classes), 0);
  load_model(path, head);
  assets.teachers.front().finetuned_head = std::move(head);
}

void check_hr_resolution(const RunConfig& config, const Tensor<float>& inputs) {
  if (inputs.dim(2) != config.teacher_resolution || inputs.dim(3) != config.teacher_resolution) {
    throw std::invalid_argument("teacher.resolution " + std::to_string(config.teacher_resolution) +
                                " does not match the dataset originals (" +
                                std::to_string(inputs.dim(2)) + ")");
  }
}

Tensor<float> trunk_features_batched(TeacherHandle<float>& teacher, const Tensor<float>& images,
                                     int batch) {
  const int n = images.dim(0);
  if (n == 0) throw std::invalid_argument("trunk_features_batched: empty image set");
  Tensor<float> out;
  for (int at = 0; at < n; at += batch) {
    std::vector<int> rows;
    for (int i = at; i < std::min(at + batch, n); ++i) rows.push_back(i);
    Tensor<float> feats = teacher.features(gather_rows(images, rows));
    if (!out.defined()) out = Tensor<float>({n, feats.dim(1)});
    const int width = feats.dim(1);
    for (size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(feats.data() + i * width, width,
                  out.data() + static_cast<size_t>(rows[i]) * width);
    }
  }
  return out;
}

Tensor<float> concat_cols(const std::vector<Tensor<float>>& parts) {
  if (parts.size() == 1) return parts[0];
  const int n = parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) total += p.dim(1);
  Tensor<float> out({n, total});
  for (int row = 0; row < n; ++row) {
    float* dst = out.data() + static_cast<size_t>(row) * total;
    for (const auto& p : parts) {
      const int width = p.dim(1);
      std::copy_n(p.data() + static_cast<size_t>(row) * width, width, dst);
      dst += width;
    }
  }
  return out;
}

Tensor<float> concat_rows(const Tensor<float>& a, const Tensor<float>& b) {
  const int width = a.dim(1);
  if (b.dim(1) != width) throw std::invalid_argument("concat_rows: width mismatch");
  Tensor<float> out({a.dim(0) + b.dim(0), width});
  std::copy_n(a.data(), static_cast<size_t>(a.dim(0)) * width, out.data());
  std::copy_n(b.data(), static_cast<size_t>(b.dim(0)) * width,
              out.data() + static_cast<size_t>(a.dim(0)) * width);
  return out;
}

// Loads a cached tensor or computes and publishes it via atomic rename, so
// concurrent grid cells can share one file. Reruns produce identical bytes.
Tensor<float> cached_tensor(const std::string& path,
                            const std::function<Tensor<float>()>& compute) {
  if (fs::exists(path)) {
    auto records = load_checkpoint(path);
    if (records.size() != 1 || records[0].name != "features") {
      throw std::runtime_error("unexpected cache contents in " + path);
    }
    return from_record<float>(records[0]);
  }
  Tensor<float> value = compute();
  std::string tmp = path + ".tmp." + std::to_string(::getpid());
  save_checkpoint(tmp, {to_record("features", value)});
  fs::rename(tmp, path);
  return value;
}

// Frozen-teacher features for a fixed image set, cached under the teacher
// run. The key pins the dataset manifest, the set tag and every trunk's
// parameters.
Tensor<float> cached_trunk_features(const RunPaths& teacher_paths, const DatasetIndex& index,
                                    StageOneAssets& assets, const Tensor<float>& images,
                                    const char* tag) {
  uint64_t key = derive_seed(index.manifest_hash(), tag, assets.teachers.size());
  for (auto& t : assets.teachers) key = derive_seed(key, "trunk", t.net.state_hash());
  std::string path = teacher_paths.checkpoint("features-" + hex16(key) + ".ckpt");
  return cached_tensor(path, [&] {
    std::vector<Tensor<float>> parts;
    for (auto& t : assets.teachers) parts.push_back(trunk_features_batched(t, images, 32));
    return concat_cols(parts);
  });
}

int mimic_dim_for(const RunConfig& config) {
  if (config.distill_mode == "dc") {
    int d = 0;
    for (size_t i = 0; i < teacher_names_for(config.distill_teacher).size(); ++i) {
      d += config.teacher_feature_dim;
    }
    return d;
  }
  return config.adapter_out_dim;
}

void write_log(const RunPaths& paths, const std::string& verb, const std::string& line) {
  write_text_file(paths.log(verb + ".log"), line + "\n");
}

TrainReport train_one_teacher(const RunConfig& config, const RunPaths& paths,
                              const TrainSet& private_set, const std::string& name) {
  TeacherHandle<float> teacher = make_teacher(config, name, private_set.num_classes);
  TrainReport report =
      train_classifier(teacher.net, private_set, config.teacher_epochs, config.teacher_lr,
                       config.teacher_batch_size, teacher_seed(config, name), "teacher-" + name);
  save_model(paths.checkpoint("teacher-" + name + ".ckpt"), teacher.net);
  write_train_report(paths.report("teacher-" + name + ".txt"), report);
  return report;
}

}  // namespace

RunPaths RunPaths::create(const std::string& run_dir) {
  RunPaths paths;
  paths.run_dir = run_dir;
  paths.checkpoints_dir = (fs::path(run_dir) / "checkpoints").string();
  paths.reports_dir = (fs::path(run_dir) / "reports").string();
  paths.logs_dir = (fs::path(run_dir) / "logs").string();
  fs::create_directories(paths.checkpoints_dir);
  fs::create_directories(paths.reports_dir);
  fs::create_directories(paths.logs_dir);
  return paths;
}

std::string RunPaths::checkpoint(const std::string& name) const {
  return (fs::path(checkpoints_dir) / name).string();
}

std::string RunPaths::report(const std::string& name) const {
  return (fs::path(reports_dir) / name).string();
}

std::string RunPaths::log(const std::string& name) const {
  return (fs::path(logs_dir) / name).string();
}

std::vector<std::string> teacher_names_for(const std::string& teacher_set) {
  if (teacher_set == "V" || teacher_set == "C") return {teacher_set};
  if (teacher_set == "E") return {"V", "C"};
  if (teacher_set == "O") return {};
  throw std::invalid_argument("unknown teacher set '" + teacher_set + "'");
}

DatasetIndex cmd_gen_data(const RunConfig& config) {
  RunPaths paths = RunPaths::create(config.out_dir);
  DatasetIndex index =
      write_dataset(config.dataset_dir, config.dataset(), derive_seed(config.seed, "dataset", 0));
  char line[256];
  std::snprintf(line, sizeof(line), "gen-data: dir=%s identities=%d entries=%zu manifest=%s",
                config.dataset_dir.c_str(), config.dataset_identities, index.entries().size(),
                hex16(index.manifest_hash()).c_str());
  write_log(paths, "gen-data", line);
  return index;
}

void cmd_train_teacher(const RunConfig& config) {
  RunPaths paths = RunPaths::create(config.out_dir);
  auto names = teacher_names_for(config.distill_teacher);
  if (names.empty()) {
    throw std::invalid_argument("teacher set O trains no teacher; pick V, C or E");
  }
  DatasetIndex index = open_dataset(config);
  TrainSet private_set = load_original_set(index, Split::kPrivate, SampleFilter::kTrain);
  check_hr_resolution(config, private_set.inputs);
  std::string summary = "train-teacher:";
  for (const auto& name : names) {
    TrainReport report = train_one_teacher(config, paths, private_set, name);
    char part[96];
    std::snprintf(part, sizeof(part), " %s acc=%.6f", name.c_str(),
                  report.epochs.back().accuracy);
    summary += part;
  }
  write_log(paths, "train-teacher", summary);
}

void cmd_adapt(const RunConfig& config) {
  RunPaths paths = RunPaths::create(config.out_dir);
  if (config.distill_teacher == "O") {
    throw std::invalid_argument("teacher set O has nothing to adapt; pick V, C or E");
  }
  DatasetIndex index = open_dataset(config);
  RunPaths teacher_paths = RunPaths::create(resolve_teacher_run(config));

  std::vector<int> private_ids = class_ids(index, Split::kPrivate);
  std::vector<int> public_ids = class_ids(index, Split::kPublic);
  StageOneAssets assets =
      load_stage_one(config, teacher_paths, static_cast<int>(private_ids.size()));

  TrainSet public_train = load_original_set(index, Split::kPublic, SampleFilter::kTrain);
  check_hr_resolution(config, public_train.inputs);
  Tensor<float> feats = cached_trunk_features(teacher_paths, index, assets, public_train.inputs,
                                              "public-train-hr");

  TrainReport head_report = finetune_teacher_softmax(
      assets.teachers.front(), private_ids, public_ids, feats, public_train.labels,
      public_train.num_classes, config.adapter_epochs, config.adapter_lr,
      config.adapter_batch_size, derive_seed(config.seed, "finetune-head", 0));
  std::string set_name = config.distill_teacher;
  save_model(paths.checkpoint("teacher-" + set_name + "-head.ckpt"),
             *assets.teachers.front().finetuned_head);
  write_train_report(paths.report("finetune-" + set_name + ".txt"), head_report);

  TeacherContext<float> ctx = assets.context();
  DistillConfig dcfg = config.distill();
  dcfg.lr = config.adapter_lr;
  dcfg.batch_size = config.adapter_batch_size;
  Tensor<float> soft = softmax_t<float>(
      ctx.head_logits(feats),
      dcfg.literal_temperature_scaling ? 1.0f : static_cast<float>(dcfg.temperature), nullptr);

  AdapterModule<float> adapter = build_adapter<float>(
      assets.concat_dim(), public_train.num_classes, derive_seed(config.seed, "adapter-init", 0),
      config.adapter_hidden_dim, config.adapter_out_dim);
  TrainReport adapter_report = train_adapter(adapter, feats, soft, public_train.labels,
                                             public_train.num_classes, dcfg,
                                             config.adapter_epochs);
  save_adapter(paths.checkpoint("adapter-" + set_name + ".ckpt"), adapter);
  write_train_report(paths.report("adapter-" + set_name + ".txt"), adapter_report);

  char line[192];
  std::snprintf(line, sizeof(line), "adapt: teacher=%s head_acc=%.6f adapter_acc=%.6f",
                set_name.c_str(), head_report.epochs.back().accuracy,
                adapter_report.epochs.back().accuracy);
  write_log(paths, "adapt", line);
}

std::string AblationReport::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "case=1 label=head_on_teacher acc=%.6f\n"
                "case=2 label=adapter_hard_only acc=%.6f\n"
                "case=3 label=adapter_full acc=%.6f\n"
                "case=4 label=mixed_union acc=%.6f\n",
                head_on_teacher, adapter_hard_only, adapter_full, mixed_union);
  return buf;
}

AblationReport parse_ablation_text(const std::string& text) {
  AblationReport report;
  std::istringstream in(text);
  std::string line;
  int seen = 0;
  while (std::getline(in, line)) {
    int case_id = 0;
    char label[64];
    double acc = 0.0;
    if (std::sscanf(line.c_str(), "case=%d label=%63s acc=%lf", &case_id, label, &acc) != 3) {
      continue;
    }
    switch (case_id) {
      case 1: report.head_on_teacher = acc; break;
      case 2: report.adapter_hard_only = acc; break;
      case 3: report.adapter_full = acc; break;
      case 4: report.mixed_union = acc; break;
      default: continue;
    }
    ++seen;
  }
  if (seen != 4) throw std::runtime_error("ablation report: expected 4 cases, found " +
                                          std::to_string(seen));
  return report;
}

AblationReport cmd_ablation(const RunConfig& config) {
  RunPaths paths = RunPaths::create(config.out_dir);
  if (config.distill_teacher == "O") {
    throw std::invalid_argument("the compression study needs a teacher; pick V, C or E");
  }
  DatasetIndex index = open_dataset(config);
  RunPaths teacher_paths = RunPaths::create(resolve_teacher_run(config));

  std::vector<int> private_ids = class_ids(index, Split::kPrivate);
  std::vector<int> public_ids = class_ids(index, Split::kPublic);
  StageOneAssets assets =
      load_stage_one(config, teacher_paths, static_cast<int>(private_ids.size()));

  TrainSet public_train = load_original_set(index, Split::kPublic, SampleFilter::kTrain);
  TrainSet public_eval = load_original_set(index, Split::kPublic, SampleFilter::kEval);
  TrainSet private_train = load_original_set(index, Split::kPrivate, SampleFilter::kTrain);
  check_hr_resolution(config, public_train.inputs);
  const int k_public = public_train.num_classes;
  const int k_private = private_train.num_classes;

  Tensor<float> train_feats = cached_trunk_features(teacher_paths, index, assets,
                                                    public_train.inputs, "public-train-hr");
  Tensor<float> eval_feats = cached_trunk_features(teacher_paths, index, assets,
                                                   public_eval.inputs, "public-eval-hr");
  Tensor<float> private_feats = cached_trunk_features(teacher_paths, index, assets,
                                                      private_train.inputs, "private-train-hr");

  DistillConfig dcfg = config.distill();
  dcfg.lr = config.adapter_lr;
  dcfg.batch_size = config.adapter_batch_size;

  AblationReport report;

  // Case 1: the fine-tuned softmax head alone, directly on teacher features.
  TrainReport head_report = finetune_teacher_softmax(
      assets.teachers.front(), private_ids, public_ids, train_feats, public_train.labels,
      k_public, config.adapter_epochs, config.adapter_lr, config.adapter_batch_size,
      derive_seed(config.seed, "finetune-head", 0));
  (void)head_report;
  TeacherContext<float> ctx = assets.context();
  report.head_on_teacher = classification_accuracy(*assets.teachers.front().finetuned_head,
                                                   eval_feats, public_eval.labels,
                                                   config.eval_batch_size);

  Tensor<float> soft = softmax_t<float>(
      ctx.head_logits(train_feats),
      dcfg.literal_temperature_scaling ? 1.0f : static_cast<float>(dcfg.temperature), nullptr);

  // Cases 2 and 3: the same adapter initialization, trained without and with
  // the soft-target term.
  uint64_t adapter_seed = derive_seed(config.seed, "adapter-init", 0);
  {
    AdapterModule<float> adapter = build_adapter<float>(
        assets.concat_dim(), k_public, adapter_seed, config.adapter_hidden_dim,
        config.adapter_out_dim);
    DistillConfig hard = dcfg;
    hard.lambda = 0.0;
    train_adapter(adapter, train_feats, soft, public_train.labels, k_public, hard,
                  config.adapter_epochs);
    report.adapter_hard_only = classification_accuracy(adapter.net, eval_feats,
                                                       public_eval.labels,
                                                       config.eval_batch_size);
  }
  {
    AdapterModule<float> adapter = build_adapter<float>(
        assets.concat_dim(), k_public, adapter_seed, config.adapter_hidden_dim,
        config.adapter_out_dim);
    train_adapter(adapter, train_feats, soft, public_train.labels, k_public, dcfg,
                  config.adapter_epochs);
    report.adapter_full = classification_accuracy(adapter.net, eval_feats, public_eval.labels,
                                                  config.eval_batch_size);
  }

  // Case 4: one classifier over the union of private and public identities,
  // public classes shifted past the private ones.
  {
    TrainSet union_set;
    union_set.inputs = concat_rows(private_feats, train_feats);
    union_set.labels = private_train.labels;
    for (int label : public_train.labels) union_set.labels.push_back(label + k_private);
    union_set.parent_index.resize(union_set.labels.size(), 0);
    union_set.num_classes = k_private + k_public;
    AdapterModule<float> adapter = build_adapter<float>(
        assets.concat_dim(), union_set.num_classes, adapter_seed, config.adapter_hidden_dim,
        config.adapter_out_dim);
    train_classifier(adapter.net, union_set, config.adapter_epochs, config.adapter_lr,
                     config.adapter_batch_size, derive_seed(config.seed, "mixed-union", 0),
                     "ablation-mixed");
    std::vector<int> shifted = public_eval.labels;
    for (int& label : shifted) label += k_private;
    report.mixed_union = classification_accuracy(adapter.net, eval_feats, shifted,
                                                 config.eval_batch_size);
  }

  write_text_file(paths.report("ablation.txt"), report.to_text());
  write_log(paths, "ablation",
            "ablation: " + std::to_string(report.head_on_teacher) + " " +
                std::to_string(report.adapter_hard_only) + " " +
                std::to_string(report.adapter_full) + " " + std::to_string(report.mixed_union));
  return report;
}

void cmd_distill(const RunConfig& config) {
  RunPaths paths = RunPaths::create(config.out_dir);
  DatasetIndex index = open_dataset(config);
  DistillConfig dcfg = config.distill();
  validate(dcfg);

  TrainSet lr_set = load_degraded_set(index, Split::kPublic, dcfg.resolution, SampleFilter::kTrain);

  Tensor<float> mimic;
  int mimic_dim = mimic_dim_for(config);
  if (dcfg.mode != SupervisionMode::kC) {
    RunPaths teacher_paths = RunPaths::create(resolve_teacher_run(config));
    std::vector<int> private_ids = class_ids(index, Split::kPrivate);
    StageOneAssets assets =
        load_stage_one(config, teacher_paths, static_cast<int>(private_ids.size()));
    TrainSet public_train = load_original_set(index, Split::kPublic, SampleFilter::kTrain);
    check_hr_resolution(config, public_train.inputs);
    Tensor<float> feats = cached_trunk_features(teacher_paths, index, assets,
                                                public_train.inputs, "public-train-hr");
    if (dcfg.mode == SupervisionMode::kDC) {
      mimic = feats;
    } else {
      std::string adapter_path =
          teacher_paths.checkpoint("adapter-" + config.distill_teacher + ".ckpt");
      if (!fs::exists(adapter_path)) {
        throw std::runtime_error("missing adapter checkpoint " + adapter_path +
                                 "; run adapt first");
      }
      AdapterModule<float> adapter = load_adapter<float>(
          adapter_path, assets.concat_dim(), config.adapter_hidden_dim, config.adapter_out_dim);
      mimic = adapter.features(feats);
    }
  }

  StudentModel<float> student = build_student<float>(
      dcfg.resolution, lr_set.num_classes, derive_seed(config.seed, "student-init", 0), mimic_dim);
  std::string name = model_name(dcfg.resolution, dcfg.mode, dcfg.teacher_set);

  if (dcfg.epochs_pretrain >= 1) {
    std::string warm_path = paths.checkpoint(name + "-pretrain.ckpt");
    if (fs::exists(warm_path)) {
      load_model(warm_path, student.net);
    } else {
      TrainReport report = pretrain_student(student, lr_set, dcfg);
      save_model(warm_path, student.net);
      write_train_report(paths.report(name + "-pretrain.txt"), report);
    }
  }

  TrainReport report = train_student(student, lr_set, mimic, dcfg);
  save_model(paths.checkpoint(name + ".ckpt"), student.net);
  write_train_report(paths.report(name + ".txt"), report);

  char line[192];
  std::snprintf(line, sizeof(line), "distill: model=%s train_acc=%.6f total=%.6f", name.c_str(),
                report.epochs.back().accuracy, report.epochs.back().total);
  write_log(paths, "distill", line);
}

ResultRow cmd_eval(const RunConfig& config) {
  RunPaths paths = RunPaths::create(config.out_dir);
  DatasetIndex index = open_dataset(config);
  DistillConfig dcfg = config.distill();
  validate(dcfg);

  std::vector<int> public_ids = class_ids(index, Split::kPublic);
  std::string name = model_name(dcfg.resolution, dcfg.mode, dcfg.teacher_set);
  std::string ckpt = paths.checkpoint(name + ".ckpt");
  if (!fs::exists(ckpt)) {
    throw std::runtime_error("missing student checkpoint " + ckpt + "; run distill first");
  }
  StudentModel<float> student = build_student<float>(
      dcfg.resolution, static_cast<int>(public_ids.size()), 0, mimic_dim_for(config));
  load_model(ckpt, student.net);

  std::vector<VerificationPair> pairs = verification_pairs(
      index.identities(Split::kTarget), index.samples_per_identity(), config.eval_pairs_pos,
      config.eval_pairs_neg, derive_seed(index.manifest_hash(), "verify-pairs", 0));
  VerifyReport vr = verify(student, index, pairs, config.eval_batch_size);

  IdentifyConfig icfg;
  icfg.k_list = {1, 5};
  icfg.head_epochs = config.eval_head_epochs;
  icfg.head_lr = config.eval_head_lr;
  icfg.batch = config.eval_batch_size;
  icfg.seed = index.manifest_hash();
  IdentifyReport ir = topk_error(student, index, icfg);

  ResultRow row;
  row.model = name;
  row.seed = config.seed;
  row.acc = vr.accuracy;
  row.auc = vr.auc;
  row.tpr_at_01 = vr.tpr_at_fpr01;
  row.top1 = ir.error_at(1);
  row.top5 = ir.error_at(5);

  write_results(paths.report("results.txt"), {row});
  write_roc(paths.report("roc-" + name + ".txt"), vr.roc);
  write_log(paths, "eval", result_line(row));
  return row;
}

std::string BenchReport::to_text() const {
  std::string text = cost_line(student) + "\n";
  if (teacher) {
    text += cost_line(*teacher) + "\n";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "speedup=%.2f\n", speedup);
    text += buf;
  }
  return text;
}

BenchReport cmd_bench(const RunConfig& config) {
  RunPaths paths = RunPaths::create(config.out_dir);
  DatasetIndex index = open_dataset(config);
  DistillConfig dcfg = config.distill();
  validate(dcfg);

  const int k_public = static_cast<int>(class_ids(index, Split::kPublic).size());
  StudentModel<float> student =
      build_student<float>(dcfg.resolution, k_public, 0, mimic_dim_for(config));

  BenchReport report;
  report.student = cost_report(student.net.spec(), dcfg.resolution, config.bench_batch);
  report.student.model = model_name(dcfg.resolution, dcfg.mode, dcfg.teacher_set);
  report.student.threads = config.bench_threads;
  report.student.throughput_faces_per_sec =
      throughput(student.net, dcfg.resolution, config.bench_duration_s, config.bench_threads,
                 config.bench_batch);

  auto names = teacher_names_for(config.distill_teacher);
  if (!names.empty()) {
    const int k_private = static_cast<int>(class_ids(index, Split::kPrivate).size());
    TeacherHandle<float> teacher = make_teacher(config, names.front(), k_private);
    CostReport tr =
        cost_report(teacher.net.spec(), config.teacher_resolution, config.bench_teacher_batch);
    tr.model = "teacher-" + names.front();
    tr.threads = config.bench_threads;
    tr.throughput_faces_per_sec =
        throughput(teacher.net, config.teacher_resolution, config.bench_duration_s,
                   config.bench_threads, config.bench_teacher_batch);
    report.speedup =
        report.student.throughput_faces_per_sec / tr.throughput_faces_per_sec;
    report.teacher = tr;
  }

  write_text_file(paths.report("cost.txt"), report.to_text());
  write_log(paths, "bench", "bench: " + cost_line(report.student));
  return report;
}

GridOutcome cmd_grid(const RunConfig& config, const std::string& cli_path, int jobs) {
  if (jobs < 1) throw std::invalid_argument("grid: jobs must be positive");
  RunPaths parent = RunPaths::create(config.out_dir);

  try {
    load_dataset(config.dataset_dir);
  } catch (const std::exception&) {
    cmd_gen_data(config);
  }
  DatasetIndex index = open_dataset(config);

  // Teachers and adapters are shared by all cells; prepare what the grid
  // axes actually use.
  bool needs_teacher = false;
  bool needs_adapter = false;
  for (const auto& mode : config.grid_modes) {
    if (mode != "c") needs_teacher = true;
    if (mode == "s" || mode == "sc") needs_adapter = true;
  }
  std::set<std::string> sets_used;
  if (needs_teacher) {
    for (const auto& t : config.grid_teachers) {
      if (t != "O") sets_used.insert(t);
    }
  }
  {
    TrainSet private_set;
    bool loaded = false;
    std::set<std::string> trunks_done;
    for (const auto& set_name : sets_used) {
      for (const auto& trunk : teacher_names_for(set_name)) {
        if (!trunks_done.insert(trunk).second) continue;
        if (fs::exists(parent.checkpoint("teacher-" + trunk + ".ckpt"))) continue;
        if (!loaded) {
          private_set = load_original_set(index, Split::kPrivate, SampleFilter::kTrain);
          check_hr_resolution(config, private_set.inputs);
          loaded = true;
        }
        train_one_teacher(config, parent, private_set, trunk);
      }
      if (needs_adapter && !fs::exists(parent.checkpoint("adapter-" + set_name + ".ckpt"))) {
        RunConfig adapt_config = config;
        adapt_config.distill_teacher = set_name;
        adapt_config.distill_teacher_run = "self";
        cmd_adapt(adapt_config);
      }
    }
  }

  // One cell per grid point; mode c collapses every teacher choice onto O.
  struct Cell {
    std::string name;
    RunConfig cfg;
  };
  std::vector<Cell> cells;
  std::set<std::string> seen;
  for (int resolution : config.grid_resolutions) {
    for (const auto& mode : config.grid_modes) {
      for (const auto& teacher : config.grid_teachers) {
        std::string cell_teacher = (mode == "c") ? "O" : teacher;
        if (mode != "c" && cell_teacher == "O") continue;
        for (int seed : config.grid_seeds) {
          std::string name = model_name(resolution, mode_from_name(mode),
                                        teacher_set_from_name(cell_teacher)) +
                             "-seed" + std::to_string(seed);
          if (!seen.insert(name).second) continue;
          Cell cell;
          cell.name = name;
          cell.cfg = config;
          cell.cfg.out_dir = (fs::path(parent.run_dir) / "cells" / name).string();
          cell.cfg.seed = static_cast<uint64_t>(seed);
          cell.cfg.distill_mode = mode;
          cell.cfg.distill_teacher = cell_teacher;
          cell.cfg.distill_resolution = resolution;
          cell.cfg.distill_teacher_run = parent.run_dir;
          cells.push_back(std::move(cell));
        }
      }
    }
  }

  GridOutcome outcome;
  std::mutex failed_mutex;
  for (const auto& cell : cells) outcome.cells.push_back(cell.name);

  if (cli_path.empty()) {
    for (const auto& cell : cells) {
      try {
        cmd_distill(cell.cfg);
        cmd_eval(cell.cfg);
      } catch (const std::exception& e) {
        write_text_file(parent.log(cell.name + ".log"), std::string(e.what()) + "\n");
        outcome.failed.push_back(cell.name);
      }
    }
  } else {
    std::vector<std::string> commands;
    for (const auto& cell : cells) {
      fs::create_directories(cell.cfg.out_dir);
      std::string cfg_path = (fs::path(cell.cfg.out_dir) / "cell.cfg").string();
      write_text_file(cfg_path, config_text(cell.cfg));
      std::string log_path = parent.log(cell.name + ".log");
      commands.push_back("\"" + cli_path + "\" distill --config \"" + cfg_path + "\" > \"" +
                         log_path + "\" 2>&1 && \"" + cli_path + "\" eval --config \"" + cfg_path +
                         "\" >> \"" + log_path + "\" 2>&1");
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (size_t i = next++; i < cells.size(); i = next++) {
        int rc = std::system(commands[i].c_str());
        if (rc != 0) {
          std::lock_guard<std::mutex> lock(failed_mutex);
          outcome.failed.push_back(cells[i].name);
        }
      }
    };
    std::vector<std::thread> pool;
    int workers = std::min<int>(jobs, static_cast<int>(cells.size()));
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (const auto& cell : cells) {
    bool ok = true;
    for (const auto& failed : outcome.failed) ok = ok && failed != cell.name;
    if (!ok) continue;
    std::string results = (fs::path(cell.cfg.out_dir) / "reports" / "results.txt").string();
    outcome.results_text += read_text_file(results);
  }
  write_text_file(parent.report("results.txt"), outcome.results_text);

  char line[128];
  std::snprintf(line, sizeof(line), "grid: cells=%zu failed=%zu jobs=%d", cells.size(),
                outcome.failed.size(), jobs);
  write_log(parent, "grid", line);
  return outcome;
}

}  // namespace bridgekd
