#include "bridgekd/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bridgekd {

namespace {

std::string trim(const std::string& s) {
  size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  size_t end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

long long parse_integer(const std::string& key, const std::string& value) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument(key + ": expected integer, got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) {
    throw std::invalid_argument(key + ": expected number, got '" + value + "'");
  }
  return out;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& key, const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw std::invalid_argument(key + ": empty list element in '" + value + "'");
    out.push_back(item);
  }
  if (out.empty()) throw std::invalid_argument(key + ": expected a comma separated list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::ostringstream out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out << ",";
    out << values[i];
  }
  return out.str();
}

ConfigKey key_of(const char* key, const char* doc, int RunConfig::*field) {
  return {key, doc, [field](const RunConfig& c) { return std::to_string(c.*field); },
          [field, key](RunConfig& c, const std::string& v) {
            c.*field = static_cast<int>(parse_integer(key, v));
          }};
}

ConfigKey key_of(const char* key, const char* doc, uint64_t RunConfig::*field) {
  return {key, doc, [field](const RunConfig& c) { return std::to_string(c.*field); },
          [field, key](RunConfig& c, const std::string& v) {
            long long parsed = parse_integer(key, v);
            if (parsed < 0) throw std::invalid_argument(std::string(key) + ": must not be negative");
            c.*field = static_cast<uint64_t>(parsed);
          }};
}

ConfigKey key_of(const char* key, const char* doc, double RunConfig::*field) {
  return {key, doc,
          [field](const RunConfig& c) {
            std::ostringstream out;
            out << c.*field;
            return out.str();
          },
          [field, key](RunConfig& c, const std::string& v) { c.*field = parse_real(key, v); }};
}

ConfigKey key_of(const char* key, const char* doc, bool RunConfig::*field) {
  return {key, doc, [field](const RunConfig& c) { return c.*field ? "true" : "false"; },
          [field, key](RunConfig& c, const std::string& v) { c.*field = parse_flag(key, v); }};
}

ConfigKey key_of(const char* key, const char* doc, std::string RunConfig::*field) {
  return {key, doc, [field](const RunConfig& c) { return c.*field; },
          [field, key](RunConfig& c, const std::string& v) {
            if (v.empty()) throw std::invalid_argument(std::string(key) + ": must not be empty");
            c.*field = v;
          }};
}

ConfigKey key_of(const char* key, const char* doc, std::vector<int> RunConfig::*field) {
  return {key, doc, [field](const RunConfig& c) { return join(c.*field); },
          [field, key](RunConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const auto& item : split_list(key, v)) {
              out.push_back(static_cast<int>(parse_integer(key, item)));
            }
            c.*field = out;
          }};
}

ConfigKey key_of(const char* key, const char* doc, std::vector<std::string> RunConfig::*field) {
  return {key, doc, [field](const RunConfig& c) { return join(c.*field); },
          [field, key](RunConfig& c, const std::string& v) { c.*field = split_list(key, v); }};
}

std::string section_of(const std::string& key) { return key.substr(0, key.find('.')); }

}  // namespace

const std::vector<ConfigKey>& config_registry() {
  static const std::vector<ConfigKey> registry = {
      key_of("run.seed", "master seed; every stage derives its own stream", &RunConfig::seed),
      key_of("run.out_dir", "run directory for checkpoints, reports and logs",
             &RunConfig::out_dir),

      key_of("dataset.dir", "directory the dataset is written to and read from",
             &RunConfig::dataset_dir),
      key_of("dataset.identities", "number of synthetic identities",
             &RunConfig::dataset_identities),
      key_of("dataset.samples_per_identity", "renders per identity; the first 80% train",
             &RunConfig::dataset_samples_per_identity),
      key_of("dataset.hr_size", "side length of the rendered originals",
             &RunConfig::dataset_hr_size),
      key_of("dataset.resolutions", "degraded resolutions to emit, comma separated",
             &RunConfig::dataset_resolutions),
      key_of("dataset.variants", "degraded views per original", &RunConfig::dataset_variants),
      key_of("dataset.jitter_px", "maximum alignment jitter in pixels",
             &RunConfig::dataset_jitter_px),

      key_of("teacher.feature_dim", "width of the teacher embedding",
             &RunConfig::teacher_feature_dim),
      key_of("teacher.arch_scale", "channel multiplier for the teacher trunk",
             &RunConfig::teacher_arch_scale),
      key_of("teacher.resolution", "input resolution the teacher runs at",
             &RunConfig::teacher_resolution),
      key_of("teacher.epochs", "epochs for teacher pretraining", &RunConfig::teacher_epochs),
      key_of("teacher.lr", "teacher learning rate", &RunConfig::teacher_lr),
      key_of("teacher.batch_size", "teacher batch size", &RunConfig::teacher_batch_size),

      key_of("adapter.lambda", "weight of the soft-target term", &RunConfig::adapter_lambda),
      key_of("adapter.temperature", "soft-target temperature", &RunConfig::adapter_temperature),
      key_of("adapter.literal_temperature",
             "divide the teacher softmax by T instead of softening both sides",
             &RunConfig::adapter_literal_temperature),
      key_of("adapter.hidden_dim", "adapter hidden width", &RunConfig::adapter_hidden_dim),
      key_of("adapter.out_dim", "adapter output width, the student mimic target",
             &RunConfig::adapter_out_dim),
      key_of("adapter.epochs", "adapter training epochs", &RunConfig::adapter_epochs),
      key_of("adapter.lr", "adapter learning rate", &RunConfig::adapter_lr),
      key_of("adapter.batch_size", "adapter batch size", &RunConfig::adapter_batch_size),

      key_of("distill.mode", "supervision mode: c, s, dc or sc", &RunConfig::distill_mode),
      key_of("distill.teacher", "teacher set: O, V, C or E", &RunConfig::distill_teacher),
      key_of("distill.teacher_run",
             "run directory holding teacher and adapter checkpoints; self = this run",
             &RunConfig::distill_teacher_run),
      key_of("distill.resolution", "student input resolution", &RunConfig::distill_resolution),
      key_of("distill.epochs_pretrain", "classification-only warm-up epochs",
             &RunConfig::distill_epochs_pretrain),
      key_of("distill.epochs_main", "epochs with the full objective",
             &RunConfig::distill_epochs_main),
      key_of("distill.lr", "student learning rate", &RunConfig::distill_lr),
      key_of("distill.batch_size", "student batch size", &RunConfig::distill_batch_size),

      key_of("eval.pairs_pos", "same-identity verification pairs", &RunConfig::eval_pairs_pos),
      key_of("eval.pairs_neg", "cross-identity verification pairs", &RunConfig::eval_pairs_neg),
      key_of("eval.head_epochs", "epochs for the identification head",
             &RunConfig::eval_head_epochs),
      key_of("eval.head_lr", "identification head learning rate", &RunConfig::eval_head_lr),
      key_of("eval.batch_size", "evaluation batch size", &RunConfig::eval_batch_size),

      key_of("bench.duration_s", "seconds to measure throughput over",
             &RunConfig::bench_duration_s),
      key_of("bench.threads", "worker threads for throughput", &RunConfig::bench_threads),
      key_of("bench.batch", "batch size for throughput", &RunConfig::bench_batch),
      key_of("bench.teacher_batch", "throughput batch size for the slower teacher",
             &RunConfig::bench_teacher_batch),

      key_of("grid.resolutions", "grid axis: student resolutions", &RunConfig::grid_resolutions),
      key_of("grid.modes", "grid axis: supervision modes", &RunConfig::grid_modes),
      key_of("grid.teachers", "grid axis: teacher sets", &RunConfig::grid_teachers),
      key_of("grid.seeds", "grid axis: seeds", &RunConfig::grid_seeds),
  };
  return registry;
}

namespace {

const ConfigKey* find_key(const std::string& key) {
  for (const auto& entry : config_registry()) {
    if (entry.key == key) return &entry;
  }
  return nullptr;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    std::string where = "config line " + std::to_string(line_no) + ": ";
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(where + "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(where + "expected 'key = value'");
    if (value.empty()) throw std::invalid_argument(where + "empty value for '" + key + "'");
    const ConfigKey* entry = find_key(key);
    if (!entry) throw std::invalid_argument(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) {
      throw std::invalid_argument(where + "duplicate key '" + key + "'");
    }
    try {
      entry->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  return config;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
  const ConfigKey* entry = find_key(key);
  if (!entry) throw std::invalid_argument("unknown config key '" + key + "'");
  entry->set(config, value);
}

std::string config_help() {
  RunConfig defaults;
  std::ostringstream out;
  std::string section;
  for (const auto& entry : config_registry()) {
    std::string current = section_of(entry.key);
    if (current != section) {
      if (!section.empty()) out << "\n";
      section = current;
    }
    out << "  " << entry.key << " = " << entry.get(defaults) << "\n      " << entry.doc << "\n";
  }
  return out.str();
}

std::string config_text(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& entry : config_registry()) {
    std::string current = section_of(entry.key);
    if (current != section) {
      if (!section.empty()) out << "\n";
      section = current;
    }
    out << entry.key << " = " << entry.get(config) << "\n";
  }
  return out.str();
}

DatasetConfig RunConfig::dataset() const {
  DatasetConfig cfg;
  cfg.identities = dataset_identities;
  cfg.samples_per_identity = dataset_samples_per_identity;
  cfg.hr_size = dataset_hr_size;
  cfg.resolutions = dataset_resolutions;
  cfg.degrade.count = dataset_variants;
  cfg.degrade.jitter_px = dataset_jitter_px;
  return cfg;
}

DistillConfig RunConfig::distill() const {
  DistillConfig cfg;
  cfg.mode = mode_from_name(distill_mode);
  cfg.teacher_set = teacher_set_from_name(distill_teacher);
  cfg.resolution = distill_resolution;
  cfg.lambda = adapter_lambda;
  cfg.temperature = adapter_temperature;
  cfg.literal_temperature_scaling = adapter_literal_temperature;
  cfg.lr = distill_lr;
  cfg.batch_size = distill_batch_size;
  cfg.epochs_pretrain = distill_epochs_pretrain;
  cfg.epochs_main = distill_epochs_main;
  cfg.seed = seed;
  return cfg;
}

}  // namespace bridgekd
