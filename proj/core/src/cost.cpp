#include "bridgekd/cost.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "bridgekd/rng.hpp"

namespace bridgekd {

namespace {

int64_t shape_elems(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

}  // namespace

int64_t count_macs(const ModelSpec& spec, int resolution) {
  auto shapes = infer_layer_shapes(spec, resolution, resolution);
  int64_t macs = 0;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDef& layer = spec.layers[i];
    const std::vector<int>& in =
        i == 0 ? (spec.vector_input ? std::vector<int>{spec.in_dim}
                                    : std::vector<int>{spec.in_channels, resolution, resolution})
               : shapes[i - 1];
    const std::vector<int>& out = shapes[i];
    switch (layer.kind) {
      case LayerKind::conv:
        macs += static_cast<int64_t>(layer.kernel) * layer.kernel * in[0] * out[0] * out[1] *
                out[2];
        break;
      case LayerKind::fully_connected:
        macs += static_cast<int64_t>(in[0]) * out[0];
        break;
      case LayerKind::batchnorm:
      case LayerKind::relu:
      case LayerKind::maxpool:
      case LayerKind::global_avg_pool:
      case LayerKind::add:
        break;
    }
  }
  return macs;
}

MemoryFootprint memory_footprint(const ModelSpec& spec, int resolution, int batch,
                                 int dtype_bytes) {
  if (batch < 1) throw std::invalid_argument("memory_footprint: batch must be positive");
  auto shapes = infer_layer_shapes(spec, resolution, resolution);
  int n = static_cast<int>(spec.layers.size());

  // Output sizes: slot 0 is the model input, slot i + 1 is layer i.
  std::vector<int64_t> elems(n + 1);
  elems[0] = spec.vector_input ? spec.in_dim
                               : static_cast<int64_t>(spec.in_channels) * resolution * resolution;
  for (int i = 0; i < n; ++i) elems[i + 1] = shape_elems(shapes[i]);

  // A value dies after the last step that reads it. The final output and the
  // feature tap survive the whole schedule.
  std::vector<int> last_use(n + 1, -1);
  for (int i = 0; i < n; ++i) {
    last_use[i] = i;
    if (spec.layers[i].kind == LayerKind::add) {
      last_use[spec.layers[i].skip_from + 1] = i;
    }
  }
  last_use[n] = n;
  if (spec.feature_layer >= 0) last_use[spec.feature_layer + 1] = n;

  int64_t peak = 0;
  for (int step = 0; step < n; ++step) {
    int64_t live = elems[step + 1];
    for (int v = 0; v <= step; ++v) {
      if (last_use[v] >= step) live += elems[v];
    }
    peak = std::max(peak, live);
  }
  if (n == 0) peak = elems[0];

  MemoryFootprint fp;
  fp.param_bytes = static_cast<int64_t>(spec_param_count(spec)) * dtype_bytes;
  fp.peak_activation_bytes = peak * batch * dtype_bytes;
  return fp;
}

CostReport cost_report(const ModelSpec& spec, int resolution, int batch) {
  CostReport report;
  report.model = spec.name;
  report.resolution = resolution;
  report.batch = batch;
  report.params = static_cast<int64_t>(spec_param_count(spec));
  report.macs = count_macs(spec, resolution);
  report.flops = 2 * report.macs;
  MemoryFootprint fp = memory_footprint(spec, resolution, batch);
  report.param_bytes = fp.param_bytes;
  report.peak_activation_bytes = fp.peak_activation_bytes;
  report.hardware = hardware_descriptor();
  return report;
}

double throughput(Model<float>& model, int resolution, double duration_s, int threads,
                  int batch) {
  if (duration_s <= 0.0) throw std::invalid_argument("throughput: duration must be positive");
  if (threads < 1) throw std::invalid_argument("throughput: threads must be positive");
  if (batch < 1) throw std::invalid_argument("throughput: batch must be positive");

  const ModelSpec& spec = model.spec();
  std::vector<int> shape = spec.vector_input
                               ? std::vector<int>{batch, spec.in_dim}
                               : std::vector<int>{batch, spec.in_channels, resolution, resolution};
  Tensor<float> probe(shape);
  Rng rng(0x7068726f6265ULL);
  for (auto& v : probe.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  using clock = std::chrono::steady_clock;
  std::atomic<int64_t> measured_batches{0};
  auto worker = [&](Model<float> local) {
    for (int i = 0; i < 2; ++i) local.forward(probe, nullptr, false);
    auto deadline = clock::now() + std::chrono::duration<double>(duration_s);
    int64_t done = 0;
    while (clock::now() < deadline) {
      local.forward(probe, nullptr, false);
      ++done;
    }
    measured_batches += done;
  };

  auto start = clock::now();
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker, model);
  for (auto& th : pool) th.join();
  double elapsed = std::chrono::duration<double>(clock::now() - start).count();

  int64_t batches = measured_batches.load();
  if (batches < 10) {
    throw std::runtime_error("throughput: duration too short, fewer than 10 batches measured");
  }
  return static_cast<double>(batches) * batch / elapsed;
}

std::string hardware_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    if (line.compare(0, 10, "model name") == 0) {
      size_t begin = line.find_first_not_of(" \t", colon + 1);
      if (begin != std::string::npos) cpu = line.substr(begin);
      break;
    }
  }
  unsigned cores = std::thread::hardware_concurrency();
  if (cores > 0) cpu += ", " + std::to_string(cores) + " logical cores";
  return cpu;
}

std::string cost_line(const CostReport& report) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "model=%s resolution=%d params=%lld macs=%lld flops=%lld param_bytes=%lld "
                "peak_activation_bytes=%lld throughput=%.1f batch=%d threads=%d hardware=%s",
                report.model.c_str(), report.resolution, static_cast<long long>(report.params),
                static_cast<long long>(report.macs), static_cast<long long>(report.flops),
                static_cast<long long>(report.param_bytes),
                static_cast<long long>(report.peak_activation_bytes),
                report.throughput_faces_per_sec, report.batch, report.threads,
                report.hardware.c_str());
  return buf;
}

std::string cost_table(const std::vector<CostReport>& reports) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-16s %5s %10s %12s %12s %14s %12s\n", "model", "res", "params",
                "macs", "param_kb", "peak_act_kb", "faces_per_s");
  out << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%-16s %5d %10lld %12lld %12.1f %14.1f %12.1f\n",
                  r.model.c_str(), r.resolution, static_cast<long long>(r.params),
                  static_cast<long long>(r.macs), r.param_bytes / 1024.0,
                  r.peak_activation_bytes / 1024.0, r.throughput_faces_per_sec);
    out << buf;
  }
  return out.str();
}

}  // namespace bridgekd
