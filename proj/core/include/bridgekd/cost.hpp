#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridgekd/model.hpp"
#include "bridgekd/model_spec.hpp"

namespace bridgekd {

// Analytic and measured resource costs of a model. Analytic numbers are pure
// functions of the spec and resolution; throughput is a same-machine
// measurement and always travels with a hardware descriptor.

struct CostReport {
  std::string model;
  int resolution = 0;
  int batch = 1;
  int threads = 1;
  int64_t params = 0;
  int64_t macs = 0;   // multiply-accumulates for one forward pass, batch 1
  int64_t flops = 0;  // 2 * macs; both reported since conventions differ
  int64_t param_bytes = 0;
  int64_t peak_activation_bytes = 0;
  double throughput_faces_per_sec = 0.0;  // 0 until measured
  std::string hardware;
};

// conv: k^2 * C_in * C_out * H' * W'; fully connected: d_in * d_out; pooling,
// batchnorm, relu and adds count zero MACs.
int64_t count_macs(const ModelSpec& spec, int resolution);

struct MemoryFootprint {
  int64_t param_bytes = 0;
  int64_t peak_activation_bytes = 0;
};

// Peak live activation bytes over the layer schedule: while a layer runs,
// its output plus every earlier output still awaiting a consumer (sequential
// successor or skip connection) are live. A feature tap, when set, is held to
// the end, since recognition reads the embedding alongside the logits.
MemoryFootprint memory_footprint(const ModelSpec& spec, int resolution, int batch = 1,
                                 int dtype_bytes = 4);

// Analytic part of the report (throughput left at 0).
CostReport cost_report(const ModelSpec& spec, int resolution, int batch = 1);

// Timed inference over a fixed probe batch: a short warm-up, then forward
// passes until the duration elapses. Requires at least 10 measured batches,
// otherwise the duration is rejected as too short. With threads > 1, each
// worker drives its own model copy over shared read-only parameters.
double throughput(Model<float>& model, int resolution, double duration_s, int threads = 1,
                  int batch = 32);

// CPU model string plus logical core count, best effort.
std::string hardware_descriptor();

std::string cost_line(const CostReport& report);
std::string cost_table(const std::vector<CostReport>& reports);

}  // namespace bridgekd
