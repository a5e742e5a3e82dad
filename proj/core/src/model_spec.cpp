#include "bridgekd/model_spec.hpp"

#include <stdexcept>
#include <string>

namespace bridgekd {

namespace {

[[noreturn]] void fail(const ModelSpec& spec, size_t i, const std::string& msg) {
  std::string layer = i < spec.layers.size() ? spec.layers[i].name : "<input>";
  throw std::invalid_argument("model spec '" + spec.name + "', layer '" + layer + "': " + msg);
}

std::string fmt_shape(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

}  // namespace

std::vector<std::vector<int>> infer_layer_shapes(const ModelSpec& spec, int h, int w) {
  std::vector<int> cur;
  if (spec.vector_input) {
    if (spec.in_dim <= 0)
      throw std::invalid_argument("model spec '" + spec.name + "': vector input needs in_dim > 0");
    cur = {spec.in_dim};
  } else {
    if (spec.in_channels <= 0 || h <= 0 || w <= 0)
      throw std::invalid_argument("model spec '" + spec.name + "': bad input geometry");
    cur = {spec.in_channels, h, w};
  }

  std::vector<std::vector<int>> shapes;
  shapes.reserve(spec.layers.size());
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDef& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.size() != 3) fail(spec, i, "conv requires a spatial input, have " + fmt_shape(cur));
        if (l.kernel != 1 && l.kernel != 3) fail(spec, i, "kernel must be 1 or 3");
        if (l.out_channels <= 0) fail(spec, i, "out_channels must be positive");
        int ho = (cur[1] + 2 * l.padding - l.kernel) / l.stride + 1;
        int wo = (cur[2] + 2 * l.padding - l.kernel) / l.stride + 1;
        if (ho <= 0 || wo <= 0) fail(spec, i, "conv output collapses to zero size");
        cur = {l.out_channels, ho, wo};
        break;
      }
      case LayerKind::batchnorm:
      case LayerKind::relu:
        break;
      case LayerKind::maxpool: {
        if (cur.size() != 3) fail(spec, i, "maxpool requires a spatial input");
        int k = l.pool_kernel, s = l.pool_stride;
        if (cur[1] < k || cur[2] < k) fail(spec, i, "input smaller than pooling window");
        if ((cur[1] - k) % s != 0 || (cur[2] - k) % s != 0)
          fail(spec, i, "pooling does not tile " + fmt_shape(cur) + " exactly");
        cur = {cur[0], (cur[1] - k) / s + 1, (cur[2] - k) / s + 1};
        break;
      }
      case LayerKind::global_avg_pool:
        if (cur.size() != 3) fail(spec, i, "global_avg_pool requires a spatial input");
        cur = {cur[0]};
        break;
      case LayerKind::fully_connected:
        if (cur.size() != 1)
          fail(spec, i, "fully_connected requires a vector input, have " + fmt_shape(cur));
        if (l.out_dim <= 0) fail(spec, i, "out_dim must be positive");
        cur = {l.out_dim};
        break;
      case LayerKind::add: {
        if (l.skip_from < 0 || l.skip_from >= static_cast<int>(i))
          fail(spec, i, "skip_from must reference an earlier layer");
        const auto& other = shapes[static_cast<size_t>(l.skip_from)];
        if (other != cur)
          fail(spec, i, "skip shapes differ: " + fmt_shape(cur) + " vs " + fmt_shape(other));
        break;
      }
    }
    shapes.push_back(cur);
  }

  if (spec.feature_layer < -1 || spec.feature_layer >= static_cast<int>(spec.layers.size()))
    throw std::invalid_argument("model spec '" + spec.name + "': feature_layer out of range");
  return shapes;
}

void validate_spec(const ModelSpec& spec, int h, int w) { infer_layer_shapes(spec, h, w); }

int64_t spec_param_count(const ModelSpec& spec) {
  // Channel counts come from a shape walk; spatial extent does not matter, so
  // any valid size works for image models.
  std::vector<int> cur;
  if (spec.vector_input)
    cur = {spec.in_dim};
  else
    cur = {spec.in_channels, 0, 0};

  int64_t total = 0;
  for (const LayerDef& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::conv:
        total += static_cast<int64_t>(l.out_channels) * cur[0] * l.kernel * l.kernel +
                 l.out_channels;
        cur[0] = l.out_channels;
        break;
      case LayerKind::batchnorm:
        total += 2 * static_cast<int64_t>(cur[0]);
        break;
      case LayerKind::global_avg_pool:
        cur = {cur[0]};
        break;
      case LayerKind::fully_connected:
        total += static_cast<int64_t>(l.out_dim) * cur[0] + l.out_dim;
        cur = {l.out_dim};
        break;
      case LayerKind::relu:
      case LayerKind::maxpool:
      case LayerKind::add:
        break;
    }
  }
  return total;
}

}  // namespace bridgekd
