#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bridgekd {

enum class LayerKind {
  conv,
  batchnorm,
  relu,
  maxpool,
  global_avg_pool,
  fully_connected,
  add,
};

// One layer of a sequential network. Input channel / input dim counts are
// inferred from the preceding layer, so a spec stays valid across input
// resolutions. `add` sums the current activation with the recorded output of
// an earlier layer (a skip connection).
struct LayerDef {
  LayerKind kind{};
  std::string name;

  // conv
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;

  // fully_connected
  int out_dim = 0;

  // maxpool
  int pool_kernel = 2;
  int pool_stride = 2;

  // add: index of the layer whose output is the second operand
  int skip_from = -1;
};

struct ModelSpec {
  std::string name;

  // Image models consume (N, in_channels, H, W); vector models consume
  // (N, in_dim) and must not contain spatial layers.
  bool vector_input = false;
  int in_channels = 1;
  int in_dim = 0;

  // Index of the layer whose output is the embedding used for recognition;
  // layers after it form the classifier head. -1 means the final output.
  int feature_layer = -1;

  std::vector<LayerDef> layers;
};

inline LayerDef conv_layer(std::string name, int out_channels, int kernel, int stride = 1,
                           int padding = 0) {
  LayerDef l;
  l.kind = LayerKind::conv;
  l.name = std::move(name);
  l.out_channels = out_channels;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  return l;
}

inline LayerDef bn_layer(std::string name) {
  LayerDef l;
  l.kind = LayerKind::batchnorm;
  l.name = std::move(name);
  return l;
}

inline LayerDef relu_layer(std::string name) {
  LayerDef l;
  l.kind = LayerKind::relu;
  l.name = std::move(name);
  return l;
}

inline LayerDef maxpool_layer(std::string name, int kernel = 2, int stride = 2) {
  LayerDef l;
  l.kind = LayerKind::maxpool;
  l.name = std::move(name);
  l.pool_kernel = kernel;
  l.pool_stride = stride;
  return l;
}

inline LayerDef gap_layer(std::string name) {
  LayerDef l;
  l.kind = LayerKind::global_avg_pool;
  l.name = std::move(name);
  return l;
}

inline LayerDef fc_layer(std::string name, int out_dim) {
  LayerDef l;
  l.kind = LayerKind::fully_connected;
  l.name = std::move(name);
  l.out_dim = out_dim;
  return l;
}

inline LayerDef add_layer(std::string name, int skip_from) {
  LayerDef l;
  l.kind = LayerKind::add;
  l.name = std::move(name);
  l.skip_from = skip_from;
  return l;
}

// Per-layer output shapes, excluding the batch axis: {C,H,W} for spatial
// activations, {D} for vectors. Throws on inconsistent specs (mismatched
// skip shapes, spatial layers after flattening, pooling that does not tile,
// out-of-range skip indices). For vector-input models h and w are ignored.
std::vector<std::vector<int>> infer_layer_shapes(const ModelSpec& spec, int h, int w);

// Validates the spec at the given input size; wraps infer_layer_shapes.
void validate_spec(const ModelSpec& spec, int h, int w);

// Trainable parameter count: conv and fc weights and biases plus batchnorm
// scale and shift. Running statistics are buffers, not parameters.
int64_t spec_param_count(const ModelSpec& spec);

}  // namespace bridgekd
