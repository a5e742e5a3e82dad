#include "bridgekd/zoo.hpp"

#include <algorithm>
#include <cmath>

namespace bridgekd {

namespace {

void push_conv_bn_relu(ModelSpec& spec, const std::string& base, int out_channels, int kernel) {
  spec.layers.push_back(conv_layer(base, out_channels, kernel, 1, kernel == 3 ? 1 : 0));
  spec.layers.push_back(bn_layer(base + "_bn"));
  spec.layers.push_back(relu_layer(base + "_relu"));
}

int scaled(int width, double s) { return std::max(4, static_cast<int>(std::lround(width * s))); }

}  // namespace

ModelSpec student_spec(int resolution, int num_classes, int mimic_dim) {
  (void)resolution;  // the trunk is size-agnostic; kept in the signature for validation call sites
  ModelSpec spec;
  spec.name = "student";
  spec.in_channels = 1;

  auto& L = spec.layers;
  // Stage 1: 16 channels, one skip over the 1x1, pool.
  push_conv_bn_relu(spec, "conv1", 16, 3);
  int stage1_out = static_cast<int>(L.size()) - 1;
  push_conv_bn_relu(spec, "conv2", 16, 1);
  L.push_back(add_layer("skip1", stage1_out));
  L.push_back(maxpool_layer("pool1"));

  // Stage 2: 32 channels, pool.
  push_conv_bn_relu(spec, "conv3", 32, 3);
  push_conv_bn_relu(spec, "conv4", 32, 1);
  L.push_back(maxpool_layer("pool2"));

  // Stage 3: 64 channels, skip, pool.
  push_conv_bn_relu(spec, "conv5", 64, 3);
  int stage3_out = static_cast<int>(L.size()) - 1;
  push_conv_bn_relu(spec, "conv6", 64, 1);
  L.push_back(add_layer("skip2", stage3_out));
  L.push_back(maxpool_layer("pool3"));

  // Stage 4: widen to 96/64/96/128 without further pooling.
  push_conv_bn_relu(spec, "conv7", 96, 3);
  push_conv_bn_relu(spec, "conv8", 64, 1);
  push_conv_bn_relu(spec, "conv9", 96, 3);
  push_conv_bn_relu(spec, "conv10", 128, 1);

  L.push_back(gap_layer("gap"));
  L.push_back(fc_layer("fc1", 192));
  L.push_back(relu_layer("fc1_relu"));
  L.push_back(fc_layer("mimic", mimic_dim));
  spec.feature_layer = static_cast<int>(L.size()) - 1;
  L.push_back(fc_layer("head", num_classes));
  return spec;
}

ModelSpec teacher_spec(int feature_dim, int num_classes, double arch_scale) {
  ModelSpec spec;
  spec.name = "teacher";
  spec.in_channels = 1;
  auto& L = spec.layers;

  const int widths[5] = {scaled(16, arch_scale), scaled(32, arch_scale), scaled(64, arch_scale),
                         scaled(128, arch_scale), scaled(256, arch_scale)};
  for (int i = 0; i < 5; ++i) {
    push_conv_bn_relu(spec, "conv" + std::to_string(i + 1), widths[i], 3);
    if (i < 4) L.push_back(maxpool_layer("pool" + std::to_string(i + 1)));
  }
  L.push_back(gap_layer("gap"));
  const int wide = scaled(2048, arch_scale);
  L.push_back(fc_layer("fc1", wide));
  L.push_back(relu_layer("fc1_relu"));
  L.push_back(fc_layer("fc2", wide));
  L.push_back(relu_layer("fc2_relu"));
  L.push_back(fc_layer("feature", feature_dim));
  spec.feature_layer = static_cast<int>(L.size()) - 1;
  L.push_back(fc_layer("head", num_classes));
  return spec;
}

ModelSpec adapter_spec(int teacher_feature_dim, int num_classes, int hidden_dim, int out_dim) {
  ModelSpec spec;
  spec.name = "adapter";
  spec.vector_input = true;
  spec.in_dim = teacher_feature_dim;
  auto& L = spec.layers;
  L.push_back(fc_layer("fc1", hidden_dim));
  L.push_back(relu_layer("fc1_relu"));
  L.push_back(fc_layer("fc2", out_dim));
  spec.feature_layer = static_cast<int>(L.size()) - 1;
  L.push_back(fc_layer("head", num_classes));
  return spec;
}

ModelSpec adapter_feature_spec(int teacher_feature_dim, int hidden_dim, int out_dim) {
  ModelSpec spec;
  spec.name = "adapter";
  spec.vector_input = true;
  spec.in_dim = teacher_feature_dim;
  auto& L = spec.layers;
  L.push_back(fc_layer("fc1", hidden_dim));
  L.push_back(relu_layer("fc1_relu"));
  L.push_back(fc_layer("fc2", out_dim));
  spec.feature_layer = static_cast<int>(L.size()) - 1;
  return spec;
}

ModelSpec head_spec(const std::string& name, int in_dim, int num_classes) {
  ModelSpec spec;
  spec.name = name;
  spec.vector_input = true;
  spec.in_dim = in_dim;
  spec.layers.push_back(fc_layer("fc", num_classes));
  return spec;
}

}  // namespace bridgekd
