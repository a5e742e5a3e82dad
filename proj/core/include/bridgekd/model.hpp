#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bridgekd/model_spec.hpp"
#include "bridgekd/ops.hpp"
#include "bridgekd/rng.hpp"
#include "bridgekd/tensor.hpp"

namespace bridgekd {

// A spec instantiated with parameters. Construction walks the layers once to
// infer fan-in/fan-out, draws Xavier-uniform weights from a single stream in
// layer order, and allocates batchnorm running statistics. The same spec plus
// the same seed always yields bit-identical parameters.
template <typename T>
class Model {
 public:
  struct Forward {
    Tensor<T> features;  // output of spec.feature_layer (the final output if -1)
    Tensor<T> output;
  };

  Model() = default;

  Model(ModelSpec spec, uint64_t seed) : spec_(std::move(spec)) {
    layers_.resize(spec_.layers.size());
    Rng rng(seed);
    int c = spec_.vector_input ? spec_.in_dim : spec_.in_channels;
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
      const LayerDef& l = spec_.layers[i];
      LayerState& st = layers_[i];
      switch (l.kind) {
        case LayerKind::conv: {
          st.weight = Tensor<T>({l.out_channels, c, l.kernel, l.kernel});
          st.bias = Tensor<T>({l.out_channels});
          int64_t fan_in = static_cast<int64_t>(c) * l.kernel * l.kernel;
          int64_t fan_out = static_cast<int64_t>(l.out_channels) * l.kernel * l.kernel;
          xavier_fill(st.weight, fan_in, fan_out, rng);
          c = l.out_channels;
          break;
        }
        case LayerKind::fully_connected: {
          st.weight = Tensor<T>({l.out_dim, c});
          st.bias = Tensor<T>({l.out_dim});
          xavier_fill(st.weight, c, l.out_dim, rng);
          c = l.out_dim;
          break;
        }
        case LayerKind::batchnorm:
          st.gamma = Tensor<T>::full({c}, T(1));
          st.beta = Tensor<T>({c});
          st.stats.mean = Tensor<T>({c});
          st.stats.var = Tensor<T>::full({c}, T(1));
          break;
        case LayerKind::relu:
        case LayerKind::maxpool:
        case LayerKind::global_avg_pool:
        case LayerKind::add:
          break;
      }
      if (st.weight.defined()) {
        st.weight.set_requires_grad(true);
        st.bias.set_requires_grad(true);
      }
      if (st.gamma.defined()) {
        st.gamma.set_requires_grad(true);
        st.beta.set_requires_grad(true);
      }
    }
  }

  const ModelSpec& spec() const { return spec_; }

  // Runs the network. In train mode batchnorm uses batch statistics and
  // updates its running estimates; inference leaves all state untouched.
  Forward forward(const Tensor<T>& x, Tape<T>* tape, bool train) {
    check_input(x);
    std::vector<Tensor<T>> outs(spec_.layers.size());
    Tensor<T> cur = x;
    Tensor<T> feat;
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
      cur = run_layer(i, cur, outs, tape, train);
      outs[i] = cur;
      if (static_cast<int>(i) == spec_.feature_layer) feat = cur;
    }
    if (!feat.defined()) feat = cur;
    return {feat, cur};
  }

  // Runs only up to the feature layer; the classifier head is skipped.
  Tensor<T> features_only(const Tensor<T>& x, Tape<T>* tape, bool train) {
    if (spec_.feature_layer < 0) return forward(x, tape, train).output;
    check_input(x);
    std::vector<Tensor<T>> outs(spec_.layers.size());
    Tensor<T> cur = x;
    for (size_t i = 0; i <= static_cast<size_t>(spec_.feature_layer); ++i) {
      cur = run_layer(i, cur, outs, tape, train);
      outs[i] = cur;
    }
    return cur;
  }

  // Trainable tensors in a stable order (layer order; weight before bias).
  std::vector<Tensor<T>> trainable() {
    std::vector<Tensor<T>> out;
    for (auto& st : layers_) {
      if (st.weight.defined()) {
        out.push_back(st.weight);
        out.push_back(st.bias);
      }
      if (st.gamma.defined()) {
        out.push_back(st.gamma);
        out.push_back(st.beta);
      }
    }
    return out;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& st : layers_) {
      if (st.weight.defined()) n += st.weight.numel() + st.bias.numel();
      if (st.gamma.defined()) n += st.gamma.numel() + st.beta.numel();
    }
    return n;
  }

  // All persistent tensors (parameters plus batchnorm running statistics),
  // keyed "<model>.<layer>.<slot>".
  std::vector<std::pair<std::string, Tensor<T>>> named_state() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (size_t i = 0; i < layers_.size(); ++i) {
      const std::string base = spec_.name + "." + spec_.layers[i].name + ".";
      LayerState& st = layers_[i];
      if (st.weight.defined()) {
        out.emplace_back(base + "weight", st.weight);
        out.emplace_back(base + "bias", st.bias);
      }
      if (st.gamma.defined()) {
        out.emplace_back(base + "gamma", st.gamma);
        out.emplace_back(base + "beta", st.beta);
        out.emplace_back(base + "running_mean", st.stats.mean);
        out.emplace_back(base + "running_var", st.stats.var);
      }
    }
    return out;
  }

  // Loads values into existing tensors. Every model tensor must be present
  // with a matching shape, and every provided entry must belong to the model.
  void load_state(const std::map<std::string, Tensor<T>>& state) {
    auto own = named_state();
    if (state.size() != own.size())
      throw std::invalid_argument("load_state: model '" + spec_.name + "' has " +
                                  std::to_string(own.size()) + " tensors, checkpoint provides " +
                                  std::to_string(state.size()));
    for (auto& [name, tensor] : own) {
      auto it = state.find(name);
      if (it == state.end())
        throw std::invalid_argument("load_state: missing tensor '" + name + "'");
      if (it->second.shape() != tensor.shape())
        throw std::invalid_argument("load_state: shape mismatch for '" + name + "': model " +
                                    shape_str(tensor.shape()) + ", checkpoint " +
                                    shape_str(it->second.shape()));
      std::copy(it->second.data(), it->second.data() + tensor.numel(), tensor.data());
    }
  }

  // FNV-1a over every persistent tensor's raw bytes in state order.
  uint64_t state_hash() {
    uint64_t h = 0xCBF29CE484222325ull;
    for (auto& [name, tensor] : named_state()) {
      h = fnv1a64(name.data(), name.size(), h);
      h = fnv1a64(tensor.data(), sizeof(T) * static_cast<size_t>(tensor.numel()), h);
    }
    return h;
  }

 private:
  struct LayerState {
    Tensor<T> weight, bias;           // conv / fully_connected
    Tensor<T> gamma, beta;            // batchnorm
    RunningStats<T> stats;            // batchnorm buffers
  };

  static void xavier_fill(Tensor<T>& w, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (int64_t i = 0; i < w.numel(); ++i)
      w.data()[i] = static_cast<T>(rng.uniform(-a, a));
  }

  void check_input(const Tensor<T>& x) const {
    if (spec_.vector_input) {
      if (x.rank() != 2 || x.dim(1) != spec_.in_dim)
        throw std::invalid_argument("model '" + spec_.name + "': expected input (N," +
                                    std::to_string(spec_.in_dim) + "), got " +
                                    shape_str(x.shape()));
    } else {
      if (x.rank() != 4 || x.dim(1) != spec_.in_channels)
        throw std::invalid_argument("model '" + spec_.name + "': expected input (N," +
                                    std::to_string(spec_.in_channels) + ",H,W), got " +
                                    shape_str(x.shape()));
    }
  }

  Tensor<T> run_layer(size_t i, const Tensor<T>& cur, const std::vector<Tensor<T>>& outs,
                      Tape<T>* tape, bool train) {
    const LayerDef& l = spec_.layers[i];
    LayerState& st = layers_[i];
    switch (l.kind) {
      case LayerKind::conv:
        return conv2d(cur, st.weight, st.bias, l.stride, l.padding, tape);
      case LayerKind::batchnorm:
        return batchnorm(cur, st.gamma, st.beta, train ? BnMode::train : BnMode::infer, st.stats,
                         T(1e-5), T(0.9), tape);
      case LayerKind::relu:
        return relu(cur, tape);
      case LayerKind::maxpool:
        return maxpool2d(cur, l.pool_kernel, l.pool_stride, tape);
      case LayerKind::global_avg_pool:
        return global_avg_pool(cur, tape);
      case LayerKind::fully_connected:
        return fully_connected(cur, st.weight, st.bias, tape);
      case LayerKind::add:
        return add(cur, outs[static_cast<size_t>(l.skip_from)], tape);
    }
    throw std::logic_error("model: unknown layer kind");
  }

  ModelSpec spec_;
  std::vector<LayerState> layers_;
};

}  // namespace bridgekd
