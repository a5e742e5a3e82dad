#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridgekd/model.hpp"
#include "bridgekd/tensor.hpp"

namespace bridgekd {

// Checkpoint container format, little-endian throughout:
//   magic "BDCK" | u32 version (1) | u32 tensor count
//   per tensor: u16 name length | name bytes (UTF-8)
//               u8 dtype (0 = f32, 1 = f64) | u8 rank | u32 dims[rank]
//               raw IEEE-754 element bytes
struct CheckpointTensor {
  std::string name;
  uint8_t dtype = 0;
  std::vector<uint32_t> dims;
  std::vector<char> raw;

  int64_t numel() const {
    int64_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

void save_checkpoint(const std::string& path, const std::vector<CheckpointTensor>& tensors);
std::vector<CheckpointTensor> load_checkpoint(const std::string& path);

template <typename T>
CheckpointTensor to_record(const std::string& name, const Tensor<T>& t) {
  CheckpointTensor rec;
  rec.name = name;
  rec.dtype = dtype_code<T>::value;
  for (int d : t.shape()) rec.dims.push_back(static_cast<uint32_t>(d));
  rec.raw.resize(sizeof(T) * static_cast<size_t>(t.numel()));
  std::memcpy(rec.raw.data(), t.data(), rec.raw.size());
  return rec;
}

template <typename T>
Tensor<T> from_record(const CheckpointTensor& rec) {
  if (rec.dtype != dtype_code<T>::value)
    throw std::invalid_argument("checkpoint tensor '" + rec.name + "': dtype code " +
                                std::to_string(rec.dtype) + " does not match requested type");
  std::vector<int> shape(rec.dims.begin(), rec.dims.end());
  Tensor<T> t(shape);
  if (rec.raw.size() != sizeof(T) * static_cast<size_t>(t.numel()))
    throw std::invalid_argument("checkpoint tensor '" + rec.name + "': payload size mismatch");
  std::memcpy(t.data(), rec.raw.data(), rec.raw.size());
  return t;
}

// Persists every named tensor of the model (parameters and batchnorm
// buffers). Loading is strict: names and shapes must match exactly.
template <typename T>
void save_model(const std::string& path, Model<T>& model) {
  std::vector<CheckpointTensor> recs;
  for (auto& [name, tensor] : model.named_state()) recs.push_back(to_record(name, tensor));
  save_checkpoint(path, recs);
}

template <typename T>
void load_model(const std::string& path, Model<T>& model) {
  std::map<std::string, Tensor<T>> state;
  for (const auto& rec : load_checkpoint(path)) state.emplace(rec.name, from_record<T>(rec));
  model.load_state(state);
}

}  // namespace bridgekd
