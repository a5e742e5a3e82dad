#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bridgekd {

template <typename T>
struct dtype_code;
template <>
struct dtype_code<float> {
  static constexpr uint8_t value = 0;
};
template <>
struct dtype_code<double> {
  static constexpr uint8_t value = 1;
};

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// Dense row-major tensor. Copies are shallow handles onto shared storage;
// clone() makes a deep copy. The gradient buffer lives alongside the data so
// that an operation recorded on a tape can accumulate into its inputs without
// any global registry.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : impl_(std::make_shared<Impl>()) {
    impl_->shape = std::move(shape);
    impl_->data.assign(checked_numel(impl_->shape), T(0));
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    for (auto& v : t.impl_->data) v = value;
    return t;
  }

  static Tensor scalar(T value) { return full({1}, value); }

  static Tensor from(std::vector<int> shape, std::vector<T> values) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    if (static_cast<int64_t>(values.size()) != checked_numel(t.impl_->shape))
      throw std::invalid_argument("Tensor::from: value count does not match shape " +
                                  shape_str(t.impl_->shape));
    t.impl_->data = std::move(values);
    return t;
  }

  bool defined() const { return impl_ != nullptr; }

  const std::vector<int>& shape() const { return impl().shape; }
  int rank() const { return static_cast<int>(impl().shape.size()); }
  int dim(int i) const { return impl().shape.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(impl().data.size()); }

  T* data() { return impl().data.data(); }
  const T* data() const { return impl().data.data(); }
  std::vector<T>& values() { return impl().data; }
  const std::vector<T>& values() const { return impl().data; }

  T item() const {
    if (numel() != 1) throw std::logic_error("Tensor::item: tensor is not a scalar");
    return impl().data[0];
  }

  // Marking a tensor as requiring grad allocates the gradient buffer, so a
  // parameter that never appears on a loss path reports an all-zero gradient.
  void set_requires_grad(bool v) {
    impl().requires_grad = v;
    if (v) ensure_grad();
  }
  bool requires_grad() const { return impl().requires_grad; }

  bool has_grad() const { return defined() && !impl_->grad.empty(); }

  void ensure_grad() {
    if (impl().grad.empty()) impl().grad.assign(impl().data.size(), T(0));
  }

  void zero_grad() {
    for (auto& g : impl().grad) g = T(0);
  }

  T* grad() {
    require_grad_storage();
    return impl().grad.data();
  }
  const T* grad() const {
    require_grad_storage();
    return impl().grad.data();
  }

  // Identity of the underlying storage; used to deduplicate tensors that
  // appear in several tape nodes.
  const void* storage_id() const { return static_cast<const void*>(impl_.get()); }

  Tensor clone() const {
    Tensor t;
    if (!impl_) return t;
    t.impl_ = std::make_shared<Impl>(*impl_);
    return t;
  }

  bool all_finite() const {
    for (const T& v : impl().data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  static int64_t checked_numel(const std::vector<int>& shape) {
    if (shape.empty()) throw std::invalid_argument("Tensor: rank-0 shapes are not supported");
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension in " + shape_str(shape));
      n *= d;
    }
    return n;
  }

  Impl& impl() {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    return *impl_;
  }
  const Impl& impl() const {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    return *impl_;
  }

  void require_grad_storage() const {
    if (!has_grad()) throw std::logic_error("Tensor::grad: no gradient buffer allocated");
  }

  std::shared_ptr<Impl> impl_;
};

template <typename T>
Tensor<T> tensor_cast_to_double(const Tensor<T>&);

inline Tensor<double> to_double(const Tensor<float>& t) {
  std::vector<double> v(t.values().begin(), t.values().end());
  return Tensor<double>::from(t.shape(), std::move(v));
}

inline Tensor<float> to_float(const Tensor<double>& t) {
  std::vector<float> v(t.values().begin(), t.values().end());
  return Tensor<float>::from(t.shape(), std::move(v));
}

}  // namespace bridgekd
