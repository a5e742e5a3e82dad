#pragma once

#include <functional>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "bridgekd/tensor.hpp"

namespace bridgekd {

// Reverse-mode tape. Operations append a closure plus the tensors they
// touched; backward() replays the closures in reverse. Recording order is
// execution order, which keeps the tape topologically sorted by construction.
template <typename T>
class Tape {
 public:
  void record(std::vector<Tensor<T>> touched, std::function<void()> backward_fn) {
    nodes_.push_back(Node{std::move(touched), std::move(backward_fn)});
  }

  size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and runs recorded closures newest-first.
  // Gradients of every touched tensor are zeroed up front so repeated
  // backward calls after re-recording do not double-count.
  void backward(Tensor<T> loss) {
    if (loss.numel() != 1)
      throw std::invalid_argument("Tape::backward: loss must be a scalar, got shape " +
                                  shape_str(loss.shape()));
    std::unordered_set<const void*> seen;
    auto reset = [&seen](Tensor<T>& t) {
      if (!t.has_grad()) t.ensure_grad();
      if (seen.insert(t.storage_id()).second) t.zero_grad();
    };
    reset(loss);
    for (auto& node : nodes_)
      for (auto& t : node.touched) reset(t);
    loss.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
  }

 private:
  struct Node {
    std::vector<Tensor<T>> touched;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
};

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  tape.backward(loss);
}

}  // namespace bridgekd
