#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bridgekd/rng.hpp"
#include "bridgekd/tape.hpp"
#include "bridgekd/tensor.hpp"

namespace bridgekd {

// Finite-difference verification of reverse-mode gradients. Always runs in
// double precision: float rounding error would drown the comparison.
//
// fn is called as fn(point, tape) and must return a scalar loss tensor. The
// first call records a tape to obtain analytic gradients; subsequent calls
// with a null tape evaluate the perturbed loss for central differences.
// Returns the maximum relative error over the checked coordinates, where
// rel = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
//
// max_coords < 0 checks every coordinate; otherwise a deterministic sample
// of that many coordinates (seeded by coord_seed) keeps large parameter
// tensors affordable.
template <typename Fn>
double grad_check(Fn&& fn, Tensor<double> point, double eps = 1e-4, int max_coords = -1,
                  uint64_t coord_seed = 0) {
  point.set_requires_grad(true);
  Tape<double> tape;
  Tensor<double> loss = fn(point, &tape);
  tape.backward(loss);
  std::vector<double> analytic(point.grad(), point.grad() + point.numel());

  std::vector<int64_t> coords;
  const int64_t n = point.numel();
  if (max_coords < 0 || max_coords >= n) {
    coords.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
  } else {
    Rng rng(derive_seed(coord_seed, "grad-check-coords"));
    for (int i = 0; i < max_coords; ++i)
      coords.push_back(static_cast<int64_t>(rng.next() % static_cast<uint64_t>(n)));
  }

  double max_rel = 0.0;
  for (int64_t i : coords) {
    const double orig = point.data()[i];
    point.data()[i] = orig + eps;
    const double fp = fn(point, nullptr).item();
    point.data()[i] = orig - eps;
    const double fm = fn(point, nullptr).item();
    point.data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[static_cast<size_t>(i)];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
  }
  return max_rel;
}

}  // namespace bridgekd
