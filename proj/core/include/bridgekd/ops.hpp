#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "bridgekd/tape.hpp"
#include "bridgekd/tensor.hpp"

// Differentiable operations. Every op computes its forward result eagerly and,
// when a tape is supplied, records a backward closure. Gradients accumulate
// into inputs that carry a gradient buffer (leaves marked requires_grad and
// intermediates produced by earlier taped ops); inputs without one are
// treated as constants.

namespace bridgekd {

namespace detail {

// C[M,N] += A[M,K] * B[K,N]. Loop order keeps the inner loop contiguous in
// both B and C so the compiler can vectorize it.
template <typename T>
void gemm_nn_accum(const T* A, const T* B, T* C, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const T* a = A + static_cast<size_t>(i) * K;
    T* c = C + static_cast<size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      T av = a[k];
      const T* b = B + static_cast<size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt_accum(const T* A, const T* B, T* C, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const T* a = A + static_cast<size_t>(i) * K;
    T* c = C + static_cast<size_t>(i) * N;
    for (int j = 0; j < N; ++j) {
      const T* b = B + static_cast<size_t>(j) * K;
      T acc = T(0);
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn_accum(const T* A, const T* B, T* C, int M, int K, int N) {
  for (int k = 0; k < K; ++k) {
    const T* a = A + static_cast<size_t>(k) * M;
    const T* b = B + static_cast<size_t>(k) * N;
    for (int i = 0; i < M; ++i) {
      T av = a[i];
      T* c = C + static_cast<size_t>(i) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

// Lowers one image (C,H,W) to columns of shape (C*k*k, Ho*Wo). Out-of-bounds
// taps read as zero padding.
template <typename T>
void im2col(const T* img, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            T* cols) {
  int row = 0;
  for (int c = 0; c < C; ++c) {
    const T* chan = img + static_cast<size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        T* out = cols + static_cast<size_t>(row) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          int iy = oy * stride + ky - pad;
          T* orow = out + static_cast<size_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(orow, orow + Wo, T(0));
            continue;
          }
          const T* irow = chan + static_cast<size_t>(iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            int ix = ox * stride + kx - pad;
            orow[ox] = (ix >= 0 && ix < W) ? irow[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the image.
template <typename T>
void col2im_accum(const T* cols, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
                  T* img) {
  int row = 0;
  for (int c = 0; c < C; ++c) {
    T* chan = img + static_cast<size_t>(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        const T* in = cols + static_cast<size_t>(row) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          T* irow = chan + static_cast<size_t>(iy) * W;
          const T* crow = in + static_cast<size_t>(oy) * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) irow[ix] += crow[ox];
          }
        }
      }
    }
  }
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

// y = conv(x, w) + b with square kernels. x: (N,Cin,H,W), w: (Cout,Cin,k,k),
// b: (Cout). Output spatial size: (H + 2*padding - k) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0, Tape<T>* tape = nullptr) {
  using detail::require;
  require(input.rank() == 4, "conv2d: input must be (N,C,H,W), got " + shape_str(input.shape()));
  require(weight.rank() == 4,
          "conv2d: weight must be (Cout,Cin,k,k), got " + shape_str(weight.shape()));
  const int N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = weight.dim(0), k = weight.dim(2);
  require(weight.dim(1) == Cin, "conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                    " input channels, input has " + std::to_string(Cin));
  require(weight.dim(3) == k, "conv2d: kernel must be square");
  require(k == 1 || k == 3, "conv2d: kernel size must be 1 or 3");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  require(H + 2 * padding >= k && W + 2 * padding >= k,
          "conv2d: input " + std::to_string(H) + "x" + std::to_string(W) +
              " too small for kernel " + std::to_string(k));
  require(bias.rank() == 1 && bias.dim(0) == Cout,
          "conv2d: bias must be (Cout), got " + shape_str(bias.shape()));

  const int Ho = (H + 2 * padding - k) / stride + 1;
  const int Wo = (W + 2 * padding - k) / stride + 1;
  const int K = Cin * k * k;
  const int S = Ho * Wo;

  Tensor<T> out({N, Cout, Ho, Wo});
  std::vector<T> cols(static_cast<size_t>(K) * S);
  for (int n = 0; n < N; ++n) {
    detail::im2col(input.data() + static_cast<size_t>(n) * Cin * H * W, Cin, H, W, k, stride,
                   padding, Ho, Wo, cols.data());
    T* y = out.data() + static_cast<size_t>(n) * Cout * S;
    for (int c = 0; c < Cout; ++c) std::fill(y + static_cast<size_t>(c) * S, y + (c + 1) * static_cast<size_t>(S), bias.data()[c]);
    detail::gemm_nn_accum(weight.data(), cols.data(), y, Cout, K, S);
  }

  if (tape) {
    out.ensure_grad();
    Tensor<T> x = input, w = weight, b = bias, y = out;
    tape->record({x, w, b, y}, [x, w, b, y, N, Cin, H, W, Cout, k, stride, padding, Ho, Wo, K,
                                S]() mutable {
      std::vector<T> cols(static_cast<size_t>(K) * S);
      std::vector<T> dcols(static_cast<size_t>(K) * S);
      const bool need_dx = x.has_grad(), need_dw = w.has_grad(), need_db = b.has_grad();
      for (int n = 0; n < N; ++n) {
        const T* dy = y.grad() + static_cast<size_t>(n) * Cout * S;
        if (need_dw || need_dx)
          detail::im2col(x.data() + static_cast<size_t>(n) * Cin * H * W, Cin, H, W, k, stride,
                         padding, Ho, Wo, cols.data());
        if (need_dw) detail::gemm_nt_accum(dy, cols.data(), w.grad(), Cout, S, K);
        if (need_db) {
          for (int c = 0; c < Cout; ++c) {
            T acc = T(0);
            const T* row = dy + static_cast<size_t>(c) * S;
            for (int j = 0; j < S; ++j) acc += row[j];
            b.grad()[c] += acc;
          }
        }
        if (need_dx) {
          std::fill(dcols.begin(), dcols.end(), T(0));
          detail::gemm_tn_accum(w.data(), dy, dcols.data(), K, Cout, S);
          detail::col2im_accum(dcols.data(), Cin, H, W, k, stride, padding, Ho, Wo,
                               x.grad() + static_cast<size_t>(n) * Cin * H * W);
        }
      }
    });
  }
  return out;
}

// Max pooling with first-occurrence (row-major) tie break. Requires the
// window tiling to cover the input exactly.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int k = 2, int stride = 2, Tape<T>* tape = nullptr) {
  using detail::require;
  require(input.rank() == 4, "maxpool2d: input must be (N,C,H,W), got " + shape_str(input.shape()));
  require(k >= 1 && stride >= 1, "maxpool2d: kernel and stride must be >= 1");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  require(H >= k && W >= k, "maxpool2d: input smaller than window");
  require((H - k) % stride == 0 && (W - k) % stride == 0,
          "maxpool2d: window tiling must cover the input exactly (got " + std::to_string(H) + "x" +
              std::to_string(W) + ", k=" + std::to_string(k) + ", stride=" + std::to_string(stride) +
              ")");
  const int Ho = (H - k) / stride + 1;
  const int Wo = (W - k) / stride + 1;

  Tensor<T> out({N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int32_t>>(out.numel());
  const T* xp = input.data();
  T* yp = out.data();
  int64_t oi = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* plane = xp + (static_cast<size_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox, ++oi) {
          int iy0 = oy * stride, ix0 = ox * stride;
          T best = plane[static_cast<size_t>(iy0) * W + ix0];
          int32_t best_idx = iy0 * W + ix0;
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              int idx = (iy0 + ky) * W + (ix0 + kx);
              if (plane[idx] > best) {
                best = plane[idx];
                best_idx = idx;
              }
            }
          }
          yp[oi] = best;
          (*argmax)[oi] = best_idx;
        }
      }
    }
  }

  if (tape) {
    out.ensure_grad();
    Tensor<T> x = input, y = out;
    tape->record({x, y}, [x, y, argmax, N, C, H, W, Ho, Wo]() mutable {
      if (!x.has_grad()) return;
      const T* dy = y.grad();
      int64_t oi = 0;
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          T* dplane = x.grad() + (static_cast<size_t>(n) * C + c) * H * W;
          for (int j = 0; j < Ho * Wo; ++j, ++oi) dplane[(*argmax)[oi]] += dy[oi];
        }
    });
  }
  return out;
}

// y = x * W^T + b. x: (N,din), W: (dout,din), b: (dout).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                          Tape<T>* tape = nullptr) {
  using detail::require;
  require(input.rank() == 2, "fully_connected: input must be (N,din), got " + shape_str(input.shape()));
  require(weight.rank() == 2,
          "fully_connected: weight must be (dout,din), got " + shape_str(weight.shape()));
  const int N = input.dim(0), din = input.dim(1), dout = weight.dim(0);
  require(weight.dim(1) == din, "fully_connected: weight expects input dim " +
                                    std::to_string(weight.dim(1)) + ", got " + std::to_string(din));
  require(bias.rank() == 1 && bias.dim(0) == dout,
          "fully_connected: bias must be (dout), got " + shape_str(bias.shape()));

  Tensor<T> out({N, dout});
  for (int n = 0; n < N; ++n)
    std::copy(bias.data(), bias.data() + dout, out.data() + static_cast<size_t>(n) * dout);
  detail::gemm_nt_accum(input.data(), weight.data(), out.data(), N, din, dout);

  if (tape) {
    out.ensure_grad();
    Tensor<T> x = input, w = weight, b = bias, y = out;
    tape->record({x, w, b, y}, [x, w, b, y, N, din, dout]() mutable {
      const T* dy = y.grad();
      if (x.has_grad()) detail::gemm_nn_accum(dy, w.data(), x.grad(), N, dout, din);
      if (w.has_grad()) detail::gemm_tn_accum(dy, x.data(), w.grad(), dout, N, din);
      if (b.has_grad()) {
        for (int n = 0; n < N; ++n) {
          const T* row = dy + static_cast<size_t>(n) * dout;
          for (int o = 0; o < dout; ++o) b.grad()[o] += row[o];
        }
      }
    });
  }
  return out;
}

// Elementwise max(x, 0). The subgradient at exactly 0 is taken as 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& input, Tape<T>* tape = nullptr) {
  Tensor<T> out(input.shape());
  const T* xp = input.data();
  T* yp = out.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);

  if (tape) {
    out.ensure_grad();
    Tensor<T> x = input, y = out;
    tape->record({x, y}, [x, y, n]() mutable {
      if (!x.has_grad()) return;
      const T* xp = x.data();
      const T* dy = y.grad();
      T* dx = x.grad();
      for (int64_t i = 0; i < n; ++i)
        if (xp[i] > T(0)) dx[i] += dy[i];
    });
  }
  return out;
}

enum class BnMode { train, infer };

template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;
};

// Batch normalization over the channel axis. Accepts (N,C,H,W) or (N,C).
// Train mode uses biased batch statistics and folds them into the running
// estimates as running = momentum * running + (1 - momentum) * batch.
// Infer mode normalizes with the running estimates and never mutates them.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                    BnMode mode, RunningStats<T>& stats, T eps = T(1e-5), T momentum = T(0.9),
                    Tape<T>* tape = nullptr) {
  using detail::require;
  require(input.rank() == 4 || input.rank() == 2,
          "batchnorm: input must be (N,C,H,W) or (N,C), got " + shape_str(input.shape()));
  const int N = input.dim(0), C = input.dim(1);
  const int S = input.rank() == 4 ? input.dim(2) * input.dim(3) : 1;
  require(gamma.rank() == 1 && gamma.dim(0) == C, "batchnorm: gamma must be (C)");
  require(beta.rank() == 1 && beta.dim(0) == C, "batchnorm: beta must be (C)");
  require(stats.mean.defined() && stats.mean.numel() == C && stats.var.numel() == C,
          "batchnorm: running stats must be (C)");
  if (mode == BnMode::train)
    require(N >= 2, "batchnorm: train mode requires batch size >= 2, got " + std::to_string(N));

  const int64_t m = static_cast<int64_t>(N) * S;
  Tensor<T> out(input.shape());
  Tensor<T> xhat(input.shape());
  std::vector<T> inv_std(C);

  auto elem = [&](const T* base, int n, int c, int s) -> const T& {
    return base[(static_cast<size_t>(n) * C + c) * S + s];
  };

  for (int c = 0; c < C; ++c) {
    T mu, var;
    if (mode == BnMode::train) {
      double sum = 0.0;
      for (int n = 0; n < N; ++n)
        for (int s = 0; s < S; ++s) sum += elem(input.data(), n, c, s);
      mu = static_cast<T>(sum / static_cast<double>(m));
      double sq = 0.0;
      for (int n = 0; n < N; ++n)
        for (int s = 0; s < S; ++s) {
          double d = elem(input.data(), n, c, s) - mu;
          sq += d * d;
        }
      var = static_cast<T>(sq / static_cast<double>(m));
      stats.mean.data()[c] = momentum * stats.mean.data()[c] + (T(1) - momentum) * mu;
      stats.var.data()[c] = momentum * stats.var.data()[c] + (T(1) - momentum) * var;
    } else {
      mu = stats.mean.data()[c];
      var = stats.var.data()[c];
    }
    T inv = T(1) / std::sqrt(var + eps);
    inv_std[c] = inv;
    for (int n = 0; n < N; ++n)
      for (int s = 0; s < S; ++s) {
        size_t i = (static_cast<size_t>(n) * C + c) * S + s;
        T xh = (input.data()[i] - mu) * inv;
        xhat.data()[i] = xh;
        out.data()[i] = gamma.data()[c] * xh + beta.data()[c];
      }
  }

  if (tape) {
    out.ensure_grad();
    Tensor<T> x = input, g = gamma, b = beta, y = out;
    auto inv = std::make_shared<std::vector<T>>(std::move(inv_std));
    bool train = mode == BnMode::train;
    tape->record({x, g, b, y}, [x, g, b, y, xhat, inv, N, C, S, m, train]() mutable {
      const T* dy = y.grad();
      for (int c = 0; c < C; ++c) {
        double dgamma = 0.0, dbeta = 0.0;
        for (int n = 0; n < N; ++n)
          for (int s = 0; s < S; ++s) {
            size_t i = (static_cast<size_t>(n) * C + c) * S + s;
            dgamma += static_cast<double>(dy[i]) * xhat.data()[i];
            dbeta += dy[i];
          }
        if (g.has_grad()) g.grad()[c] += static_cast<T>(dgamma);
        if (b.has_grad()) b.grad()[c] += static_cast<T>(dbeta);
        if (!x.has_grad()) continue;
        T gc = g.data()[c];
        T ic = (*inv)[c];
        if (train) {
          // dL/dx via the batch-statistics chain rule, expressed with the
          // saved normalized activations:
          // dx = (gamma*inv/m) * (m*dy - sum(dy) - xhat * sum(dy*xhat))
          T mean_dy = static_cast<T>(dbeta / static_cast<double>(m));
          T mean_dyxh = static_cast<T>(dgamma / static_cast<double>(m));
          for (int n = 0; n < N; ++n)
            for (int s = 0; s < S; ++s) {
              size_t i = (static_cast<size_t>(n) * C + c) * S + s;
              x.grad()[i] += gc * ic * (dy[i] - mean_dy - xhat.data()[i] * mean_dyxh);
            }
        } else {
          for (int n = 0; n < N; ++n)
            for (int s = 0; s < S; ++s) {
              size_t i = (static_cast<size_t>(n) * C + c) * S + s;
              x.grad()[i] += gc * ic * dy[i];
            }
        }
      }
    });
  }
  return out;
}

// (N,C,H,W) -> (N,C) spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input, Tape<T>* tape = nullptr) {
  detail::require(input.rank() == 4,
                  "global_avg_pool: input must be (N,C,H,W), got " + shape_str(input.shape()));
  const int N = input.dim(0), C = input.dim(1), S = input.dim(2) * input.dim(3);
  Tensor<T> out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* plane = input.data() + (static_cast<size_t>(n) * C + c) * S;
      double acc = 0.0;
      for (int s = 0; s < S; ++s) acc += plane[s];
      out.data()[static_cast<size_t>(n) * C + c] = static_cast<T>(acc / S);
    }

  if (tape) {
    out.ensure_grad();
    Tensor<T> x = input, y = out;
    tape->record({x, y}, [x, y, N, C, S]() mutable {
      if (!x.has_grad()) return;
      const T scale = T(1) / static_cast<T>(S);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          T g = y.grad()[static_cast<size_t>(n) * C + c] * scale;
          T* dplane = x.grad() + (static_cast<size_t>(n) * C + c) * S;
          for (int s = 0; s < S; ++s) dplane[s] += g;
        }
    });
  }
  return out;
}

// Row-wise softmax of logits / temperature, with max subtraction for
// stability. temperature must be positive; 1 recovers plain softmax.
template <typename T>
Tensor<T> softmax_t(const Tensor<T>& logits, T temperature, Tape<T>* tape = nullptr) {
  using detail::require;
  require(logits.rank() == 2, "softmax_t: logits must be (N,K), got " + shape_str(logits.shape()));
  require(temperature > T(0), "softmax_t: temperature must be positive");
  const int N = logits.dim(0), K = logits.dim(1);
  Tensor<T> out({N, K});
  for (int n = 0; n < N; ++n) {
    const T* z = logits.data() + static_cast<size_t>(n) * K;
    T* p = out.data() + static_cast<size_t>(n) * K;
    T zmax = z[0];
    for (int i = 1; i < K; ++i) zmax = std::max(zmax, z[i]);
    double sum = 0.0;
    for (int i = 0; i < K; ++i) {
      p[i] = std::exp((z[i] - zmax) / temperature);
      sum += p[i];
    }
    T inv = static_cast<T>(1.0 / sum);
    for (int i = 0; i < K; ++i) p[i] *= inv;
  }

  if (tape) {
    out.ensure_grad();
    Tensor<T> z = logits, p = out;
    tape->record({z, p}, [z, p, N, K, temperature]() mutable {
      if (!z.has_grad()) return;
      for (int n = 0; n < N; ++n) {
        const T* pr = p.data() + static_cast<size_t>(n) * K;
        const T* dp = p.grad() + static_cast<size_t>(n) * K;
        T* dz = z.grad() + static_cast<size_t>(n) * K;
        double dot = 0.0;
        for (int i = 0; i < K; ++i) dot += static_cast<double>(dp[i]) * pr[i];
        for (int i = 0; i < K; ++i)
          dz[i] += pr[i] * (dp[i] - static_cast<T>(dot)) / temperature;
      }
    });
  }
  return out;
}

// Mean over the batch of -sum_k target[k] * log softmax(logits / T)[k].
// Differentiates with respect to logits only; targets are constants. Each
// target row must sum to 1 within 1e-4. Probabilities are clamped at 1e-12
// before the log.
template <typename T>
Tensor<T> soft_cross_entropy(const Tensor<T>& logits, const Tensor<T>& targets,
                             T temperature = T(1), Tape<T>* tape = nullptr) {
  using detail::require;
  require(logits.rank() == 2, "soft_cross_entropy: logits must be (N,K)");
  require(targets.rank() == 2 && targets.dim(0) == logits.dim(0) &&
              targets.dim(1) == logits.dim(1),
          "soft_cross_entropy: targets shape " + shape_str(targets.shape()) +
              " does not match logits " + shape_str(logits.shape()));
  require(temperature > T(0), "soft_cross_entropy: temperature must be positive");
  const int N = logits.dim(0), K = logits.dim(1);
  for (int n = 0; n < N; ++n) {
    double sum = 0.0;
    for (int i = 0; i < K; ++i) sum += targets.data()[static_cast<size_t>(n) * K + i];
    require(std::abs(sum - 1.0) <= 1e-4, "soft_cross_entropy: target row " + std::to_string(n) +
                                             " sums to " + std::to_string(sum) + ", expected 1");
  }

  Tensor<T> probs = softmax_t<T>(logits, temperature, nullptr);
  double loss = 0.0;
  for (int64_t i = 0; i < probs.numel(); ++i) {
    double p = std::max(static_cast<double>(probs.data()[i]), 1e-12);
    loss -= static_cast<double>(targets.data()[i]) * std::log(p);
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / N));

  if (tape) {
    out.ensure_grad();
    Tensor<T> z = logits, t = targets, y = out;
    tape->record({z, y}, [z, t, y, probs, N, K, temperature]() mutable {
      if (!z.has_grad()) return;
      const T go = y.grad()[0];
      const T scale = go / (static_cast<T>(N) * temperature);
      for (int64_t i = 0; i < z.numel(); ++i)
        z.grad()[i] += scale * (probs.data()[i] - t.data()[i]);
    });
  }
  return out;
}

// Mean over the batch (first axis) of the summed squared difference over the
// remaining axes. Differentiates with respect to both inputs.
template <typename T>
Tensor<T> sum_squared_error(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  detail::require(a.shape() == b.shape(), "sum_squared_error: shapes differ, " +
                                              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int N = a.dim(0);
  double loss = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = static_cast<double>(a.data()[i]) - b.data()[i];
    loss += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / N));

  if (tape) {
    out.ensure_grad();
    Tensor<T> ta = a, tb = b, y = out;
    tape->record({ta, tb, y}, [ta, tb, y, N]() mutable {
      const T scale = y.grad()[0] * T(2) / static_cast<T>(N);
      for (int64_t i = 0; i < ta.numel(); ++i) {
        T d = scale * (ta.data()[i] - tb.data()[i]);
        if (ta.has_grad()) ta.grad()[i] += d;
        if (tb.has_grad()) tb.grad()[i] -= d;
      }
    });
  }
  return out;
}

// Elementwise sum of equally shaped tensors (skip connections, loss totals).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  detail::require(a.shape() == b.shape(),
                  "add: shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];

  if (tape) {
    out.ensure_grad();
    Tensor<T> ta = a, tb = b, y = out;
    tape->record({ta, tb, y}, [ta, tb, y]() mutable {
      const T* dy = y.grad();
      for (int64_t i = 0; i < y.numel(); ++i) {
        if (ta.has_grad()) ta.grad()[i] += dy[i];
        if (tb.has_grad()) tb.grad()[i] += dy[i];
      }
    });
  }
  return out;
}

// y = s * x for a compile-time-constant coefficient (loss weighting).
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s, Tape<T>* tape = nullptr) {
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = s * x.data()[i];
  if (tape) {
    out.ensure_grad();
    Tensor<T> tx = x, y = out;
    tape->record({tx, y}, [tx, y, s]() mutable {
      if (!tx.has_grad()) return;
      for (int64_t i = 0; i < y.numel(); ++i) tx.grad()[i] += s * y.grad()[i];
    });
  }
  return out;
}

// Plain stochastic gradient descent: w -= lr * g, then g is cleared. Tensors
// without an allocated gradient buffer are skipped.
template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, T lr) {
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    T* w = p.data();
    T* g = p.grad();
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      w[i] -= lr * g[i];
      g[i] = T(0);
    }
  }
}

}  // namespace bridgekd
