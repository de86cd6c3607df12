#include "sarc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sarc/error.hpp"
#include "sarc/gemm.hpp"
#include "sarc/parallel.hpp"

namespace sarc {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
BasicTensor<T> record(Shape shape, std::vector<T> value, std::vector<NodePtr<T>> inputs,
                      const char* op, std::function<void(detail::Node<T>&)> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool track = std::any_of(inputs.begin(), inputs.end(),
                                 [](const NodePtr<T>& n) { return n->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(inputs);
    node->backward = std::move(backward);
  }
  return BasicTensor<T>::from_node(std::move(node));
}

[[noreturn]] void dim_error(const std::string& op, const std::string& what, const Shape& a,
                            const Shape& b) {
  throw DimensionError(op + ": " + what + " (" + shape_str(a) + " vs " + shape_str(b) + ")");
}

void require_rank(const std::string& op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(op + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(s));
  }
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t kernels, kh, kw;
  std::size_t stride, padding;
  std::size_t out_h, out_w;

  std::size_t col_rows() const { return channels * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& w, std::size_t stride,
                           std::size_t padding) {
  require_rank("conv2d input", in, 4);
  require_rank("conv2d weight", w, 4);
  if (in[1] != w[1]) dim_error("conv2d", "weight channels do not match input channels", in, w);
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (w[2] > in[2] + 2 * padding || w[3] > in[3] + 2 * padding) {
    dim_error("conv2d", "kernel larger than padded input", in, w);
  }
  ConvGeometry g{in[0], in[1], in[2], in[3], w[0], w[2], w[3], stride, padding, 0, 0};
  g.out_h = (in[2] + 2 * padding - w[2]) / stride + 1;
  g.out_w = (in[3] + 2 * padding - w[3]) / stride + 1;
  return g;
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t p = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? T(0)
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accumulate(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t p = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = dx + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * p;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

// Fixed partition of the batch for gradient reduction; independent of the
// worker count so that summation order never changes.
constexpr std::size_t kReduceChunks = 8;

template <typename T>
BasicTensor<T> conv2d_impl(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                           const BasicTensor<T>* bias, std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), stride, padding);
  if (bias && (bias->rank() != 1 || bias->extent(0) != g.kernels)) {
    dim_error("conv2d", "bias must have one entry per kernel", bias->shape(), weight.shape());
  }
  const std::size_t rows = g.col_rows();
  const std::size_t cols = g.col_cols();
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = g.kernels * cols;

  std::vector<T> out(g.batch * out_stride);
  const T* x = input.values().data();
  const T* w = weight.values().data();
  const T* bvals = bias ? bias->values().data() : nullptr;

  parallel_for(0, static_cast<std::int64_t>(g.batch), [&](std::int64_t bi) {
    const auto b = static_cast<std::size_t>(bi);
    std::vector<T> col;
    const T* colp = x + b * in_stride;
    if (!g.is_pointwise()) {
      col.resize(rows * cols);
      im2col(g, x + b * in_stride, col.data());
      colp = col.data();
    }
    T* y = out.data() + b * out_stride;
    kernels::gemm_nn(g.kernels, cols, rows, w, rows, colp, cols, y, cols, false);
    if (bvals) {
      for (std::size_t k = 0; k < g.kernels; ++k) {
        T* yk = y + k * cols;
        for (std::size_t j = 0; j < cols; ++j) yk[j] += bvals[k];
      }
    }
  });

  std::vector<NodePtr<T>> inputs{input.node(), weight.node()};
  if (bias) inputs.push_back(bias->node());
  auto in_node = input.node();
  auto w_node = weight.node();
  NodePtr<T> b_node = bias ? bias->node() : nullptr;

  return record<T>(
      Shape{g.batch, g.kernels, g.out_h, g.out_w}, std::move(out), std::move(inputs), "conv2d",
      [g, in_node, w_node, b_node, rows, cols, in_stride, out_stride](detail::Node<T>& self) {
        const T* dy = self.grad.data();
        const T* xv = in_node->value.data();
        const T* wv = w_node->value.data();
        const bool need_dx = in_node->requires_grad;
        const bool need_dw = w_node->requires_grad;
        const bool need_db = b_node && b_node->requires_grad;
        T* dx = need_dx ? in_node->ensure_grad().data() : nullptr;

        const std::size_t chunks = std::min(g.batch, kReduceChunks);
        const std::size_t wsize = g.kernels * rows;
        std::vector<T> dw_parts(need_dw ? chunks * wsize : 0, T(0));
        std::vector<T> db_parts(need_db ? chunks * g.kernels : 0, T(0));

        parallel_for(0, static_cast<std::int64_t>(chunks), [&](std::int64_t ci) {
          const auto c = static_cast<std::size_t>(ci);
          const std::size_t begin = c * g.batch / chunks;
          const std::size_t end = (c + 1) * g.batch / chunks;
          std::vector<T> col, col_t, dcol;
          for (std::size_t b = begin; b < end; ++b) {
            const T* dyb = dy + b * out_stride;
            if (need_dw) {
              const T* colp = xv + b * in_stride;
              if (!g.is_pointwise()) {
                col.resize(rows * cols);
                im2col(g, xv + b * in_stride, col.data());
                colp = col.data();
              }
              col_t.resize(rows * cols);
              kernels::transpose(rows, cols, colp, col_t.data());
              kernels::gemm_nn(g.kernels, rows, cols, dyb, cols, col_t.data(), rows,
                               dw_parts.data() + c * wsize, rows, true);
            }
            if (need_db) {
              T* dbc = db_parts.data() + c * g.kernels;
              for (std::size_t k = 0; k < g.kernels; ++k) {
                T acc = 0;
                for (std::size_t j = 0; j < cols; ++j) acc += dyb[k * cols + j];
                dbc[k] += acc;
              }
            }
            if (need_dx) {
              T* dxb = dx + b * in_stride;
              if (g.is_pointwise()) {
                kernels::gemm_tn(rows, cols, g.kernels, wv, rows, dyb, cols, dxb, cols, true);
              } else {
                dcol.resize(rows * cols);
                kernels::gemm_tn(rows, cols, g.kernels, wv, rows, dyb, cols, dcol.data(), cols,
                                 false);
                col2im_accumulate(g, dcol.data(), dxb);
              }
            }
          }
        });

        if (need_dw) {
          T* dw = w_node->ensure_grad().data();
          parallel_for(0, static_cast<std::int64_t>(wsize), [&](std::int64_t i) {
            T acc = 0;
            for (std::size_t c = 0; c < chunks; ++c) acc += dw_parts[c * wsize + i];
            dw[i] += acc;
          });
        }
        if (need_db) {
          T* db = b_node->ensure_grad().data();
          for (std::size_t k = 0; k < g.kernels; ++k) {
            T acc = 0;
            for (std::size_t c = 0; c < chunks; ++c) acc += db_parts[c * g.kernels + k];
            db[k] += acc;
          }
        }
      });
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding) {
  return conv2d_impl(input, weight, &bias, stride, padding);
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      std::size_t stride, std::size_t padding) {
  return conv2d_impl<T>(input, weight, nullptr, stride, padding);
}

template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormStats<T>& stats, Mode mode) {
  const Shape& s = input.shape();
  require_rank("batchnorm2d input", s, 4);
  const std::size_t batch = s[0], channels = s[1], plane = s[2] * s[3];
  for (const BasicTensor<T>* t : std::initializer_list<const BasicTensor<T>*>{
           &gamma, &beta, &stats.running_mean, &stats.running_var}) {
    if (t->rank() != 1 || t->extent(0) != channels) {
      dim_error("batchnorm2d", "per-channel parameter has wrong length", t->shape(), s);
    }
  }
  const std::size_t count = batch * plane;
  if (mode == Mode::kTrain && count < 2) {
    throw DegenerateInputError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                               std::to_string(count) + " for shape " + shape_str(s));
  }

  const T* x = input.values().data();
  const T* gm = gamma.values().data();
  const T* bt = beta.values().data();
  auto mean = std::make_shared<std::vector<double>>(channels);
  auto invstd = std::make_shared<std::vector<double>>(channels);
  std::vector<double> batch_var(channels);

  parallel_for(0, static_cast<std::int64_t>(channels), [&](std::int64_t ci) {
    const auto c = static_cast<std::size_t>(ci);
    if (mode == Mode::kTrain) {
      double sum = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(count);
      double sq = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = x + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      (*mean)[c] = mu;
      batch_var[c] = var;
      (*invstd)[c] = 1.0 / std::sqrt(var + kBatchNormEpsilon);
    } else {
      (*mean)[c] = stats.running_mean.values()[c];
      (*invstd)[c] = 1.0 / std::sqrt(static_cast<double>(stats.running_var.values()[c]) +
                                     kBatchNormEpsilon);
    }
  });

  std::vector<T> out(input.numel());
  parallel_for(0, static_cast<std::int64_t>(channels), [&](std::int64_t ci) {
    const auto c = static_cast<std::size_t>(ci);
    const double mu = (*mean)[c], is = (*invstd)[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        out[off + i] = static_cast<T>(gm[c] * ((x[off + i] - mu) * is) + bt[c]);
      }
    }
  });

  if (mode == Mode::kTrain) {
    const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
    auto rm = stats.running_mean.values();
    auto rv = stats.running_var.values();
    for (std::size_t c = 0; c < channels; ++c) {
      rm[c] = static_cast<T>((1.0 - kBatchNormMomentum) * rm[c] + kBatchNormMomentum * (*mean)[c]);
      rv[c] = static_cast<T>((1.0 - kBatchNormMomentum) * rv[c] +
                             kBatchNormMomentum * batch_var[c] * unbias);
    }
  }

  auto in_node = input.node();
  auto g_node = gamma.node();
  auto b_node = beta.node();
  const bool train = mode == Mode::kTrain;
  return record<T>(
      s, std::move(out), {in_node, g_node, b_node}, "batchnorm2d",
      [=](detail::Node<T>& self) {
        const T* dy = self.grad.data();
        const T* xv = in_node->value.data();
        const T* gv = g_node->value.data();
        T* dx = in_node->requires_grad ? in_node->ensure_grad().data() : nullptr;
        T* dg = g_node->requires_grad ? g_node->ensure_grad().data() : nullptr;
        T* db = b_node->requires_grad ? b_node->ensure_grad().data() : nullptr;
        const double n = static_cast<double>(count);
        parallel_for(0, static_cast<std::int64_t>(channels), [&](std::int64_t ci) {
          const auto c = static_cast<std::size_t>(ci);
          const double mu = (*mean)[c], is = (*invstd)[c];
          double sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += dy[off + i] * ((xv[off + i] - mu) * is);
            }
          }
          if (dg) dg[c] += static_cast<T>(sum_dy_xhat);
          if (db) db[c] += static_cast<T>(sum_dy);
          if (!dx) return;
          const double scale = gv[c] * is;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t off = (b * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              if (train) {
                const double xhat = (xv[off + i] - mu) * is;
                dx[off + i] += static_cast<T>(scale / n *
                                              (n * dy[off + i] - sum_dy - xhat * sum_dy_xhat));
              } else {
                dx[off + i] += static_cast<T>(scale * dy[off + i]);
              }
            }
          }
        });
      });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  std::vector<T> out(input.numel());
  const auto x = input.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  auto in_node = input.node();
  return record<T>(input.shape(), std::move(out), {in_node}, "relu",
                   [in_node](detail::Node<T>& self) {
                     auto& dx = in_node->ensure_grad();
                     const auto& xv = in_node->value;
                     for (std::size_t i = 0; i < dx.size(); ++i) {
                       if (xv[i] > T(0)) dx[i] += self.grad[i];
                     }
                   });
}

template <typename T>
BasicTensor<T> max_pool2d(const BasicTensor<T>& input, std::size_t window, std::size_t stride,
                          std::size_t padding) {
  const Shape& s = input.shape();
  require_rank("max_pool2d input", s, 4);
  if (window == 0 || stride == 0) throw DimensionError("max_pool2d: window and stride must be positive");
  if (window > s[2] + 2 * padding || window > s[3] + 2 * padding) {
    throw DimensionError("max_pool2d: window " + std::to_string(window) +
                         " larger than input " + shape_str(s));
  }
  const std::size_t h = s[2], w = s[3];
  const std::size_t oh = (h + 2 * padding - window) / stride + 1;
  const std::size_t ow = (w + 2 * padding - window) / stride + 1;
  const std::size_t planes = s[0] * s[1];
  std::vector<T> out(planes * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const T* x = input.values().data();

  parallel_for(0, static_cast<std::int64_t>(planes), [&](std::int64_t pi) {
    const auto p = static_cast<std::size_t>(pi);
    const T* src = x + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t ky = 0; ky < window; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                          static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < window; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                            static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
            if (!found || src[idx] > best) {
              best = src[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = best;
        (*argmax)[o] = p * h * w + best_idx;
      }
    }
  });

  auto in_node = input.node();
  return record<T>(Shape{s[0], s[1], oh, ow}, std::move(out), {in_node}, "max_pool2d",
                   [in_node, argmax](detail::Node<T>& self) {
                     auto& dx = in_node->ensure_grad();
                     for (std::size_t o = 0; o < self.grad.size(); ++o) {
                       dx[(*argmax)[o]] += self.grad[o];
                     }
                   });
}

template <typename T>
BasicTensor<T> global_avg_pool2d(const BasicTensor<T>& input) {
  const Shape& s = input.shape();
  require_rank("global_avg_pool2d input", s, 4);
  const std::size_t planes = s[0] * s[1], area = s[2] * s[3];
  std::vector<T> out(planes);
  const T* x = input.values().data();
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0;
    for (std::size_t i = 0; i < area; ++i) acc += x[p * area + i];
    out[p] = static_cast<T>(acc / static_cast<double>(area));
  }
  auto in_node = input.node();
  return record<T>(Shape{s[0], s[1], 1, 1}, std::move(out), {in_node}, "global_avg_pool2d",
                   [in_node, planes, area](detail::Node<T>& self) {
                     auto& dx = in_node->ensure_grad();
                     const T inv = T(1) / static_cast<T>(area);
                     for (std::size_t p = 0; p < planes; ++p) {
                       const T g = self.grad[p] * inv;
                       for (std::size_t i = 0; i < area; ++i) dx[p * area + i] += g;
                     }
                   });
}

template <typename T>
BasicTensor<T> pool2d(const BasicTensor<T>& input, PoolKind kind, std::size_t window,
                      std::size_t stride, std::size_t padding) {
  if (kind == PoolKind::kGlobalAvg) return global_avg_pool2d(input);
  return max_pool2d(input, window, stride, padding);
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require_rank("linear input", input.shape(), 2);
  require_rank("linear weight", weight.shape(), 2);
  const std::size_t batch = input.extent(0), in_f = input.extent(1), out_f = weight.extent(0);
  if (weight.extent(1) != in_f) {
    dim_error("linear", "input features do not match weight columns", input.shape(),
              weight.shape());
  }
  if (bias.rank() != 1 || bias.extent(0) != out_f) {
    dim_error("linear", "bias must have one entry per output", bias.shape(), weight.shape());
  }
  std::vector<T> wt(in_f * out_f);
  kernels::transpose(out_f, in_f, weight.values().data(), wt.data());
  std::vector<T> out(batch * out_f);
  kernels::gemm_nn(batch, out_f, in_f, input.values().data(), in_f, wt.data(), out_f, out.data(),
                   out_f, false);
  const T* bv = bias.values().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out_f; ++o) out[b * out_f + o] += bv[o];
  }

  auto in_node = input.node();
  auto w_node = weight.node();
  auto b_node = bias.node();
  return record<T>(Shape{batch, out_f}, std::move(out), {in_node, w_node, b_node}, "linear",
                   [=](detail::Node<T>& self) {
                     const T* dy = self.grad.data();
                     if (in_node->requires_grad) {
                       kernels::gemm_nn(batch, in_f, out_f, dy, out_f, w_node->value.data(),
                                        in_f, in_node->ensure_grad().data(), in_f, true);
                     }
                     if (w_node->requires_grad) {
                       kernels::gemm_tn(out_f, in_f, batch, dy, out_f, in_node->value.data(),
                                        in_f, w_node->ensure_grad().data(), in_f, true);
                     }
                     if (b_node->requires_grad) {
                       auto& db = b_node->ensure_grad();
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t o = 0; o < out_f; ++o) db[o] += dy[b * out_f + o];
                       }
                     }
                   });
}

template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) {
    dim_error("mse_loss", "prediction and target shapes differ", pred.shape(), target.shape());
  }
  const std::size_t n = pred.numel();
  if (n == 0) throw DimensionError("mse_loss: empty batch");
  double acc = 0;
  const auto p = pred.values();
  const auto t = target.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += d * d;
  }
  auto p_node = pred.node();
  auto t_node = target.node();
  return record<T>(Shape{}, {static_cast<T>(acc / static_cast<double>(n))}, {p_node, t_node},
                   "mse_loss", [p_node, t_node, n](detail::Node<T>& self) {
                     const T scale = self.grad[0] * T(2) / static_cast<T>(n);
                     const auto& pv = p_node->value;
                     const auto& tv = t_node->value;
                     if (p_node->requires_grad) {
                       auto& dp = p_node->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i) dp[i] += scale * (pv[i] - tv[i]);
                     }
                     if (t_node->requires_grad) {
                       auto& dt = t_node->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i) dt[i] -= scale * (pv[i] - tv[i]);
                     }
                   });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) dim_error("add", "shapes differ", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto a_node = a.node();
  auto b_node = b.node();
  return record<T>(a.shape(), std::move(out), {a_node, b_node}, "add",
                   [a_node, b_node](detail::Node<T>& self) {
                     for (auto* n : {a_node.get(), b_node.get()}) {
                       if (!n->requires_grad) continue;
                       auto& g = n->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     }
                   });
}

template <typename T>
BasicTensor<T> concat_columns(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank("concat_columns lhs", a.shape(), 2);
  require_rank("concat_columns rhs", b.shape(), 2);
  if (a.extent(0) != b.extent(0)) dim_error("concat_columns", "batch sizes differ", a.shape(), b.shape());
  const std::size_t rows = a.extent(0), fa = a.extent(1), fb = b.extent(1);
  std::vector<T> out(rows * (fa + fb));
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(r * fa), fa, out.begin() + static_cast<std::ptrdiff_t>(r * (fa + fb)));
    std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(r * fb), fb,
                out.begin() + static_cast<std::ptrdiff_t>(r * (fa + fb) + fa));
  }
  auto a_node = a.node();
  auto b_node = b.node();
  return record<T>(Shape{rows, fa + fb}, std::move(out), {a_node, b_node}, "concat_columns",
                   [=](detail::Node<T>& self) {
                     if (a_node->requires_grad) {
                       auto& g = a_node->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < fa; ++j) g[r * fa + j] += self.grad[r * (fa + fb) + j];
                     }
                     if (b_node->requires_grad) {
                       auto& g = b_node->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < fb; ++j)
                           g[r * fb + j] += self.grad[r * (fa + fb) + fa + j];
                     }
                   });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    dim_error("reshape", "element counts differ", input.shape(), shape);
  }
  auto in_node = input.node();
  std::vector<T> values(input.values().begin(), input.values().end());
  return record<T>(std::move(shape), std::move(values), {in_node}, "reshape",
                   [in_node](detail::Node<T>& self) {
                     auto& g = in_node->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
  double acc = 0;
  for (T v : input.values()) acc += v;
  auto in_node = input.node();
  return record<T>(Shape{}, {static_cast<T>(acc)}, {in_node}, "sum",
                   [in_node](detail::Node<T>& self) {
                     auto& g = in_node->ensure_grad();
                     for (auto& v : g) v += self.grad[0];
                   });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& input) {
  double acc = 0;
  for (T v : input.values()) acc += v;
  const std::size_t n = input.numel();
  auto in_node = input.node();
  return record<T>(Shape{}, {static_cast<T>(acc / static_cast<double>(n))}, {in_node}, "mean",
                   [in_node, n](detail::Node<T>& self) {
                     auto& g = in_node->ensure_grad();
                     const T share = self.grad[0] / static_cast<T>(n);
                     for (auto& v : g) v += share;
                   });
}

#define SARC_INSTANTIATE(T)                                                                      \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                 const BasicTensor<T>&, std::size_t, std::size_t);               \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,      \
                                 std::size_t);                                                    \
  template BasicTensor<T> batchnorm2d(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                      const BasicTensor<T>&, BatchNormStats<T>&, Mode);          \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                           \
  template BasicTensor<T> max_pool2d(const BasicTensor<T>&, std::size_t, std::size_t,            \
                                     std::size_t);                                                \
  template BasicTensor<T> global_avg_pool2d(const BasicTensor<T>&);                              \
  template BasicTensor<T> pool2d(const BasicTensor<T>&, PoolKind, std::size_t, std::size_t,      \
                                 std::size_t);                                                    \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                 const BasicTensor<T>&);                                          \
  template BasicTensor<T> mse_loss(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                     \
  template BasicTensor<T> concat_columns(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                 \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                            \
  template BasicTensor<T> mean(const BasicTensor<T>&);

SARC_INSTANTIATE(float)
SARC_INSTANTIATE(double)
#undef SARC_INSTANTIATE

}  // namespace sarc
