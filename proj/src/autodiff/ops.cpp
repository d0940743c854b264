#include "ostr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ostr::ad {

namespace {

Tape& common_tape(std::string_view op, Var a, Var b) {
  if (&a.tape() != &b.tape()) throw TapeError(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_rank(std::string_view op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(rank) + " input, got " +
                     shape_string(s));
  }
}

bool is_suffix(const Shape& whole, const Shape& tail) {
  if (tail.size() > whole.size()) return false;
  return std::equal(tail.begin(), tail.end(), whole.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

struct AxisLayout {
  std::size_t outer, len, inner;
};

AxisLayout axis_layout(const Shape& s, std::size_t axis) {
  AxisLayout l{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) l.inner *= s[i];
  return l;
}

void softmax_kernel(std::span<const double> in, std::span<double> out, const AxisLayout& l) {
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.len * l.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.len; ++k) mx = std::max(mx, in[base + k * l.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < l.len; ++k) {
        const double e = std::exp(in[base + k * l.inner] - mx);
        out[base + k * l.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < l.len; ++k) out[base + k * l.inner] /= z;
    }
  }
}

} // namespace

Var add(Var a, Var b) {
  Tape& tape = common_tape("add", a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (!is_suffix(sa, sb)) shape_mismatch("add", sa, sb);
  const std::size_t inner = numel(sb);
  const std::size_t outer = numel(sa) / inner;
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(av.begin(), av.end());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) out[o * inner + j] += bv[j];
  }
  return tape.record("add", sa, std::move(out), {a.id(), b.id()}, [outer, inner](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < inner; ++j) gb[j] += g[o * inner + j];
      }
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = common_tape("mul", a, b);
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record("mul", a.shape(), std::move(out), {a.id(), b.id()}, [](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto av = ctx.input(0);
    auto bv = ctx.input(1);
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return a.tape().record("scale", a.shape(), std::move(out), {a.id()}, [c](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto ga = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  });
}

Var matmul(Var a, Var b) {
  Tape& tape = common_tape("matmul", a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_mismatch("matmul", sa, sb);
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
    }
  }
  return tape.record("matmul", Shape{m, n}, std::move(out), {a.id(), b.id()}, [m, k, n](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto av = ctx.input(0);
    auto bv = ctx.input(1);
    if (ctx.needs_grad(0)) {
      auto ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (ctx.needs_grad(1)) {
      auto gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
        }
    }
  });
}

namespace {

// Valid output rows/cols for a kernel offset d in a same-padded window.
struct Span1D {
  std::size_t begin, end;
};

Span1D valid_range(std::size_t extent, std::ptrdiff_t d) {
  const auto n = static_cast<std::ptrdiff_t>(extent);
  const std::ptrdiff_t b = std::max<std::ptrdiff_t>(0, -d);
  const std::ptrdiff_t e = std::min<std::ptrdiff_t>(n, n - d);
  return {static_cast<std::size_t>(b), static_cast<std::size_t>(std::max(b, e))};
}

// Flat offset of (row + dy, dx) relative to the start of a plane of width W.
std::ptrdiff_t shifted(std::size_t row, std::ptrdiff_t dy, std::ptrdiff_t dx, std::size_t W) {
  return (static_cast<std::ptrdiff_t>(row) + dy) * static_cast<std::ptrdiff_t>(W) + dx;
}

} // namespace

Var conv2d(Var x, Var kernel) {
  Tape& tape = common_tape("conv2d", x, kernel);
  const Shape& sx = x.shape();
  const Shape& sw = kernel.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[1] != sx[1] || sw[2] != sw[3] || sw[2] % 2 == 0) {
    shape_mismatch("conv2d", sx, sw);
  }
  const std::size_t N = sx[0], Ci = sx[1], H = sx[2], W = sx[3];
  const std::size_t Co = sw[0], K = sw[2];
  const auto pad = static_cast<std::ptrdiff_t>(K / 2);
  const std::size_t plane = H * W;
  auto xv = x.value();
  auto wv = kernel.value();
  std::vector<double> out(N * Co * plane, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t co = 0; co < Co; ++co) {
      double* o = out.data() + (n * Co + co) * plane;
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const double* in = xv.data() + (n * Ci + ci) * plane;
        const double* w = wv.data() + (co * Ci + ci) * K * K;
        for (std::size_t ky = 0; ky < K; ++ky) {
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
          const auto ry = valid_range(H, dy);
          for (std::size_t kx = 0; kx < K; ++kx) {
            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
            const auto rx = valid_range(W, dx);
            const double wk = w[ky * K + kx];
            for (std::size_t yy = ry.begin; yy < ry.end; ++yy) {
              double* orow = o + yy * W;
              const double* irow = in + shifted(yy, dy, 0, W);
              for (std::size_t xx = rx.begin; xx < rx.end; ++xx) orow[xx] += wk * irow[xx + dx];
            }
          }
        }
      }
    }
  }
  return tape.record("conv2d", Shape{N, Co, H, W}, std::move(out), {x.id(), kernel.id()},
                     [N, Ci, H, W, Co, K, pad, plane](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto xv = ctx.input(0);
    auto wv = ctx.input(1);
    const bool gx_needed = ctx.needs_grad(0);
    const bool gw_needed = ctx.needs_grad(1);
    std::span<double> gx = gx_needed ? ctx.input_grad(0) : std::span<double>{};
    std::span<double> gw = gw_needed ? ctx.input_grad(1) : std::span<double>{};
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t co = 0; co < Co; ++co) {
        const double* go = g.data() + (n * Co + co) * plane;
        for (std::size_t ci = 0; ci < Ci; ++ci) {
          const double* in = xv.data() + (n * Ci + ci) * plane;
          const double* w = wv.data() + (co * Ci + ci) * K * K;
          double* gin = gx_needed ? gx.data() + (n * Ci + ci) * plane : nullptr;
          double* gwk = gw_needed ? gw.data() + (co * Ci + ci) * K * K : nullptr;
          for (std::size_t ky = 0; ky < K; ++ky) {
            const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
            const auto ry = valid_range(H, dy);
            for (std::size_t kx = 0; kx < K; ++kx) {
              const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
              const auto rx = valid_range(W, dx);
              const double wk = w[ky * K + kx];
              double acc = 0.0;
              for (std::size_t yy = ry.begin; yy < ry.end; ++yy) {
                const double* grow = go + yy * W;
                const std::ptrdiff_t off = shifted(yy, dy, 0, W);
                if (gin) {
                  double* girow = gin + off;
                  for (std::size_t xx = rx.begin; xx < rx.end; ++xx) girow[xx + dx] += wk * grow[xx];
                }
                if (gwk) {
                  const double* irow = in + off;
                  for (std::size_t xx = rx.begin; xx < rx.end; ++xx) acc += grow[xx] * irow[xx + dx];
                }
              }
              if (gwk) gwk[ky * K + kx] += acc;
            }
          }
        }
      }
    }
  });
}

Var avg_pool3x3(Var x) {
  const Shape& sx = x.shape();
  require_rank("avg_pool3x3", sx, 4);
  const std::size_t planes = sx[0] * sx[1], H = sx[2], W = sx[3], plane = H * W;
  auto xv = x.value();
  std::vector<double> out(xv.size(), 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* in = xv.data() + p * plane;
    double* o = out.data() + p * plane;
    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
      const auto ry = valid_range(H, dy);
      for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
        const auto rx = valid_range(W, dx);
        for (std::size_t yy = ry.begin; yy < ry.end; ++yy) {
          const double* irow = in + shifted(yy, dy, 0, W);
          double* orow = o + yy * W;
          for (std::size_t xx = rx.begin; xx < rx.end; ++xx) orow[xx] += irow[xx + dx];
        }
      }
    }
    for (std::size_t i = 0; i < plane; ++i) o[i] /= 9.0;
  }
  return x.tape().record("avg_pool3x3", sx, std::move(out), {x.id()}, [planes, H, W, plane](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t p = 0; p < planes; ++p) {
      const double* go = g.data() + p * plane;
      double* gi = gx.data() + p * plane;
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        const auto ry = valid_range(H, dy);
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const auto rx = valid_range(W, dx);
          for (std::size_t yy = ry.begin; yy < ry.end; ++yy) {
            double* girow = gi + shifted(yy, dy, 0, W);
            const double* grow = go + yy * W;
            for (std::size_t xx = rx.begin; xx < rx.end; ++xx) girow[xx + dx] += grow[xx] / 9.0;
          }
        }
      }
    }
  });
}

Var relu(Var x) {
  auto xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return x.tape().record("relu", x.shape(), std::move(out), {x.id()}, [](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto xv = ctx.input(0);
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var batch_standardize(Var x, double eps) {
  const Shape& sx = x.shape();
  if (sx.size() < 2) throw ShapeError("batch_standardize: expected [N, C, ...] input, got " + shape_string(sx));
  const std::size_t N = sx[0], C = sx[1];
  const std::size_t spatial = numel(sx) / (N * C);
  const double m = static_cast<double>(N * spatial);
  auto xv = x.value();
  std::vector<double> out(xv.size());
  std::vector<double> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    double mu = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* p = xv.data() + (n * C + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) mu += p[i];
    }
    mu /= m;
    double var = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double* p = xv.data() + (n * C + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) var += (p[i] - mu) * (p[i] - mu);
    }
    var /= m;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[c] = inv;
    for (std::size_t n = 0; n < N; ++n) {
      const double* p = xv.data() + (n * C + c) * spatial;
      double* o = out.data() + (n * C + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) o[i] = (p[i] - mu) * inv;
    }
  }
  return x.tape().record("batch_standardize", sx, std::move(out), {x.id()},
                         [N, C, spatial, m, inv_std = std::move(inv_std)](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto y = ctx.output();
    auto gx = ctx.input_grad(0);
    for (std::size_t c = 0; c < C; ++c) {
      double sg = 0.0, sgy = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t base = (n * C + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          sg += g[base + i];
          sgy += g[base + i] * y[base + i];
        }
      }
      const double k = inv_std[c] / m;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t base = (n * C + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          gx[base + i] += k * (m * g[base + i] - sg - y[base + i] * sgy);
        }
      }
    }
  });
}

Tensor softmax_values(const Tensor& x, std::size_t axis) {
  if (axis >= x.shape().size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  softmax_kernel(x.values(), out.values(), axis_layout(x.shape(), axis));
  return out;
}

Var softmax(Var x, std::size_t axis) {
  const Shape& sx = x.shape();
  if (axis >= sx.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_string(sx));
  }
  const AxisLayout l = axis_layout(sx, axis);
  std::vector<double> out(x.size());
  softmax_kernel(x.value(), out, l);
  return x.tape().record("softmax", sx, std::move(out), {x.id()}, [l](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto y = ctx.output();
    auto gx = ctx.input_grad(0);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t base = o * l.len * l.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < l.len; ++k) dot += g[base + k * l.inner] * y[base + k * l.inner];
        for (std::size_t k = 0; k < l.len; ++k) {
          const std::size_t idx = base + k * l.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  return x.tape().record("sum", Shape{1}, {s}, {x.id()}, [](BackwardContext& ctx) {
    const double g = ctx.output_grad()[0];
    for (auto& v : ctx.input_grad(0)) v += g;
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.value()) s += v;
  return x.tape().record("mean", Shape{1}, {s / n}, {x.id()}, [n](BackwardContext& ctx) {
    const double g = ctx.output_grad()[0] / n;
    for (auto& v : ctx.input_grad(0)) v += g;
  });
}

Var global_avg_pool(Var x) {
  const Shape& sx = x.shape();
  require_rank("global_avg_pool", sx, 4);
  const std::size_t NC = sx[0] * sx[1], plane = sx[2] * sx[3];
  auto xv = x.value();
  std::vector<double> out(NC, 0.0);
  for (std::size_t p = 0; p < NC; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += xv[p * plane + i];
    out[p] = s / static_cast<double>(plane);
  }
  return x.tape().record("global_avg_pool", Shape{sx[0], sx[1]}, std::move(out), {x.id()},
                         [NC, plane](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto gx = ctx.input_grad(0);
    for (std::size_t p = 0; p < NC; ++p) {
      const double v = g[p] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += v;
    }
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  require_rank("cross_entropy", s, 2);
  const std::size_t N = s[0], K = s[1];
  if (labels.size() != N) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " + shape_string(s));
  }
  auto z = logits.value();
  std::vector<double> prob(N * K);
  softmax_kernel(z, prob, AxisLayout{N, K, 1});
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(K) + ")");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, z[n * K + k]);
    double lse = 0.0;
    for (std::size_t k = 0; k < K; ++k) lse += std::exp(z[n * K + k] - mx);
    loss += mx + std::log(lse) - z[n * K + static_cast<std::size_t>(y)];
  }
  loss /= static_cast<double>(N);
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape().record("cross_entropy", Shape{1}, {loss}, {logits.id()},
                              [N, K, prob = std::move(prob), ys = std::move(ys)](BackwardContext& ctx) {
    const double g = ctx.output_grad()[0] / static_cast<double>(N);
    auto gz = ctx.input_grad(0);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) {
        const double target = static_cast<std::size_t>(ys[n]) == k ? 1.0 : 0.0;
        gz[n * K + k] += g * (prob[n * K + k] - target);
      }
    }
  });
}

Var weighted_sum(std::span<const Var> features, Var weights, std::size_t column) {
  if (features.empty()) throw ShapeError("weighted_sum: no features");
  const Shape& sw = weights.shape();
  require_rank("weighted_sum", sw, 2);
  if (sw[0] != features.size() || column >= sw[1]) {
    throw ShapeError("weighted_sum: weights " + shape_string(sw) + " do not match " +
                     std::to_string(features.size()) + " features at column " + std::to_string(column));
  }
  Tape& tape = weights.tape();
  const Shape& sf = features[0].shape();
  std::vector<NodeId> inputs;
  for (const auto& f : features) {
    common_tape("weighted_sum", f, weights);
    if (f.shape() != sf) shape_mismatch("weighted_sum", sf, f.shape());
    inputs.push_back(f.id());
  }
  inputs.push_back(weights.id());
  const std::size_t P = features.size(), cols = sw[1];
  auto wv = weights.value();
  std::vector<double> out(numel(sf), 0.0);
  for (std::size_t i = 0; i < P; ++i) {
    const double b = wv[i * cols + column];
    auto fv = features[i].value();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += b * fv[j];
  }
  return tape.record("weighted_sum", sf, std::move(out), std::move(inputs), [P, cols, column](BackwardContext& ctx) {
    auto g = ctx.output_grad();
    auto wv = ctx.input(P);
    const bool w_needed = ctx.needs_grad(P);
    for (std::size_t i = 0; i < P; ++i) {
      if (ctx.needs_grad(i)) {
        const double b = wv[i * cols + column];
        auto gf = ctx.input_grad(i);
        for (std::size_t j = 0; j < g.size(); ++j) gf[j] += b * g[j];
      }
      if (w_needed) {
        auto fv = ctx.input(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) dot += g[j] * fv[j];
        ctx.input_grad(P)[i * cols + column] += dot;
      }
    }
  });
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  auto evaluate = [&f](const Tensor& at) {
    Tape tape;
    const double v = f(tape, tape.constant(at)).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: f(x) is not finite");
    return v;
  };

  Tape tape;
  Var xv = tape.variable(x);
  Var out = f(tape, xv);
  if (!std::isfinite(out.item())) throw NumericError("grad_check: f(x) is not finite");
  tape.backward(out);
  std::vector<double> analytic(x.size(), 0.0);
  if (xv.has_grad()) {
    auto g = xv.grad();
    analytic.assign(g.begin(), g.end());
  }

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = evaluate(probe);
    probe[i] = orig - eps;
    const double down = evaluate(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (1.0 + std::abs(numeric)));
  }
  return worst;
}

} // namespace ostr::ad
