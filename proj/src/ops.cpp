#include "dmt/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dmt::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

using detail::make_result;

std::size_t normalize_axis(int axis, std::size_t rank) {
  const auto r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw Error(ErrorKind::out_of_range, "axis out of range");
  return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

bool wants_grad(const Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }
double* grad_of(Node& n, std::size_t i) { return n.inputs[i]->grad_buffer(); }
const std::vector<double>& value_of(const Node& n, std::size_t i) { return n.inputs[i]->value; }

// ---------------------------------------------------------------- broadcasting

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<long>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<long>(rank - b.size()));
  auto sa = contiguous_strides(pa);
  auto sb = contiguous_strides(pb);
  bc.out.resize(rank);
  bc.stride_a.resize(rank);
  bc.stride_b.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw Error(ErrorKind::shape_mismatch,
                  "cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
    bc.out[i] = std::max(pa[i], pb[i]);
    bc.stride_a[i] = pa[i] == 1 ? 0 : sa[i];
    bc.stride_b[i] = pb[i] == 1 ? 0 : sb[i];
  }
  return bc;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void broadcast_loop(const Broadcast& bc, F&& f) {
  const std::size_t total = numel(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = bc.out.size();
  const std::size_t inner = bc.out[rank - 1];
  const std::size_t sa_in = bc.stride_a[rank - 1];
  const std::size_t sb_in = bc.stride_b[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ia + j * sa_in, ib + j * sb_in);
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++idx[d];
      ia += bc.stride_a[d];
      ib += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.stride_a[d] * idx[d];
      ib -= bc.stride_b[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary op) {
  Broadcast bc = plan_broadcast(a.shape(), b.shape());
  std::vector<double> out(numel(bc.out));
  const auto av = a.values();
  const auto bv = b.values();
  switch (op) {
    case Binary::add:
      broadcast_loop(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] + bv[j]; });
      break;
    case Binary::sub:
      broadcast_loop(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] - bv[j]; });
      break;
    case Binary::mul:
      broadcast_loop(bc, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] * bv[j]; });
      break;
  }
  Shape shape = bc.out;
  return make_result(std::move(shape), std::move(out), {a, b}, [bc, op](Node& n) {
    const double* g = n.grad.data();
    const bool ga_on = wants_grad(n, 0);
    const bool gb_on = wants_grad(n, 1);
    double* ga = ga_on ? grad_of(n, 0) : nullptr;
    double* gb = gb_on ? grad_of(n, 1) : nullptr;
    const auto& av = value_of(n, 0);
    const auto& bv = value_of(n, 1);
    broadcast_loop(bc, [&](std::size_t o, std::size_t i, std::size_t j) {
      switch (op) {
        case Binary::add:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] += g[o];
          break;
        case Binary::sub:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] -= g[o];
          break;
        case Binary::mul:
          if (ga) ga[i] += g[o] * bv[j];
          if (gb) gb[j] += g[o] * av[i];
          break;
      }
    });
  });
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [deriv](Node& n) {
    if (!wants_grad(n, 0)) return;
    double* gx = grad_of(n, 0);
    const auto& xv = value_of(n, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += n.grad[i] * deriv(xv[i], n.value[i]);
  });
}

std::vector<double> permute_axes(const std::vector<double>& v, const Shape& shape,
                                 std::size_t a0, std::size_t a1) {
  Shape out_shape = shape;
  std::swap(out_shape[a0], out_shape[a1]);
  auto in_strides = contiguous_strides(shape);
  std::vector<std::size_t> strides = in_strides;
  std::swap(strides[a0], strides[a1]);
  std::vector<double> out(v.size());
  const std::size_t rank = shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < v.size(); ++o) {
    out[o] = v[src];
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      src += strides[d];
      if (idx[d] < out_shape[d]) break;
      src -= strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw Error(ErrorKind::shape_mismatch, "matmul needs rank >= 2 operands");
  }
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t bk = transpose_b ? bs.back() : bs[bs.size() - 2];
  const std::size_t n = transpose_b ? bs[bs.size() - 2] : bs.back();
  if (k != bk) {
    throw Error(ErrorKind::shape_mismatch,
                "matmul inner dims differ: " + shape_string(as) + " x " + shape_string(bs));
  }
  const bool shared_b = bs.size() == 2;
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
  if (!shared_b) {
    if (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
      throw Error(ErrorKind::shape_mismatch,
                  "matmul batch dims differ: " + shape_string(as) + " x " + shape_string(bs));
    }
  }
  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n);

  const auto av = a.values();
  const auto bv = b.values();
  const long lm = static_cast<long>(m), lk = static_cast<long>(k), ln = static_cast<long>(n);
  if (shared_b) {
    const long rows = static_cast<long>(batch) * lm;
    ConstMap A(av.data(), rows, lk);
    MutMap C(out.data(), rows, ln);
    if (transpose_b) {
      C.noalias() = A * ConstMap(bv.data(), ln, lk).transpose();
    } else {
      C.noalias() = A * ConstMap(bv.data(), lk, ln);
    }
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMap A(av.data() + i * m * k, lm, lk);
      MutMap C(out.data() + i * m * n, lm, ln);
      if (transpose_b) {
        C.noalias() = A * ConstMap(bv.data() + i * n * k, ln, lk).transpose();
      } else {
        C.noalias() = A * ConstMap(bv.data() + i * k * n, lk, ln);
      }
    }
  }

  return make_result(std::move(out_shape), std::move(out), {a, b},
                     [=](Node& node) {
                       const auto& av = value_of(node, 0);
                       const auto& bv = value_of(node, 1);
                       const double* g = node.grad.data();
                       const bool ga_on = wants_grad(node, 0);
                       const bool gb_on = wants_grad(node, 1);
                       const std::size_t steps = shared_b ? 1 : batch;
                       const long rows = shared_b ? static_cast<long>(batch) * lm : lm;
                       for (std::size_t i = 0; i < steps; ++i) {
                         ConstMap A(av.data() + i * m * k, rows, lk);
                         ConstMap G(g + i * m * n, rows, ln);
                         const double* bptr = bv.data() + (shared_b ? 0 : i * k * n);
                         if (ga_on) {
                           MutMap GA(grad_of(node, 0) + i * m * k, rows, lk);
                           if (transpose_b) {
                             GA.noalias() += G * ConstMap(bptr, ln, lk);
                           } else {
                             GA.noalias() += G * ConstMap(bptr, lk, ln).transpose();
                           }
                         }
                         if (gb_on) {
                           double* gbptr = grad_of(node, 1) + (shared_b ? 0 : i * k * n);
                           if (transpose_b) {
                             MutMap GB(gbptr, ln, lk);
                             GB.noalias() += G.transpose() * A;
                           } else {
                             MutMap GB(gbptr, lk, ln);
                             GB.noalias() += A.transpose() * G;
                           }
                         }
                       }
                     });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), ax);
  const auto xv = x.values();
  std::vector<double> out(xv.size(), 0.0);
  std::size_t faults = 0;
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < v.extent; ++e) mx = std::max(mx, xv[base + e * v.inner]);
      if (mx == -std::numeric_limits<double>::infinity()) {
        ++faults;
        continue;
      }
      double total = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) {
        const double ex = std::exp(xv[base + e * v.inner] - mx);
        out[base + e * v.inner] = ex;
        total += ex;
      }
      for (std::size_t e = 0; e < v.extent; ++e) out[base + e * v.inner] /= total;
    }
  }
  Tensor result = make_result(x.shape(), std::move(out), {x}, [v](Node& n) {
    if (!wants_grad(n, 0)) return;
    double* gx = grad_of(n, 0);
    const auto& y = n.value;
    const auto& g = n.grad;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.extent * v.inner + in;
        double dot = 0.0;
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          dot += y[i] * g[i];
        }
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
  result.node()->faults = faults;
  return result;
}

Tensor log_softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), ax);
  const auto xv = x.values();
  std::vector<double> out(xv.size(), 0.0);
  std::size_t faults = 0;
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < v.extent; ++e) mx = std::max(mx, xv[base + e * v.inner]);
      if (mx == -std::numeric_limits<double>::infinity()) {
        ++faults;
        continue;
      }
      double total = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) total += std::exp(xv[base + e * v.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t e = 0; e < v.extent; ++e) out[base + e * v.inner] = xv[base + e * v.inner] - lse;
    }
  }
  Tensor result = make_result(x.shape(), std::move(out), {x}, [v](Node& n) {
    if (!wants_grad(n, 0)) return;
    double* gx = grad_of(n, 0);
    const auto& y = n.value;
    const auto& g = n.grad;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.extent * v.inner + in;
        double gsum = 0.0;
        bool live = false;
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          if (std::isfinite(y[i])) {
            gsum += g[i];
            live = true;
          }
        }
        if (!live) continue;
        for (std::size_t e = 0; e < v.extent; ++e) {
          const std::size_t i = base + e * v.inner;
          if (std::isfinite(y[i])) gx[i] += g[i] - std::exp(y[i]) * gsum;
        }
      }
    }
  });
  result.node()->faults = faults;
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.dim(-1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw Error(ErrorKind::shape_mismatch, "layer_norm gamma/beta must match the last dim");
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    // Second pass corrects the rounding of the first, so constant rows give
    // an exact mean and an exactly zero centered row.
    double corr = 0.0;
    for (std::size_t j = 0; j < d; ++j) corr += row[j] - mu;
    mu += corr / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rs;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& n) {
                       const auto& gv = value_of(n, 1);
                       const double* g = n.grad.data();
                       double* gx = wants_grad(n, 0) ? grad_of(n, 0) : nullptr;
                       double* gg = wants_grad(n, 1) ? grad_of(n, 1) : nullptr;
                       double* gb = wants_grad(n, 2) ? grad_of(n, 2) : nullptr;
                       const double dd = static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gr = g + r * d;
                         const double* hr = xhat.data() + r * d;
                         double sum_dh = 0.0, sum_dh_h = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dh = gr[j] * gv[j];
                           sum_dh += dh;
                           sum_dh_h += dh * hr[j];
                           if (gg) gg[j] += gr[j] * hr[j];
                           if (gb) gb[j] += gr[j];
                         }
                         if (gx) {
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dh = gr[j] * gv[j];
                             gx[r * d + j] += rstd[r] / dd * (dd * dh - sum_dh - hr[j] * sum_dh_h);
                           }
                         }
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, const Shape& ids_shape) {
  if (table.rank() != 2) throw Error(ErrorKind::shape_mismatch, "embedding table must be [V, d]");
  if (numel(ids_shape) != ids.size()) {
    throw Error(ErrorKind::shape_mismatch, "embedding id count does not match its shape");
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  const auto tv = table.values();
  std::vector<double> out(ids.size() * d);
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw Error(ErrorKind::out_of_range, "token id " + std::to_string(ids[i]) +
                                               " outside embedding table of " + std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  Shape shape = ids_shape;
  shape.push_back(d);
  return make_result(std::move(shape), std::move(out), {table},
                     [d, saved = std::move(saved)](Node& n) {
                       if (!wants_grad(n, 0)) return;
                       double* gt = grad_of(n, 0);
                       for (std::size_t i = 0; i < saved.size(); ++i) {
                         double* row = gt + static_cast<std::size_t>(saved[i]) * d;
                         const double* g = n.grad.data() + i * d;
                         for (std::size_t j = 0; j < d; ++j) row[j] += g[j];
                       }
                     });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, PadMode mode) {
  if (x.rank() != 3 || weight.rank() != 3) {
    throw Error(ErrorKind::shape_mismatch, "conv1d expects x [B,T,C] and weight [K,C,O]");
  }
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2);
  const std::size_t K = weight.dim(0), O = weight.dim(2);
  if (weight.dim(1) != C) throw Error(ErrorKind::shape_mismatch, "conv1d channel mismatch");
  if (bias.numel() != O) throw Error(ErrorKind::shape_mismatch, "conv1d bias must be [O]");
  if (mode == PadMode::same && K % 2 == 0) {
    throw Error(ErrorKind::invalid_argument, "same-padded conv1d needs an odd kernel width");
  }
  const std::size_t left = mode == PadMode::same ? (K - 1) / 2 : K - 1;

  // im2col: row (b,t) holds the K input frames feeding output t.
  const auto xv = x.values();
  std::vector<double> cols(B * T * K * C, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      double* row = cols.data() + (b * T + t) * K * C;
      for (std::size_t k = 0; k < K; ++k) {
        const long src = static_cast<long>(t + k) - static_cast<long>(left);
        if (src < 0 || src >= static_cast<long>(T)) continue;
        std::copy_n(xv.data() + (b * T + static_cast<std::size_t>(src)) * C, C, row + k * C);
      }
    }
  }
  std::vector<double> out(B * T * O);
  const long rows = static_cast<long>(B * T);
  const long kc = static_cast<long>(K * C);
  const long lo = static_cast<long>(O);
  MutMap Y(out.data(), rows, lo);
  Y.noalias() = ConstMap(cols.data(), rows, kc) * ConstMap(weight.values().data(), kc, lo);
  const auto bv = bias.values();
  for (long r = 0; r < rows; ++r) {
    for (long o = 0; o < lo; ++o) Y(r, o) += bv[static_cast<std::size_t>(o)];
  }
  return make_result(
      {B, T, O}, std::move(out), {x, weight, bias},
      [=, cols = std::move(cols)](Node& n) {
        ConstMap G(n.grad.data(), rows, lo);
        if (wants_grad(n, 1)) {
          MutMap GW(grad_of(n, 1), kc, lo);
          GW.noalias() += ConstMap(cols.data(), rows, kc).transpose() * G;
        }
        if (wants_grad(n, 2)) {
          double* gb = grad_of(n, 2);
          for (long r = 0; r < rows; ++r) {
            for (long o = 0; o < lo; ++o) gb[o] += G(r, o);
          }
        }
        if (wants_grad(n, 0)) {
          RowMat gcols = G * ConstMap(value_of(n, 1).data(), kc, lo).transpose();
          double* gx = grad_of(n, 0);
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t t = 0; t < T; ++t) {
              const double* row = gcols.data() + (b * T + t) * K * C;
              for (std::size_t k = 0; k < K; ++k) {
                const long src = static_cast<long>(t + k) - static_cast<long>(left);
                if (src < 0 || src >= static_cast<long>(T)) continue;
                double* dst = gx + (b * T + static_cast<std::size_t>(src)) * C;
                for (std::size_t c = 0; c < C; ++c) dst[c] += row[k * C + c];
              }
            }
          }
        }
      });
}

Tensor glu(const Tensor& x) {
  const std::size_t d2 = x.dim(-1);
  if (d2 % 2 != 0) throw Error(ErrorKind::shape_mismatch, "glu needs an even last dim");
  const std::size_t c = d2 / 2;
  const std::size_t rows = x.numel() / d2;
  const auto xv = x.values();
  std::vector<double> out(rows * c);
  std::vector<double> gate(rows * c);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const double b = xv[r * d2 + c + j];
      const double s = b >= 0 ? 1.0 / (1.0 + std::exp(-b)) : std::exp(b) / (1.0 + std::exp(b));
      gate[r * c + j] = s;
      out[r * c + j] = xv[r * d2 + j] * s;
    }
  }
  Shape shape = x.shape();
  shape.back() = c;
  return make_result(std::move(shape), std::move(out), {x},
                     [rows, c, d2, gate = std::move(gate)](Node& n) {
                       if (!wants_grad(n, 0)) return;
                       double* gx = grad_of(n, 0);
                       const auto& xv = value_of(n, 0);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < c; ++j) {
                           const double g = n.grad[r * c + j];
                           const double s = gate[r * c + j];
                           gx[r * d2 + j] += g * s;
                           gx[r * d2 + c + j] += g * xv[r * d2 + j] * s * (1.0 - s);
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw Error(ErrorKind::invalid_argument, "dropout p must be in [0,1)");
  if (!training || p == 0.0) return x;
  const auto xv = x.values();
  std::vector<double> mask(xv.size());
  std::vector<double> out(xv.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& n) {
    if (!wants_grad(n, 0)) return;
    double* gx = grad_of(n, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += n.grad[i] * mask[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw Error(ErrorKind::invalid_argument, "concat of nothing");
  const Shape& first = parts[0].shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw Error(ErrorKind::shape_mismatch, "concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != first[i]) {
        throw Error(ErrorKind::shape_mismatch,
                    "concat extents differ: " + shape_string(s) + " vs " + shape_string(first));
      }
    }
    extents.push_back(s[ax]);
    out_shape[ax] += s[ax];
  }
  const AxisView v = axis_view(out_shape, ax);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto pv = parts[p].values();
    const std::size_t chunk = extents[p] * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(pv.data() + o * chunk, chunk, out.data() + o * v.extent * v.inner + offset);
    }
    offset += chunk;
  }
  return make_result(std::move(out_shape), std::move(out), parts, [v, extents](Node& n) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < extents.size(); ++p) {
      const std::size_t chunk = extents[p] * v.inner;
      if (wants_grad(n, p)) {
        double* gp = grad_of(n, p);
        for (std::size_t o = 0; o < v.outer; ++o) {
          const double* src = n.grad.data() + o * v.extent * v.inner + offset;
          for (std::size_t i = 0; i < chunk; ++i) gp[o * chunk + i] += src[i];
        }
      }
      offset += chunk;
    }
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisView v = axis_view(x.shape(), ax);
  if (length == 0 || start + length > v.extent) {
    throw Error(ErrorKind::out_of_range, "slice [" + std::to_string(start) + ", +" +
                                             std::to_string(length) + ") outside extent " +
                                             std::to_string(v.extent));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  const auto xv = x.values();
  const std::size_t chunk = length * v.inner;
  std::vector<double> out(v.outer * chunk);
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(xv.data() + o * v.extent * v.inner + start * v.inner, chunk, out.data() + o * chunk);
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [v, start, chunk](Node& n) {
    if (!wants_grad(n, 0)) return;
    double* gx = grad_of(n, 0);
    for (std::size_t o = 0; o < v.outer; ++o) {
      double* dst = gx + o * v.extent * v.inner + start * v.inner;
      const double* src = n.grad.data() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  const std::size_t a0 = normalize_axis(axis0, x.rank());
  const std::size_t a1 = normalize_axis(axis1, x.rank());
  if (a0 == a1) return x;
  Shape in_shape = x.shape();
  Shape out_shape = in_shape;
  std::swap(out_shape[a0], out_shape[a1]);
  std::vector<double> src(x.values().begin(), x.values().end());
  auto out = permute_axes(src, in_shape, a0, a1);
  return make_result(out_shape, std::move(out), {x}, [out_shape, a0, a1](Node& n) {
    if (!wants_grad(n, 0)) return;
    auto back = permute_axes(n.grad, out_shape, a0, a1);
    double* gx = grad_of(n, 0);
    for (std::size_t i = 0; i < back.size(); ++i) gx[i] += back[i];
  });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.numel()) {
    throw Error(ErrorKind::shape_mismatch,
                "cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(shape, std::move(out), {x}, [](Node& n) {
    if (!wants_grad(n, 0)) return;
    double* gx = grad_of(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) gx[i] += n.grad[i];
  });
}

Tensor index_select(const Tensor& x, std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorKind::invalid_argument, "index_select with no indices");
  const std::size_t rows = x.dim(0);
  const std::size_t row_size = x.numel() / rows;
  const auto xv = x.values();
  std::vector<double> out(indices.size() * row_size);
  std::vector<std::size_t> saved(indices.begin(), indices.end());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw Error(ErrorKind::out_of_range, "index_select index out of range");
    std::copy_n(xv.data() + indices[i] * row_size, row_size, out.data() + i * row_size);
  }
  Shape shape = x.shape();
  shape[0] = indices.size();
  return make_result(std::move(shape), std::move(out), {x},
                     [row_size, saved = std::move(saved)](Node& n) {
                       if (!wants_grad(n, 0)) return;
                       double* gx = grad_of(n, 0);
                       for (std::size_t i = 0; i < saved.size(); ++i) {
                         for (std::size_t j = 0; j < row_size; ++j) {
                           gx[saved[i] * row_size + j] += n.grad[i * row_size + j];
                         }
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({1}, {total}, {x}, [](Node& n) {
    if (!wants_grad(n, 0)) return;
    double* gx = grad_of(n, 0);
    const std::size_t count = n.inputs[0]->value.size();
    for (std::size_t i = 0; i < count; ++i) gx[i] += n.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor label_smoothed_nll(const Tensor& logits, std::span<const std::int32_t> targets,
                          std::int32_t pad_id, double epsilon) {
  if (epsilon < 0.0 || epsilon >= 1.0) {
    throw Error(ErrorKind::invalid_argument, "label smoothing epsilon must be in [0,1)");
  }
  const std::size_t V = logits.dim(-1);
  const std::size_t rows = logits.numel() / V;
  if (targets.size() != rows) {
    throw Error(ErrorKind::shape_mismatch, "one target per logit row is required");
  }
  const auto lv = logits.values();
  std::vector<double> probs(rows * V, 0.0);
  std::size_t live = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int32_t t = targets[r];
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= V) {
      throw Error(ErrorKind::out_of_range, "target id outside the vocabulary");
    }
    ++live;
    const double* z = lv.data() + r * V;
    double mx = z[0];
    for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, z[v]);
    double s = 0.0, zsum = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      s += std::exp(z[v] - mx);
      zsum += z[v];
    }
    const double lse = mx + std::log(s);
    for (std::size_t v = 0; v < V; ++v) probs[r * V + v] = std::exp(z[v] - lse);
    total += (1.0 - epsilon) * (lse - z[t]) + epsilon * (lse - zsum / static_cast<double>(V));
  }
  if (live == 0) throw Error(ErrorKind::empty_input, "every target position is padding");
  std::vector<std::int32_t> saved(targets.begin(), targets.end());
  return make_result(
      {1}, {total / static_cast<double>(live)}, {logits},
      [V, rows, live, epsilon, pad_id, probs = std::move(probs), saved = std::move(saved)](Node& n) {
        if (!wants_grad(n, 0)) return;
        double* gz = grad_of(n, 0);
        const double g = n.grad[0] / static_cast<double>(live);
        const double uniform = epsilon / static_cast<double>(V);
        for (std::size_t r = 0; r < rows; ++r) {
          if (saved[r] == pad_id) continue;
          for (std::size_t v = 0; v < V; ++v) {
            double q = uniform;
            if (static_cast<std::int32_t>(v) == saved[r]) q += 1.0 - epsilon;
            gz[r * V + v] += g * (probs[r * V + v] - q);
          }
        }
      });
}

}  // namespace dmt::ad
