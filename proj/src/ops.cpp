#include "vadd/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "vadd/error.hpp"

namespace vadd::diff {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw ConfigError(std::string(op) + ": operand shapes differ");
}

template <typename Fwd, typename Deriv>
NodeId unary(Graph& g, NodeId x, const char* kind, Fwd fwd, Deriv deriv) {
  const Tensor& in = g.value(x);
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return g.record(kind, {x}, std::move(out), [x, deriv](Graph& gr, NodeId self) {
    const Tensor& xin = gr.value(x);
    const Tensor& y = gr.value(self);
    const Tensor& dy = gr.grad_ref(self);
    Tensor& dx = gr.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * deriv(xin[i], y[i]);
  });
}

}  // namespace

NodeId linear(Graph& g, NodeId x, NodeId W, NodeId b) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(W);
  const Tensor& bv = g.value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.cols() != wv.rows() ||
      bv.size() != wv.cols()) {
    throw ConfigError("linear: shapes do not conform");
  }
  const std::size_t B = xv.rows(), m = wv.rows(), n = wv.cols();
  Tensor out({B, n});
  auto o = as_matrix(out, B, n);
  o.noalias() = as_matrix(xv, B, m) * as_matrix(wv, m, n);
  o.rowwise() += as_matrix(bv, 1, n).row(0);
  return g.record("linear", {x, W, b}, std::move(out), [x, W, b, B, m, n](Graph& gr, NodeId self) {
    const auto dy = as_matrix(gr.grad_ref(self), B, n);
    if (gr.requires_grad(x)) {
      auto dx = as_matrix(gr.grad_buffer(x), B, m);
      dx.noalias() += dy * as_matrix(gr.value(W), m, n).transpose();
    }
    if (gr.requires_grad(W)) {
      auto dw = as_matrix(gr.grad_buffer(W), m, n);
      dw.noalias() += as_matrix(gr.value(x), B, m).transpose() * dy;
    }
    if (gr.requires_grad(b)) {
      Tensor& db = gr.grad_buffer(b);
      for (std::size_t r = 0; r < B; ++r)
        for (std::size_t c = 0; c < n; ++c) db[c] += dy(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  });
}

NodeId elu(Graph& g, NodeId x) {
  return unary(
      g, x, "elu", [](double v) { return v > 0.0 ? v : std::expm1(v); },
      [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

NodeId exp(Graph& g, NodeId x) {
  return unary(
      g, x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

NodeId square(Graph& g, NodeId x) {
  return unary(
      g, x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

NodeId clamp(Graph& g, NodeId x, double lo, double hi) {
  return unary(
      g, x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

NodeId scale(Graph& g, NodeId x, double c) {
  return unary(
      g, x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

NodeId add_scalar(Graph& g, NodeId x, double c) {
  return unary(
      g, x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

NodeId add(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return g.record("add", {a, b}, std::move(out), [a, b](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    for (NodeId in : {a, b}) {
      if (!gr.requires_grad(in)) continue;
      Tensor& d = gr.grad_buffer(in);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

NodeId sub(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "sub");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return g.record("sub", {a, b}, std::move(out), [a, b](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    if (gr.requires_grad(a)) {
      Tensor& d = gr.grad_buffer(a);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
    if (gr.requires_grad(b)) {
      Tensor& d = gr.grad_buffer(b);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= dy[i];
    }
  });
}

NodeId mul(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return g.record("mul", {a, b}, std::move(out), [a, b](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    if (gr.requires_grad(a)) {
      const Tensor& bv = gr.value(b);
      Tensor& d = gr.grad_buffer(a);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * bv[i];
    }
    if (gr.requires_grad(b)) {
      const Tensor& av = gr.value(a);
      Tensor& d = gr.grad_buffer(b);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * av[i];
    }
  });
}

NodeId mul_const(Graph& g, NodeId x, const Tensor& c) {
  const Tensor& xv = g.value(x);
  require_same_shape(xv, c, "mul_const");
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * c[i];
  return g.record("mul_const", {x}, std::move(out), [x, c](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& d = gr.grad_buffer(x);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * c[i];
  });
}

NodeId sum_all(Graph& g, NodeId x) {
  const Tensor& xv = g.value(x);
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return g.record("sum_all", {x}, Tensor::scalar(s), [x](Graph& gr, NodeId self) {
    const double dy = gr.grad_ref(self)[0];
    Tensor& d = gr.grad_buffer(x);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy;
  });
}

NodeId mean_all(Graph& g, NodeId x) {
  const std::size_t n = g.value(x).size();
  if (n == 0) throw UsageError("mean_all: empty tensor");
  return scale(g, sum_all(g, x), 1.0 / static_cast<double>(n));
}

NodeId row_sum(Graph& g, NodeId x) {
  const Tensor& xv = g.value(x);
  const std::size_t R = xv.rows(), C = xv.cols();
  Tensor out({R});
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += xv[r * C + c];
    out[r] = s;
  }
  return g.record("row_sum", {x}, std::move(out), [x, R, C](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& d = gr.grad_buffer(x);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) d[r * C + c] += dy[r];
  });
}

NodeId reshape(Graph& g, NodeId x, std::vector<std::size_t> shape) {
  Tensor out = g.value(x).reshaped(std::move(shape));
  return g.record("reshape", {x}, std::move(out), [x](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& d = gr.grad_buffer(x);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
  });
}

NodeId slice_rows(Graph& g, NodeId x, std::size_t begin, std::size_t end) {
  const Tensor& xv = g.value(x);
  if (begin > end || end > xv.rows()) throw ConfigError("slice_rows: range out of bounds");
  const std::size_t C = xv.cols();
  std::vector<std::size_t> shape = xv.shape();
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy(xv.data().begin() + begin * C, xv.data().begin() + end * C, out.data().begin());
  return g.record("slice_rows", {x}, std::move(out), [x, begin, C](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& d = gr.grad_buffer(x);
    for (std::size_t i = 0; i < dy.size(); ++i) d[begin * C + i] += dy[i];
  });
}

NodeId slice_cols(Graph& g, NodeId x, std::size_t begin, std::size_t end) {
  const Tensor& xv = g.value(x);
  if (xv.rank() != 2 || begin > end || end > xv.cols()) throw ConfigError("slice_cols: range out of bounds");
  const std::size_t R = xv.rows(), C = xv.cols(), W = end - begin;
  Tensor out({R, W});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < W; ++c) out[r * W + c] = xv[r * C + begin + c];
  return g.record("slice_cols", {x}, std::move(out), [x, R, C, W, begin](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& d = gr.grad_buffer(x);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < W; ++c) d[r * C + begin + c] += dy[r * W + c];
  });
}

NodeId concat_rows(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (av.rank() != bv.rank() || av.cols() != bv.cols()) throw ConfigError("concat_rows: column shapes differ");
  std::vector<std::size_t> shape = av.shape();
  shape[0] = av.rows() + bv.rows();
  Tensor out(shape);
  std::copy(av.data().begin(), av.data().end(), out.data().begin());
  std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + av.size());
  const std::size_t na = av.size();
  return g.record("concat_rows", {a, b}, std::move(out), [a, b, na](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    if (gr.requires_grad(a)) {
      Tensor& d = gr.grad_buffer(a);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
    if (gr.requires_grad(b)) {
      Tensor& d = gr.grad_buffer(b);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[na + i];
    }
  });
}

NodeId gather_rows(Graph& g, NodeId x, std::vector<std::size_t> index) {
  const Tensor& xv = g.value(x);
  const std::size_t C = xv.cols();
  std::vector<std::size_t> shape = xv.shape();
  if (shape.empty()) shape.push_back(1);
  shape[0] = index.size();
  Tensor out(shape);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= xv.rows()) throw ConfigError("gather_rows: index out of range");
    std::copy_n(xv.data().begin() + index[r] * C, C, out.data().begin() + r * C);
  }
  return g.record("gather_rows", {x}, std::move(out), [x, C, index = std::move(index)](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& d = gr.grad_buffer(x);
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t c = 0; c < C; ++c) d[index[r] * C + c] += dy[r * C + c];
  });
}

NodeId embedding_bag(Graph& g, NodeId table, std::vector<std::size_t> indices, std::size_t per_row) {
  const Tensor& tv = g.value(table);
  if (tv.rank() != 2 || per_row == 0 || indices.size() % per_row != 0)
    throw ConfigError("embedding_bag: bad table or index layout");
  const std::size_t H = tv.cols(), B = indices.size() / per_row;
  Tensor out({B, H});
  for (std::size_t b = 0; b < B; ++b) {
    double* dst = out.data().data() + b * H;
    for (std::size_t j = 0; j < per_row; ++j) {
      const std::size_t row = indices[b * per_row + j];
      if (row >= tv.rows()) throw ConfigError("embedding_bag: index out of range");
      const double* src = tv.data().data() + row * H;
      for (std::size_t h = 0; h < H; ++h) dst[h] += src[h];
    }
  }
  return g.record("embedding_bag", {table}, std::move(out),
                  [table, H, B, per_row, indices = std::move(indices)](Graph& gr, NodeId self) {
                    const Tensor& dy = gr.grad_ref(self);
                    Tensor& d = gr.grad_buffer(table);
                    for (std::size_t b = 0; b < B; ++b)
                      for (std::size_t j = 0; j < per_row; ++j) {
                        double* dst = d.data().data() + indices[b * per_row + j] * H;
                        const double* src = dy.data().data() + b * H;
                        for (std::size_t h = 0; h < H; ++h) dst[h] += src[h];
                      }
                  });
}

NodeId log_softmax_rows(Graph& g, NodeId logits, std::optional<std::size_t> excluded) {
  const Tensor& xv = g.value(logits);
  if (xv.rank() != 2 || xv.cols() < 2) throw ConfigError("log_softmax_rows: need [N x C] with C >= 2");
  const std::size_t R = xv.rows(), C = xv.cols();
  if (excluded && *excluded >= C) throw ConfigError("log_softmax_rows: excluded class out of range");
  Tensor out({R, C});
  for (std::size_t r = 0; r < R; ++r) {
    const double* x = xv.data().data() + r * C;
    double* y = out.data().data() + r * C;
    for (std::size_t c = 0; c < C; ++c) y[c] = x[c] + ((excluded && c == *excluded) ? kExcludedLogit : 0.0);
    const double mx = *std::max_element(y, y + C);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(y[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < C; ++c) y[c] -= lse;
  }
  return g.record("log_softmax_rows", {logits}, std::move(out), [logits, R, C](Graph& gr, NodeId self) {
    const Tensor& y = gr.value(self);
    const Tensor& dy = gr.grad_ref(self);
    Tensor& dx = gr.grad_buffer(logits);
    for (std::size_t r = 0; r < R; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += dy[r * C + c];
      for (std::size_t c = 0; c < C; ++c) dx[r * C + c] += dy[r * C + c] - std::exp(y[r * C + c]) * s;
    }
  });
}

NodeId pick(Graph& g, NodeId x, std::vector<long> index) {
  const Tensor& xv = g.value(x);
  const std::size_t R = xv.rows(), C = xv.cols();
  if (index.size() != R) throw ConfigError("pick: one index per row required");
  Tensor out({R});
  for (std::size_t r = 0; r < R; ++r) {
    if (index[r] < 0) continue;
    if (static_cast<std::size_t>(index[r]) >= C) throw ConfigError("pick: index out of range");
    out[r] = xv[r * C + static_cast<std::size_t>(index[r])];
  }
  return g.record("pick", {x}, std::move(out), [x, C, index = std::move(index)](Graph& gr, NodeId self) {
    const Tensor& dy = gr.grad_ref(self);
    Tensor& d = gr.grad_buffer(x);
    for (std::size_t r = 0; r < index.size(); ++r)
      if (index[r] >= 0) d[r * C + static_cast<std::size_t>(index[r])] += dy[r];
  });
}

}  // namespace vadd::diff
