// Copyright 2026 The pavits-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pavits/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "pavits/error.hpp"

namespace pavits::ag {

namespace {

thread_local bool g_grad_enabled = true;

enum class Broadcast { kSame, kColumn, kRow, kScalar };

Broadcast classify(const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.rows() == a.rows() && b.cols() == 1) return Broadcast::kColumn;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::kScalar;
  throw InputError("broadcast shape mismatch: [" + std::to_string(a.rows()) + "x" +
                   std::to_string(a.cols()) + "] vs [" + std::to_string(b.rows()) + "x" +
                   std::to_string(b.cols()) + "]");
}

Matrix expand(const Matrix& b, Broadcast kind, Index rows, Index cols) {
  switch (kind) {
    case Broadcast::kSame:
      return b;
    case Broadcast::kColumn:
      return b.replicate(1, cols);
    case Broadcast::kRow:
      return b.replicate(rows, 1);
    case Broadcast::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Matrix reduce(const Matrix& g, Broadcast kind) {
  switch (kind) {
    case Broadcast::kSame:
      return g;
    case Broadcast::kColumn:
      return g.rowwise().sum();
    case Broadcast::kRow:
      return g.colwise().sum();
    case Broadcast::kScalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

void accumulate_parent(Node& self, std::size_t i, const Matrix& g) {
  auto& p = self.parents[i];
  if (p->requires_grad) p->accumulate(g);
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  Matrix out = a.value().unaryExpr(fwd);
  return make_result(std::move(out), {a}, [deriv](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix d = x.binaryExpr(self.value, deriv);
    accumulate_parent(self, 0, self.grad.cwiseProduct(d));
  });
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw InputError("item() on a non-scalar tensor");
  return value()(0, 0);
}

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

void Tensor::backward() {
  if (rows() != 1 || cols() != 1) throw InputError("backward() requires a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.resize(0, 0);
  }
  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  Tensor out = Tensor::constant(std::move(value));
  if (!g_grad_enabled) return out;
  bool any = std::any_of(parents.begin(), parents.end(),
                         [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(parents.size());
  for (auto& p : parents) {
    // Undefined optional inputs (e.g. a missing bias) become inert constants.
    node.parents.push_back(p.defined() ? p.node() : Tensor::zeros(1, 1).node());
  }
  node.backward_fn = std::move(backward);
  return out;
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Broadcast kind = classify(a.value(), b.value());
  Matrix out = a.value() + expand(b.value(), kind, a.rows(), a.cols());
  return make_result(std::move(out), {a, b}, [kind](Node& self) {
    accumulate_parent(self, 0, self.grad);
    accumulate_parent(self, 1, reduce(self.grad, kind));
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Broadcast kind = classify(a.value(), b.value());
  Matrix out = a.value() - expand(b.value(), kind, a.rows(), a.cols());
  return make_result(std::move(out), {a, b}, [kind](Node& self) {
    accumulate_parent(self, 0, self.grad);
    accumulate_parent(self, 1, -reduce(self.grad, kind));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Broadcast kind = classify(a.value(), b.value());
  Matrix bx = expand(b.value(), kind, a.rows(), a.cols());
  Matrix out = a.value().cwiseProduct(bx);
  return make_result(std::move(out), {a, b}, [kind, bx = std::move(bx)](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad.cwiseProduct(bx));
    if (self.parents[1]->requires_grad)
      self.parents[1]->accumulate(reduce(self.grad.cwiseProduct(self.parents[0]->value), kind));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) { accumulate_parent(self, 0, self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  Matrix out = a.value().array() + s;
  return make_result(std::move(out), {a}, [](Node& self) { accumulate_parent(self, 0, self.grad); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp_log(const Tensor& a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor snake(const Tensor& x, const Tensor& alpha) {
  if (alpha.rows() != x.rows() || alpha.cols() != 1) throw InputError("snake: alpha must be [channels x 1]");
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (Index r = 0; r < xv.rows(); ++r) {
    const double a = alpha.value()(r, 0);
    for (Index c = 0; c < xv.cols(); ++c) {
      const double s = std::sin(a * xv(r, c));
      out(r, c) = xv(r, c) + s * s / a;
    }
  }
  return make_result(std::move(out), {x, alpha}, [](Node& self) {
    const Matrix& xv = self.parents[0]->value;
    const Matrix& av = self.parents[1]->value;
    Matrix gx(xv.rows(), xv.cols());
    Matrix ga = Matrix::Zero(av.rows(), 1);
    for (Index r = 0; r < xv.rows(); ++r) {
      const double a = av(r, 0);
      for (Index c = 0; c < xv.cols(); ++c) {
        const double v = xv(r, c);
        const double s = std::sin(a * v);
        const double s2 = std::sin(2.0 * a * v);
        const double g = self.grad(r, c);
        gx(r, c) = g * (1.0 + s2);
        ga(r, 0) += g * (v * s2 / a - s * s / (a * a));
      }
    }
    accumulate_parent(self, 0, gx);
    accumulate_parent(self, 1, ga);
  });
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw InputError("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad)
      self.parents[0]->accumulate(self.grad * self.parents[1]->value.transpose());
    if (self.parents[1]->requires_grad)
      self.parents[1]->accumulate(self.parents[0]->value.transpose() * self.grad);
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {a}, [](Node& self) {
    accumulate_parent(self, 0, self.grad.transpose());
  });
}

Tensor sum(const Tensor& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  const Index r = a.rows(), c = a.cols();
  return make_result(std::move(out), {a}, [r, c](Node& self) {
    accumulate_parent(self, 0, Matrix::Constant(r, c, self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Tensor mean_cols(const Tensor& a) {
  const Index c = a.cols();
  Matrix out = a.value().rowwise().sum() / static_cast<double>(c);
  return make_result(std::move(out), {a}, [c](Node& self) {
    accumulate_parent(self, 0, (self.grad / static_cast<double>(c)).replicate(1, c));
  });
}

Tensor sum_rows(const Tensor& a) {
  const Index r = a.rows();
  Matrix out = a.value().colwise().sum();
  return make_result(std::move(out), {a}, [r](Node& self) {
    accumulate_parent(self, 0, self.grad.replicate(r, 1));
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw InputError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    offsets.push_back(at);
    at += p.rows();
  }
  return make_result(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (p->requires_grad) p->accumulate(self.grad.middleRows(offsets[i], p->value.rows()));
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw InputError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    offsets.push_back(at);
    at += p.cols();
  }
  return make_result(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = self.parents[i];
      if (p->requires_grad) p->accumulate(self.grad.middleCols(offsets[i], p->value.cols()));
    }
  });
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw InputError("slice_rows: out of range");
  Matrix out = a.value().middleRows(start, count);
  const Index r = a.rows(), c = a.cols();
  return make_result(std::move(out), {a}, [start, count, r, c](Node& self) {
    Matrix g = Matrix::Zero(r, c);
    g.middleRows(start, count) = self.grad;
    accumulate_parent(self, 0, g);
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw InputError("slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  const Index r = a.rows(), c = a.cols();
  return make_result(std::move(out), {a}, [start, count, r, c](Node& self) {
    Matrix g = Matrix::Zero(r, c);
    g.middleCols(start, count) = self.grad;
    accumulate_parent(self, 0, g);
  });
}

Tensor gather_cols(const Tensor& a, std::span<const Index> index) {
  const Index n = static_cast<Index>(index.size());
  Matrix out(a.rows(), n);
  for (Index j = 0; j < n; ++j) {
    const Index src = index[static_cast<std::size_t>(j)];
    if (src < 0 || src >= a.cols()) throw InputError("gather_cols: index out of range");
    out.col(j) = a.value().col(src);
  }
  std::vector<Index> idx(index.begin(), index.end());
  const Index r = a.rows(), c = a.cols();
  return make_result(std::move(out), {a}, [idx = std::move(idx), r, c](Node& self) {
    Matrix g = Matrix::Zero(r, c);
    for (std::size_t j = 0; j < idx.size(); ++j) g.col(idx[j]) += self.grad.col(static_cast<Index>(j));
    accumulate_parent(self, 0, g);
  });
}

Tensor broadcast_cols(const Tensor& column, Index cols) {
  if (column.cols() != 1) throw InputError("broadcast_cols: expected a column vector");
  Matrix out = column.value().replicate(1, cols);
  return make_result(std::move(out), {column}, [](Node& self) {
    accumulate_parent(self, 0, self.grad.rowwise().sum());
  });
}

Tensor reverse_rows(const Tensor& a) {
  Matrix out = a.value().colwise().reverse();
  return make_result(std::move(out), {a}, [](Node& self) {
    accumulate_parent(self, 0, self.grad.colwise().reverse());
  });
}

// ---------------------------------------------------------------------------

Tensor softmax_cols(const Tensor& a) {
  Matrix out = a.value();
  for (Index j = 0; j < out.cols(); ++j) {
    auto col = out.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix gy = self.grad.cwiseProduct(y);
    Matrix dots = gy.colwise().sum();
    Matrix g = gy - y.cwiseProduct(dots.replicate(y.rows(), 1));
    accumulate_parent(self, 0, g);
  });
}

Tensor log_softmax_cols(const Tensor& a) {
  Matrix out = a.value();
  for (Index j = 0; j < out.cols(); ++j) {
    auto col = out.col(j);
    const double m = col.maxCoeff();
    const double lse = m + std::log((col.array() - m).exp().sum());
    col.array() -= lse;
  }
  return make_result(std::move(out), {a}, [](Node& self) {
    Matrix p = self.value.array().exp();
    Matrix gsum = self.grad.colwise().sum();
    Matrix g = self.grad - p.cwiseProduct(gsum.replicate(p.rows(), 1));
    accumulate_parent(self, 0, g);
  });
}

Tensor layer_norm_cols(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  const Matrix& x = a.value();
  const Index rows = x.rows(), cols = x.cols();
  if (gain.rows() != rows || bias.rows() != rows) throw InputError("layer_norm: gain/bias size mismatch");
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(cols);
  for (Index j = 0; j < cols; ++j) {
    const double mu = x.col(j).mean();
    const double var = (x.col(j).array() - mu).square().mean();
    inv_std(j) = 1.0 / std::sqrt(var + eps);
    xhat.col(j) = (x.col(j).array() - mu) * inv_std(j);
  }
  Matrix out = xhat.cwiseProduct(gain.value().replicate(1, cols));
  out.colwise() += bias.value().col(0);
  return make_result(std::move(out), {a, gain, bias},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const Index rows = xhat.rows(), cols = xhat.cols();
                       const Matrix& gain = self.parents[1]->value;
                       if (self.parents[0]->requires_grad) {
                         Matrix dxhat = self.grad.cwiseProduct(gain.replicate(1, cols));
                         Matrix gx(rows, cols);
                         for (Index j = 0; j < cols; ++j) {
                           const double m1 = dxhat.col(j).mean();
                           const double m2 = dxhat.col(j).dot(xhat.col(j)) / static_cast<double>(rows);
                           gx.col(j) = (dxhat.col(j).array() - m1 - xhat.col(j).array() * m2) * inv_std(j);
                         }
                         self.parents[0]->accumulate(gx);
                       }
                       accumulate_parent(self, 1, self.grad.cwiseProduct(xhat).rowwise().sum());
                       accumulate_parent(self, 2, self.grad.rowwise().sum());
                     });
}

// ---------------------------------------------------------------------------

Index ConvGeometry::output_length(Index input_length) const {
  const Index span = dilation * (kernel - 1) + 1;
  const Index padded = input_length + pad_left + pad_right;
  if (padded < span) return 0;
  return (padded - span) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& g) {
  const Index cin = x.rows(), t_in = x.cols(), k = g.kernel;
  if (weight.cols() != cin * k) throw InputError("conv1d: weight/input channel mismatch");
  const Index t_out = g.output_length(t_in);
  if (t_out <= 0) throw InputError("conv1d: input shorter than receptive field");

  Matrix cols = Matrix::Zero(cin * k, t_out);
  const Matrix& xv = x.value();
  for (Index ci = 0; ci < cin; ++ci) {
    const double* src = xv.data() + ci * t_in;
    for (Index kk = 0; kk < k; ++kk) {
      const Index offset = kk * g.dilation - g.pad_left;
      double* dst = cols.data() + (ci * k + kk) * t_out;
      for (Index t = 0; t < t_out; ++t) {
        const Index s = t * g.stride + offset;
        if (s >= 0 && s < t_in) dst[t] = src[s];
      }
    }
  }
  Matrix out = weight.value() * cols;
  if (bias.defined()) out.colwise() += bias.value().col(0);

  return make_result(std::move(out), {x, weight, bias},
                     [cols = std::move(cols), g, cin, t_in, t_out](Node& self) {
                       const Index k = g.kernel;
                       if (self.parents[1]->requires_grad)
                         self.parents[1]->accumulate(self.grad * cols.transpose());
                       if (self.parents[2]->requires_grad)
                         self.parents[2]->accumulate(self.grad.rowwise().sum());
                       if (self.parents[0]->requires_grad) {
                         Matrix dcols = self.parents[1]->value.transpose() * self.grad;
                         Matrix gx = Matrix::Zero(cin, t_in);
                         for (Index ci = 0; ci < cin; ++ci) {
                           double* dst = gx.data() + ci * t_in;
                           for (Index kk = 0; kk < k; ++kk) {
                             const Index offset = kk * g.dilation - g.pad_left;
                             const double* src = dcols.data() + (ci * k + kk) * t_out;
                             for (Index t = 0; t < t_out; ++t) {
                               const Index s = t * g.stride + offset;
                               if (s >= 0 && s < t_in) dst[s] += src[t];
                             }
                           }
                         }
                         self.parents[0]->accumulate(gx);
                       }
                     });
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Index kernel,
                        Index stride, Index padding) {
  const Index cin = x.rows(), t_in = x.cols();
  if (weight.cols() != cin || weight.rows() % kernel != 0)
    throw InputError("conv_transpose1d: weight shape mismatch");
  const Index cout = weight.rows() / kernel;
  const Index t_out = (t_in - 1) * stride - 2 * padding + kernel;
  if (t_out <= 0) throw InputError("conv_transpose1d: empty output");

  Matrix cols = weight.value() * x.value();  // [cout*K x t_in]
  Matrix out = Matrix::Zero(cout, t_out);
  for (Index co = 0; co < cout; ++co) {
    double* dst = out.data() + co * t_out;
    for (Index kk = 0; kk < kernel; ++kk) {
      const double* src = cols.data() + (co * kernel + kk) * t_in;
      for (Index t = 0; t < t_in; ++t) {
        const Index o = t * stride + kk - padding;
        if (o >= 0 && o < t_out) dst[o] += src[t];
      }
    }
  }
  if (bias.defined()) out.colwise() += bias.value().col(0);

  return make_result(std::move(out), {x, weight, bias},
                     [kernel, stride, padding, cout, t_in, t_out](Node& self) {
                       Matrix dcols(cout * kernel, t_in);
                       for (Index co = 0; co < cout; ++co) {
                         const double* src = self.grad.data() + co * t_out;
                         for (Index kk = 0; kk < kernel; ++kk) {
                           double* dst = dcols.data() + (co * kernel + kk) * t_in;
                           for (Index t = 0; t < t_in; ++t) {
                             const Index o = t * stride + kk - padding;
                             dst[t] = (o >= 0 && o < t_out) ? src[o] : 0.0;
                           }
                         }
                       }
                       if (self.parents[1]->requires_grad)
                         self.parents[1]->accumulate(dcols * self.parents[0]->value.transpose());
                       if (self.parents[2]->requires_grad)
                         self.parents[2]->accumulate(self.grad.rowwise().sum());
                       if (self.parents[0]->requires_grad)
                         self.parents[0]->accumulate(self.parents[1]->value.transpose() * dcols);
                     });
}

}  // namespace pavits::ag
