#include "idlink/autodiff.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace idlink::ad {

namespace {

thread_local std::size_t t_live_elements = 0;
thread_local MemoryProbe* t_probe = nullptr;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(fmt::format("{}: shape mismatch ({}x{} vs {}x{})", op, a.rows(), a.cols(), b.rows(), b.cols()));
}

Tensor make_op(Matrix value, const char* op, std::vector<std::shared_ptr<Node>> parents,
               std::function<void(Node&)> bw) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto node = std::make_shared<Node>(std::move(value), rg);
  if (rg) {
    node->is_leaf = false;
    node->op = op;
    node->parents = std::move(parents);
    node->backward = std::move(bw);
  }
  return Tensor(std::move(node));
}

template <typename Expr>
void accumulate(Node& p, const Expr& g) {
  if (!p.requires_grad) return;
  if (p.grad.size() == 0) {
    p.grad = g;
  } else {
    p.grad += g;
  }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

Node::Node(Matrix v, bool rg) : value(std::move(v)), requires_grad(rg) {
  accounted_elements = static_cast<std::size_t>(value.size());
  t_live_elements += accounted_elements;
  if (t_probe) t_probe->on_alloc(value.rows(), value.cols(), t_live_elements);
}

Node::~Node() { t_live_elements -= accounted_elements; }

std::size_t live_tensor_elements() { return t_live_elements; }

Tensor Tensor::constant(Matrix value) { return Tensor(std::make_shared<Node>(std::move(value), false)); }

Tensor Tensor::parameter(Matrix value) { return Tensor(std::make_shared<Node>(std::move(value), true)); }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw std::invalid_argument("item() on a non-scalar tensor");
  return node_->value(0, 0);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("backward() needs a scalar (1x1) loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS so each shared subexpression is visited once.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->is_leaf && visited.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (Node* n : order)
    if (!n->is_leaf) n->grad.resize(0, 0);
  accumulate(*loss.node(), Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf || n->grad.size() == 0) continue;
    n->backward(*n);
    n->grad.resize(0, 0);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument(fmt::format("matmul: {}x{} * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
  Matrix v = a.value() * b.value();
  return make_op(std::move(v), "matmul", {a.shared(), b.shared()}, [](Node& self) {
    Node& A = parent(self, 0);
    Node& B = parent(self, 1);
    if (A.requires_grad) accumulate(A, self.grad * B.value.transpose());
    if (B.requires_grad) accumulate(B, A.value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument(fmt::format("matmul_nt: {}x{} * ({}x{})^T", a.rows(), a.cols(), b.rows(), b.cols()));
  Matrix v = a.value() * b.value().transpose();
  return make_op(std::move(v), "matmul_nt", {a.shared(), b.shared()}, [](Node& self) {
    Node& A = parent(self, 0);
    Node& B = parent(self, 1);
    if (A.requires_grad) accumulate(A, self.grad * B.value);
    if (B.requires_grad) accumulate(B, self.grad.transpose() * A.value);
  });
}

Tensor sparse_matmul(std::shared_ptr<const SparseMatrix> adj, const Tensor& x) {
  if (adj->cols() != x.rows())
    throw std::invalid_argument(fmt::format("sparse_matmul: {}x{} * {}x{}", adj->rows(), adj->cols(), x.rows(), x.cols()));
  Matrix v = (*adj) * x.value();
  return make_op(std::move(v), "sparse_matmul", {x.shared()}, [adj](Node& self) {
    accumulate(parent(self, 0), adj->transpose() * self.grad);
  });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

enum class Broadcast { none, row, scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::none;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
  throw std::invalid_argument(fmt::format("{}: cannot broadcast {}x{} onto {}x{}", op, b.rows(), b.cols(), a.rows(), a.cols()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast bc = broadcast_kind(a, b, "add");
  Matrix v;
  switch (bc) {
    case Broadcast::none: v = a.value() + b.value(); break;
    case Broadcast::row: v = a.value().rowwise() + b.value().row(0); break;
    case Broadcast::scalar: v = a.value().array() + b.value()(0, 0); break;
  }
  return make_op(std::move(v), "add", {a.shared(), b.shared()}, [bc](Node& self) {
    accumulate(parent(self, 0), self.grad);
    Node& B = parent(self, 1);
    if (!B.requires_grad) return;
    switch (bc) {
      case Broadcast::none: accumulate(B, self.grad); break;
      case Broadcast::row: accumulate(B, self.grad.colwise().sum()); break;
      case Broadcast::scalar: accumulate(B, Matrix::Constant(1, 1, self.grad.sum())); break;
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix v = a.value() - b.value();
  return make_op(std::move(v), "sub", {a.shared(), b.shared()}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), -self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast bc = broadcast_kind(a, b, "mul");
  if (bc == Broadcast::scalar) throw std::invalid_argument("mul: use scalar_mul for constants");
  Matrix v = bc == Broadcast::none ? Matrix(a.value().cwiseProduct(b.value()))
                                   : Matrix(a.value().array().rowwise() * b.value().row(0).array());
  return make_op(std::move(v), "mul", {a.shared(), b.shared()}, [bc](Node& self) {
    Node& A = parent(self, 0);
    Node& B = parent(self, 1);
    if (bc == Broadcast::none) {
      if (A.requires_grad) accumulate(A, self.grad.cwiseProduct(B.value));
      if (B.requires_grad) accumulate(B, self.grad.cwiseProduct(A.value));
    } else {
      if (A.requires_grad) accumulate(A, Matrix(self.grad.array().rowwise() * B.value.row(0).array()));
      if (B.requires_grad) accumulate(B, self.grad.cwiseProduct(A.value).colwise().sum());
    }
  });
}

Tensor scalar_mul(const Tensor& a, double s) {
  Matrix v = a.value() * s;
  return make_op(std::move(v), "scalar_mul", {a.shared()}, [s](Node& self) { accumulate(parent(self, 0), self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  Matrix v = a.value().array() + s;
  return make_op(std::move(v), "add_scalar", {a.shared()}, [](Node& self) { accumulate(parent(self, 0), self.grad); });
}

Tensor scale_rows(const Tensor& a, const Vector& s) {
  if (s.size() != a.rows()) throw std::invalid_argument("scale_rows: scale length != rows");
  Matrix v = s.asDiagonal() * a.value();
  return make_op(std::move(v), "scale_rows", {a.shared()}, [s](Node& self) {
    accumulate(parent(self, 0), s.asDiagonal() * self.grad);
  });
}

Tensor relu(const Tensor& x) {
  Matrix v = x.value().cwiseMax(0.0);
  return make_op(std::move(v), "relu", {x.shared()}, [](Node& self) {
    Node& X = parent(self, 0);
    accumulate(X, Matrix((X.value.array() > 0.0).select(self.grad.array(), 0.0)));
  });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (slope.rows() != 1 || slope.cols() != 1) throw std::invalid_argument("prelu: slope must be 1x1");
  const double a = slope.value()(0, 0);
  Matrix v = (x.value().array() > 0.0).select(x.value().array(), a * x.value().array());
  return make_op(std::move(v), "prelu", {x.shared(), slope.shared()}, [](Node& self) {
    Node& X = parent(self, 0);
    Node& A = parent(self, 1);
    const double a = A.value(0, 0);
    const auto pos = X.value.array() > 0.0;
    if (X.requires_grad) accumulate(X, Matrix(pos.select(self.grad.array(), a * self.grad.array())));
    if (A.requires_grad)
      accumulate(A, Matrix::Constant(1, 1, pos.select(0.0, self.grad.array() * X.value.array()).sum()));
  });
}

Tensor sigmoid(const Tensor& x) {
  Matrix v = x.value().unaryExpr([](double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  });
  return make_op(std::move(v), "sigmoid", {x.shared()}, [](Node& self) {
    accumulate(parent(self, 0), Matrix(self.grad.array() * self.value.array() * (1.0 - self.value.array())));
  });
}

Tensor log_sigmoid(const Tensor& x) {
  Matrix v = x.value().unaryExpr([](double t) { return std::min(t, 0.0) - std::log1p(std::exp(-std::abs(t))); });
  return make_op(std::move(v), "log_sigmoid", {x.shared()}, [](Node& self) {
    Node& X = parent(self, 0);
    // d/dt log(sigmoid(t)) = sigmoid(-t)
    Matrix s = X.value.unaryExpr([](double t) {
      if (t >= 0) {
        const double e = std::exp(-t);
        return e / (1.0 + e);
      }
      return 1.0 / (1.0 + std::exp(t));
    });
    accumulate(X, self.grad.cwiseProduct(s));
  });
}

Tensor log(const Tensor& x) {
  Matrix v = x.value().unaryExpr([](double t) { return std::log(std::max(t, kEps)); });
  return make_op(std::move(v), "log", {x.shared()}, [](Node& self) {
    Node& X = parent(self, 0);
    accumulate(X, Matrix((X.value.array() > kEps).select(self.grad.array() / X.value.array(), 0.0)));
  });
}

Tensor exp(const Tensor& x) {
  Matrix v = x.value().array().exp();
  return make_op(std::move(v), "exp", {x.shared()}, [](Node& self) {
    accumulate(parent(self, 0), self.grad.cwiseProduct(self.value));
  });
}

// ---------------------------------------------------------------------------
// Row reductions and similarity

Tensor row_l2_normalize(const Tensor& x) {
  Vector norms = x.value().rowwise().norm();
  Vector denom = norms.cwiseMax(kEps);
  Matrix v = denom.cwiseInverse().asDiagonal() * x.value();
  return make_op(std::move(v), "row_l2_normalize", {x.shared()}, [norms, denom](Node& self) {
    const Matrix& y = self.value;
    Vector proj = y.cwiseProduct(self.grad).rowwise().sum();
    Matrix g = self.grad;
    for (Index i = 0; i < g.rows(); ++i) {
      if (norms(i) > kEps) g.row(i) -= proj(i) * y.row(i);
      g.row(i) /= denom(i);
    }
    accumulate(parent(self, 0), g);
  });
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "row_dot");
  Matrix v = a.value().cwiseProduct(b.value()).rowwise().sum();
  return make_op(std::move(v), "row_dot", {a.shared(), b.shared()}, [](Node& self) {
    Node& A = parent(self, 0);
    Node& B = parent(self, 1);
    const auto g = self.grad.col(0);
    if (A.requires_grad) accumulate(A, g.asDiagonal() * B.value);
    if (B.requires_grad) accumulate(B, g.asDiagonal() * A.value);
  });
}

Tensor row_cosine_similarity(const Tensor& a, const Tensor& b) {
  return row_dot(row_l2_normalize(a), row_l2_normalize(b));
}

Tensor logsumexp_rows(const Tensor& x) {
  const Matrix& xv = x.value();
  Vector out(xv.rows());
  for (Index i = 0; i < xv.rows(); ++i) {
    const double m = xv.row(i).maxCoeff();
    if (!std::isfinite(m)) {
      out(i) = m;
      continue;
    }
    out(i) = m + std::log((xv.row(i).array() - m).exp().sum());
  }
  return make_op(Matrix(out), "logsumexp_rows", {x.shared()}, [](Node& self) {
    Node& X = parent(self, 0);
    Matrix g(X.value.rows(), X.value.cols());
    for (Index i = 0; i < g.rows(); ++i) {
      const double y = self.value(i, 0);
      if (!std::isfinite(y)) {
        g.row(i).setZero();
        continue;
      }
      g.row(i) = (X.value.row(i).array() - y).exp() * self.grad(i, 0);
    }
    accumulate(X, g);
  });
}

Tensor fill_diagonal(const Tensor& x, double value) {
  Matrix v = x.value();
  v.diagonal().setConstant(value);
  return make_op(std::move(v), "fill_diagonal", {x.shared()}, [](Node& self) {
    Matrix g = self.grad;
    g.diagonal().setZero();
    accumulate(parent(self, 0), g);
  });
}

Tensor diagonal(const Tensor& x) {
  if (x.rows() != x.cols()) throw std::invalid_argument("diagonal: tensor is not square");
  Matrix v = x.value().diagonal();
  return make_op(std::move(v), "diagonal", {x.shared()}, [](Node& self) {
    Node& X = parent(self, 0);
    Matrix g = Matrix::Zero(X.value.rows(), X.value.cols());
    g.diagonal() = self.grad.col(0);
    accumulate(X, g);
  });
}

Tensor sum(const Tensor& x) {
  Matrix v = Matrix::Constant(1, 1, x.value().sum());
  return make_op(std::move(v), "sum", {x.shared()}, [](Node& self) {
    Node& X = parent(self, 0);
    accumulate(X, Matrix::Constant(X.value.rows(), X.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& x) {
  if (x.value().size() == 0) throw std::invalid_argument("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(x.value().size());
  Matrix v = Matrix::Constant(1, 1, x.value().sum() * inv);
  return make_op(std::move(v), "mean", {x.shared()}, [inv](Node& self) {
    Node& X = parent(self, 0);
    accumulate(X, Matrix::Constant(X.value.rows(), X.value.cols(), self.grad(0, 0) * inv));
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("concat_rows: column counts differ");
  Matrix v(a.rows() + b.rows(), a.cols());
  v << a.value(), b.value();
  const Index ra = a.rows();
  return make_op(std::move(v), "concat_rows", {a.shared(), b.shared()}, [ra](Node& self) {
    Node& A = parent(self, 0);
    Node& B = parent(self, 1);
    if (A.requires_grad) accumulate(A, self.grad.topRows(ra));
    if (B.requires_grad) accumulate(B, self.grad.bottomRows(self.grad.rows() - ra));
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Index ca = a.cols();
  return make_op(std::move(v), "concat_cols", {a.shared(), b.shared()}, [ca](Node& self) {
    Node& A = parent(self, 0);
    Node& B = parent(self, 1);
    if (A.requires_grad) accumulate(A, self.grad.leftCols(ca));
    if (B.requires_grad) accumulate(B, self.grad.rightCols(self.grad.cols() - ca));
  });
}

Tensor gather_rows(const Tensor& x, std::span<const int> rows) {
  Matrix v(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= x.rows())
      throw std::out_of_range(fmt::format("gather_rows: row {} out of range [0, {})", rows[k], x.rows()));
    v.row(static_cast<Index>(k)) = x.value().row(rows[k]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return make_op(std::move(v), "gather_rows", {x.shared()}, [idx = std::move(idx)](Node& self) {
    Node& X = parent(self, 0);
    if (X.grad.size() == 0) X.grad = Matrix::Zero(X.value.rows(), X.value.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) X.grad.row(idx[k]) += self.grad.row(static_cast<Index>(k));
  });
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

// Shared backward for standardization along one axis: with y = (x - mu) * inv,
// dx = inv * (g - mean(g) - y * mean(g * y)) along that axis.
Matrix standardize_backward_cols(const Matrix& g, const Matrix& y, const Vector& inv) {
  const double n = static_cast<double>(g.rows());
  Eigen::RowVectorXd mg = g.colwise().sum() / n;
  Eigen::RowVectorXd mgy = g.cwiseProduct(y).colwise().sum() / n;
  Matrix dx = g;
  dx.rowwise() -= mg;
  dx -= Matrix(y.array().rowwise() * mgy.array());
  return dx * inv.asDiagonal();
}

}  // namespace

Tensor normalize_columns(const Tensor& x, double eps) {
  const Matrix& xv = x.value();
  if (xv.rows() == 0) throw std::invalid_argument("normalize_columns: empty tensor");
  Eigen::RowVectorXd mu = xv.colwise().mean();
  Matrix centered = xv.rowwise() - mu;
  Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  Vector inv = (var.array() + eps).rsqrt().transpose();
  Matrix v = centered * inv.asDiagonal();
  return make_op(std::move(v), "normalize_columns", {x.shared()}, [inv](Node& self) {
    accumulate(parent(self, 0), standardize_backward_cols(self.grad, self.value, inv));
  });
}

Tensor normalize_rows(const Tensor& x, double eps) {
  const Matrix& xv = x.value();
  if (xv.cols() == 0) throw std::invalid_argument("normalize_rows: empty tensor");
  Vector mu = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mu;
  Vector var = centered.array().square().rowwise().mean();
  Vector inv = (var.array() + eps).rsqrt();
  Matrix v = inv.asDiagonal() * centered;
  return make_op(std::move(v), "normalize_rows", {x.shared()}, [inv](Node& self) {
    Matrix gt = self.grad.transpose();
    Matrix yt = self.value.transpose();
    accumulate(parent(self, 0), standardize_backward_cols(gt, yt, inv).transpose());
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, double momentum,
                  bool training, double eps) {
  const Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw std::invalid_argument("batch_norm: gamma/beta must be 1 x features");
  if (state.running_mean.size() != d) {
    state.running_mean = Vector::Zero(d);
    state.running_var = Vector::Ones(d);
  }
  Tensor normalized;
  if (training) {
    const Matrix& xv = x.value();
    const double n = static_cast<double>(xv.rows());
    Vector mu = xv.colwise().mean().transpose();
    Vector var = (xv.rowwise() - mu.transpose()).array().square().colwise().sum().transpose();
    var /= std::max(n - 1.0, 1.0);
    state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mu;
    state.running_var = (1.0 - momentum) * state.running_var + momentum * var;
    normalized = normalize_columns(x, eps);
  } else {
    Vector inv = (state.running_var.array() + eps).rsqrt();
    Matrix v = (x.value().rowwise() - state.running_mean.transpose()) * inv.asDiagonal();
    normalized = make_op(std::move(v), "batch_norm_eval", {x.shared()}, [inv](Node& self) {
      accumulate(parent(self, 0), self.grad * inv.asDiagonal());
    });
  }
  return add(mul(normalized, gamma), beta);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Index d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw std::invalid_argument("layer_norm: gamma/beta must be 1 x features");
  return add(mul(normalize_rows(x, eps), gamma), beta);
}

// ---------------------------------------------------------------------------
// Optimization

Parameter::Parameter(std::string name, Matrix init)
    : name(std::move(name)),
      tensor(Tensor::parameter(std::move(init))),
      adam_m(Matrix::Zero(tensor.rows(), tensor.cols())),
      adam_v(Matrix::Zero(tensor.rows(), tensor.cols())) {}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->tensor.zero_grad();
}

void adam_step(std::span<Parameter* const> params, const AdamOptions& o) {
  for (Parameter* p : params) {
    Matrix& w = p->tensor.mutable_value();
    ++p->step_count;
    if (o.weight_decay != 0.0) w *= (1.0 - o.lr * o.weight_decay);
    if (p->tensor.has_grad()) {
      const Matrix& g = p->tensor.grad();
      p->adam_m = o.beta1 * p->adam_m + (1.0 - o.beta1) * g;
      p->adam_v = o.beta2 * p->adam_v + (1.0 - o.beta2) * g.cwiseAbs2();
    } else {
      p->adam_m *= o.beta1;
      p->adam_v *= o.beta2;
    }
    const double t = static_cast<double>(p->step_count);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    w.array() -= o.lr * (p->adam_m.array() / c1) / ((p->adam_v.array() / c2).sqrt() + o.eps);
  }
}

void ema_update(EmaShadow& shadow, const Parameter& online) {
  if (shadow.values.rows() != online.value().rows() || shadow.values.cols() != online.value().cols())
    throw std::invalid_argument("ema_update: shape mismatch");
  shadow.values = shadow.decay * shadow.values + (1.0 - shadow.decay) * online.value();
}

// ---------------------------------------------------------------------------
// Checkpoints: "name rows cols" header followed by rows lines of values.

namespace {

void write_block(std::ostream& out, const std::string& name, const Matrix& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << fmt::format("{:.17g}", m(i, j));
    out << '\n';
  }
}

Matrix read_block(std::istream& in, std::string& name) {
  Index rows = 0;
  Index cols = 0;
  if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) throw std::runtime_error("malformed matrix header");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      if (!(in >> m(i, j))) throw std::runtime_error(fmt::format("truncated matrix '{}'", name));
  return m;
}

}  // namespace

void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << params.size() << '\n';
  for (const Parameter* p : params) write_block(out, p->name, p->value());
}

void load_parameters(const std::filesystem::path& path, std::span<Parameter* const> params) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::size_t count = 0;
  in >> count;
  if (count != params.size())
    throw std::runtime_error(fmt::format("checkpoint has {} parameters, model has {}", count, params.size()));
  for (Parameter* p : params) {
    std::string name;
    Matrix m = read_block(in, name);
    if (name != p->name || m.rows() != p->value().rows() || m.cols() != p->value().cols())
      throw std::runtime_error(fmt::format("checkpoint entry '{}' does not match parameter '{}'", name, p->name));
    p->tensor.mutable_value() = std::move(m);
  }
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  write_block(out, "matrix", m);
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
  std::string name;
  return read_block(in, name);
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {

double relative_error(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); }

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Matrix& x, double eps) {
  Tensor leaf = Tensor::parameter(x);
  Tensor y = f(leaf);
  backward(y);
  const Matrix analytic = leaf.has_grad() ? leaf.grad() : Matrix::Zero(x.rows(), x.cols());
  double worst = 0.0;
  Matrix probe = x;
  for (Index k = 0; k < x.size(); ++k) {
    const double orig = probe(k);
    probe(k) = orig + eps;
    const double fp = f(Tensor::constant(probe)).item();
    probe(k) = orig - eps;
    const double fm = f(Tensor::constant(probe)).item();
    probe(k) = orig;
    worst = std::max(worst, relative_error(analytic(k), (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

double grad_check_params(const std::function<Tensor()>& f, std::span<Parameter* const> params, double eps) {
  zero_grad(params);
  backward(f());
  std::vector<Matrix> analytic;
  for (Parameter* p : params)
    analytic.push_back(p->tensor.has_grad() ? p->tensor.grad() : Matrix::Zero(p->value().rows(), p->value().cols()));
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = params[i]->tensor.mutable_value();
    for (Index k = 0; k < w.size(); ++k) {
      const double orig = w(k);
      w(k) = orig + eps;
      const double fp = f().item();
      w(k) = orig - eps;
      const double fm = f().item();
      w(k) = orig;
      worst = std::max(worst, relative_error(analytic[i](k), (fp - fm) / (2.0 * eps)));
    }
  }
  zero_grad(params);
  return worst;
}

// ---------------------------------------------------------------------------
// Memory probe

MemoryProbe::MemoryProbe() : base_(t_live_elements), peak_(t_live_elements), outer_(t_probe) { t_probe = this; }

MemoryProbe::~MemoryProbe() { t_probe = outer_; }

void MemoryProbe::on_alloc(Index rows, Index cols, std::size_t live) {
  ++created_;
  peak_ = std::max(peak_, live);
  max_single_ = std::max(max_single_, static_cast<std::size_t>(rows * cols));
  const std::pair<Index, Index> shape{rows, cols};
  if (std::find(shapes_.begin(), shapes_.end(), shape) == shapes_.end()) shapes_.push_back(shape);
  if (outer_) outer_->on_alloc(rows, cols, live);
}

bool MemoryProbe::saw_shape(Index rows, Index cols) const {
  return std::find(shapes_.begin(), shapes_.end(), std::pair<Index, Index>{rows, cols}) != shapes_.end();
}

}  // namespace idlink::ad
