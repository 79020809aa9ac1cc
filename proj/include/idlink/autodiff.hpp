#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tensor is a handle to a node in a dynamically built computation graph. Ops
// record a backward closure only when some input requires a gradient, so
// evaluating a model on constants (target encoders, inference) builds no graph.

namespace idlink::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Guard for logs and divisions by norms.
inline constexpr double kEps = 1e-12;

struct Node {
  Matrix value;
  Matrix grad;  ///< empty until something flows into it
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Node(Matrix v, bool rg);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  std::size_t accounted_elements = 0;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  /// In-place access for optimizers; do not call while a graph through this tensor is live.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_backward_node() const { return node_ && !node_->is_leaf; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const;
  void zero_grad() { node_->grad.resize(0, 0); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Accumulates d loss / d leaf into every reachable leaf that requires a gradient.
/// Leaf gradients accumulate across calls; intermediate gradients are released.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Forward ops

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor sparse_matmul(std::shared_ptr<const SparseMatrix> adj, const Tensor& x);

/// Elementwise a + b. `b` may also be a 1 x cols row (broadcast over rows) or 1 x 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product. `b` may be a 1 x cols row broadcast over rows.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
/// Multiplies row i by the constant s(i).
Tensor scale_rows(const Tensor& a, const Vector& s);

Tensor relu(const Tensor& x);
/// slope is a 1 x 1 tensor shared across all entries.
Tensor prelu(const Tensor& x, const Tensor& slope);
Tensor sigmoid(const Tensor& x);
Tensor log_sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);

Tensor row_l2_normalize(const Tensor& x);
/// Row-wise dot products, n x 1.
Tensor row_dot(const Tensor& a, const Tensor& b);
/// Row-wise cosine similarity, n x 1.
Tensor row_cosine_similarity(const Tensor& a, const Tensor& b);
/// Row-wise log(sum(exp(x))), n x 1. Entries equal to -inf contribute nothing.
Tensor logsumexp_rows(const Tensor& x);
/// Sets entries (i, i) to a constant; no gradient flows through them. Need not be square.
Tensor fill_diagonal(const Tensor& x, double value);
/// Diagonal of a square tensor as n x 1.
Tensor diagonal(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, std::span<const int> rows);

/// Zero-mean, unit-variance columns (biased variance).
Tensor normalize_columns(const Tensor& x, double eps = 1e-5);
/// Zero-mean, unit-variance rows (biased variance).
Tensor normalize_rows(const Tensor& x, double eps = 1e-5);

struct BatchNormState {
  Vector running_mean;
  Vector running_var;
};

/// Training mode normalizes with batch statistics and updates `state` with
/// running = (1 - momentum) * running + momentum * batch (unbiased variance).
/// Evaluation mode uses the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  double momentum, bool training, double eps = 1e-5);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// ---------------------------------------------------------------------------
// Parameters and optimization

struct Parameter {
  std::string name;
  Tensor tensor;
  Matrix adam_m;
  Matrix adam_v;
  std::int64_t step_count = 0;

  Parameter(std::string name, Matrix init);
  const Matrix& value() const { return tensor.value(); }
};

void zero_grad(std::span<Parameter* const> params);

struct AdamOptions {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Decoupled weight decay (p -= lr * wd * p) followed by a bias-corrected Adam update.
/// A parameter without a gradient is treated as having a zero gradient.
void adam_step(std::span<Parameter* const> params, const AdamOptions& opts);

/// Exponential moving average of a parameter; never part of a computation graph.
struct EmaShadow {
  Matrix values;
  double decay = 0.99;

  EmaShadow(const Parameter& p, double decay) : values(p.value()), decay(decay) {}
};

/// shadow <- decay * shadow + (1 - decay) * online
void ema_update(EmaShadow& shadow, const Parameter& online);

void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params);
void load_parameters(const std::filesystem::path& path, std::span<Parameter* const> params);
void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Verification

/// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
/// numeric from central differences with step eps. f must return a 1 x 1 tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Matrix& x, double eps = 1e-5);

/// Same check against the current values of `params`, which `f` reads directly.
double grad_check_params(const std::function<Tensor()>& f, std::span<Parameter* const> params, double eps = 1e-5);

/// Records tensor allocations on this thread while alive. Nested probes all observe.
class MemoryProbe {
 public:
  MemoryProbe();
  ~MemoryProbe();
  MemoryProbe(const MemoryProbe&) = delete;
  MemoryProbe& operator=(const MemoryProbe&) = delete;

  /// Peak live tensor elements (values only) above the level at construction.
  std::size_t peak_live_elements() const { return peak_ - base_; }
  std::size_t max_tensor_elements() const { return max_single_; }
  std::size_t tensors_created() const { return created_; }
  bool saw_shape(Index rows, Index cols) const;
  const std::vector<std::pair<Index, Index>>& shapes() const { return shapes_; }

  void on_alloc(Index rows, Index cols, std::size_t live);

 private:
  std::size_t base_ = 0;
  std::size_t peak_ = 0;
  std::size_t max_single_ = 0;
  std::size_t created_ = 0;
  std::vector<std::pair<Index, Index>> shapes_;
  MemoryProbe* outer_ = nullptr;
};

/// Live tensor elements on this thread.
std::size_t live_tensor_elements();

}  // namespace idlink::ad
