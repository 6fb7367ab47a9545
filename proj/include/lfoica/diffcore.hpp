#pragma once

// Reverse-mode differentiation over the handful of matrix operations the
// LFOICA generators and MMD losses need, plus Adam and the L1 proximal step.
//
// A Tape records one forward evaluation. Leaves are either constants or
// bindings to a Param; Tape::backward() pushes d(loss)/d(node) back through
// the recorded nodes and accumulates the leaf gradients into Param::grad.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lfoica {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace diffcore {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string name, Matrix value);

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  Matrix m;
  Matrix v;
  long t = 0;
  AdamConfig config;

  static AdamState for_param(const Param& param, const AdamConfig& config = {});
};

// Bias-corrected Adam update of param.value using param.grad.
// Throws NumericalDivergence naming the param when the gradient is not finite.
void adam_step(Param& param, AdamState& state);

struct ProxConfig {
  double lambda = 0.0;  // L1 weight
  double gamma = 1e-3;  // step size the threshold is scaled by

  double threshold() const;
};

double prox_l1(double a, double t);
Matrix prox_l1(const Matrix& a, double t);

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// Tape is alive.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the gradient flowing into the node; pushes parent gradients
  // with Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Param& p);

  // Records a derived node. The node requires a gradient iff any parent does.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Matrix value, std::span<const Var> parents, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Adds g into the gradient buffer of v; no-op for constant subgraphs.
  void accumulate(Var v, const Matrix& g);

  // loss must be 1x1. Writes d(loss)/d(param) into every bound Param::grad
  // (accumulating). Throws NumericalDivergence on a non-finite loss or grad.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    Param* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

// ---- operation vocabulary -------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
// a (r x c) + bias (r x 1) broadcast over columns
Var add_column(Var a, Var bias);
// diag(s) * a for a column s (r x 1)
Var scale_rows(Var a, Var s);
// Each row shifted to zero mean and scaled to unit (population) variance.
Var standardize_rows(Var a, double eps = 1e-8);
Var leaky_relu(Var a, double slope);
Var exp(Var a);
// Column-wise softmax / log-softmax.
Var softmax_columns(Var a);
Var log_softmax_columns(Var a);
Var sum(Var a);
Var mean(Var a);
Var squared_norm(Var a);
Var transpose(Var a);
Var block(Var a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols);
Var row(Var a, Eigen::Index i);
Var hconcat(std::span<const Var> parts);
Var vconcat(std::span<const Var> parts);
// Matrix inverse; the caller is responsible for conditioning checks.
Var inverse(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return matmul(a, b); }

// ---- gradient checking ----------------------------------------------------

using ForwardFn = std::function<Var(Tape&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  std::size_t coordinates = 0;
};

// Compares analytic gradients against central differences. When
// max_coords_per_param is nonzero, only an evenly strided subset of each
// param's coordinates is probed. Relative error is
// |analytic - numeric| / max(1, |analytic|).
GradCheckReport grad_check(const ForwardFn& forward, std::span<Param* const> params,
                           double epsilon, std::size_t max_coords_per_param = 0);

bool all_finite(const Matrix& m);

}  // namespace diffcore
}  // namespace lfoica
