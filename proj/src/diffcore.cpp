#include "lfoica/diffcore.hpp"

#include "lfoica/errors.hpp"

#include <algorithm>
#include <cmath>

namespace lfoica::diffcore {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

Param::Param(std::string name, Matrix value)
    : name(std::move(name)), value(std::move(value)) {
  zero_grad();
}

void AdamConfig::validate() const {
  require(lr > 0 && std::isfinite(lr), "adam: lr must be positive");
  require(beta1 > 0 && beta1 < 1, "adam: beta1 must lie in (0,1)");
  require(beta2 > 0 && beta2 < 1, "adam: beta2 must lie in (0,1)");
  require(eps > 0, "adam: eps must be positive");
}

AdamState AdamState::for_param(const Param& param, const AdamConfig& config) {
  config.validate();
  AdamState s;
  s.m = Matrix::Zero(param.value.rows(), param.value.cols());
  s.v = Matrix::Zero(param.value.rows(), param.value.cols());
  s.config = config;
  return s;
}

void adam_step(Param& param, AdamState& state) {
  if (param.grad.rows() != param.value.rows() || param.grad.cols() != param.value.cols() ||
      state.m.rows() != param.value.rows() || state.m.cols() != param.value.cols())
    throw InvalidArgument("adam_step: state shape does not match param " + param.name);
  if (!param.grad.allFinite()) throw NumericalDivergence(param.name);

  const auto& c = state.config;
  state.t += 1;
  state.m = c.beta1 * state.m + (1 - c.beta1) * param.grad;
  state.v = c.beta2 * state.v + (1 - c.beta2) * param.grad.cwiseAbs2();
  const double bc1 = 1 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1 - std::pow(c.beta2, static_cast<double>(state.t));
  param.value.array() -=
      c.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + c.eps);
}

double ProxConfig::threshold() const {
  require(lambda >= 0, "prox: lambda must be >= 0");
  require(gamma > 0, "prox: gamma must be > 0");
  const double t = lambda * gamma;
  require(std::isfinite(t), "prox: threshold must be finite");
  return t;
}

double prox_l1(double a, double t) {
  if (!(t >= 0) || !std::isfinite(t)) throw InvalidArgument("prox_l1: threshold must be finite and >= 0");
  if (a > t) return a - t;
  if (a < -t) return a + t;
  return 0.0;
}

Matrix prox_l1(const Matrix& a, double t) {
  if (!(t >= 0) || !std::isfinite(t)) throw InvalidArgument("prox_l1: threshold must be finite and >= 0");
  return a.unaryExpr([t](double x) { return x > t ? x - t : (x < -t ? x + t : 0.0); });
}

// ---- Tape -----------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Param& p) {
  nodes_.push_back(Node{p.value, {}, false, true, &p, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw InvalidArgument("tape: operands recorded on different tapes");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, false, needs, nullptr, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw InvalidArgument("backward: loss must be a scalar");
  if (!std::isfinite(loss.value()(0, 0))) throw NumericalDivergence("loss");
  for (Node& n : nodes_) n.has_grad = false;
  accumulate(loss, Matrix::Ones(1, 1));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.param != nullptr) {
      if (!n.grad.allFinite()) throw NumericalDivergence(n.param->name);
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols())
        n.param->zero_grad();
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Parents always have smaller ids, so n.grad is not touched by the callback.
      n.backward(*this, n.grad);
    }
  }
}

// ---- operations -------------------------------------------------------------

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows())
    throw InvalidArgument("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.rows()) + ")");
  Tape& t = a.tape();
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, -g);
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                           if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                         });
}

Var scale(Var a, double c) {
  return a.tape().record(c * a.value(), {a}, [a, c](Tape& t, const Matrix& g) { t.accumulate(a, c * g); });
}

Var add_column(Var a, Var bias) {
  if (bias.cols() != 1 || bias.rows() != a.rows()) throw InvalidArgument("add_column: bias must be rows x 1");
  Matrix out = a.value().colwise() + bias.value().col(0);
  return a.tape().record(std::move(out), {a, bias}, [a, bias](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(bias)) t.accumulate(bias, g.rowwise().sum());
  });
}

Var scale_rows(Var a, Var s) {
  if (s.cols() != 1 || s.rows() != a.rows()) throw InvalidArgument("scale_rows: scale must be rows x 1");
  Matrix out = s.value().col(0).asDiagonal() * a.value();
  return a.tape().record(std::move(out), {a, s}, [a, s](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, s.value().col(0).asDiagonal() * g);
    if (t.requires_grad(s)) t.accumulate(s, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

Var standardize_rows(Var a, double eps) {
  if (a.cols() < 2) throw InvalidArgument("standardize_rows: need at least 2 columns");
  const Matrix& x = a.value();
  const double n = static_cast<double>(x.cols());
  Matrix centered = x.colwise() - x.rowwise().mean();
  const Vector inv_sd = ((centered.rowwise().squaredNorm() / n).array() + eps).rsqrt().matrix();
  Matrix out = inv_sd.asDiagonal() * centered;
  Tape& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {a}, [a, self, inv_sd, n](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(self);
    const Vector g_mean = g.rowwise().mean();
    const Vector gy_mean = g.cwiseProduct(y).rowwise().sum() / n;
    Matrix dx = g.colwise() - g_mean;
    dx -= gy_mean.asDiagonal() * y;
    t.accumulate(a, inv_sd.asDiagonal() * dx);
  });
}

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0 ? x : slope * x; });
  return a.tape().record(std::move(out), {a}, [a, slope](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([slope](double x) { return x > 0 ? 1.0 : slope; });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp().matrix();
  Tape& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(self)));
  });
}

namespace {
Matrix softmax_cols(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mx = x.col(j).maxCoeff();
    out.col(j) = (x.col(j).array() - mx).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}
}  // namespace

Var softmax_columns(Var a) {
  Tape& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(softmax_cols(a.value()), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(self);
    // dx = y * (g - sum(g * y))
    Matrix gy = g.cwiseProduct(y);
    Eigen::RowVectorXd s = gy.colwise().sum();
    Matrix dx = gy - y * s.asDiagonal();
    t.accumulate(a, dx);
  });
}

Var log_softmax_columns(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mx = x.col(j).maxCoeff();
    const double lse = mx + std::log((x.col(j).array() - mx).exp().sum());
    out.col(j) = x.col(j).array() - lse;
  }
  Tape& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    Matrix p = t.value(self).array().exp().matrix();
    Eigen::RowVectorXd s = g.colwise().sum();
    t.accumulate(a, g - p * s.asDiagonal());
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw InvalidArgument("mean: empty operand");
  return scale(sum(a), 1.0 / n);
}

Var squared_norm(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, 2.0 * g(0, 0) * a.value());
  });
}

Var transpose(Var a) {
  return a.tape().record(a.value().transpose(), {a},
                         [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var block(Var a, Eigen::Index r, Eigen::Index c, Eigen::Index rows, Eigen::Index cols) {
  if (r < 0 || c < 0 || rows < 0 || cols < 0 || r + rows > a.rows() || c + cols > a.cols())
    throw InvalidArgument("block: range outside operand");
  Matrix out = a.value().block(r, c, rows, cols);
  return a.tape().record(std::move(out), {a}, [a, r, c, rows, cols](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.block(r, c, rows, cols) = g;
    t.accumulate(a, full);
  });
}

Var row(Var a, Eigen::Index i) { return block(a, i, 0, 1, a.cols()); }

Var hconcat(std::span<const Var> parts) {
  require(!parts.empty(), "hconcat: no operands");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw InvalidArgument("hconcat: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), parts, [keep](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : keep) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

Var vconcat(std::span<const Var> parts) {
  require(!parts.empty(), "vconcat: no operands");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw InvalidArgument("vconcat: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), parts, [keep](Tape& t, const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : keep) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Var inverse(Var a) {
  if (a.rows() != a.cols()) throw InvalidArgument("inverse: operand must be square");
  Matrix inv = a.value().partialPivLu().inverse();
  Tape& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(inv), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(self);
    t.accumulate(a, -(y.transpose() * g * y.transpose()));
  });
}

// ---- gradient checking -------------------------------------------------------

GradCheckReport grad_check(const ForwardFn& forward, std::span<Param* const> params, double epsilon,
                           std::size_t max_coords_per_param) {
  require(epsilon > 0, "grad_check: epsilon must be positive");
  for (Param* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = forward(tape);
    tape.backward(loss);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  auto eval = [&]() {
    Tape tape;
    return forward(tape).value()(0, 0);
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    const Eigen::Index n = p.value.size();
    Eigen::Index stride = 1;
    if (max_coords_per_param > 0 && static_cast<std::size_t>(n) > max_coords_per_param)
      stride = (n + static_cast<Eigen::Index>(max_coords_per_param) - 1) /
               static_cast<Eigen::Index>(max_coords_per_param);
    for (Eigen::Index i = 0; i < n; i += stride) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + epsilon;
      const double up = eval();
      x = saved - epsilon;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2 * epsilon);
      const double a = analytic[k].data()[i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++report.coordinates;
      if (err > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        report.worst_param = p.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace lfoica::diffcore
