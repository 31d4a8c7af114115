#include "mtq/autodiff.hpp"

#include "mtq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mtq::nn {

// --- ParamStore -------------------------------------------------------------

ParamStore::ParamStore(const ParamStore& other) : params_(other.params_), index_(other.index_) {}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this != &other) {
    params_ = other.params_;
    index_ = other.index_;
  }
  return *this;
}

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  const Shape shape = init.shape();
  params_.push_back(Parameter{name, std::move(init), Tensor(shape), Tensor(shape), Tensor(shape)});
  index_.emplace(name, params_.size() - 1);
  return params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

// --- Graph ------------------------------------------------------------------

Var Graph::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, grad_enabled_, &p, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  for (Var v : inputs) needs = needs || nodes_.at(v.id).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : nullptr});
  return Var{nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::accumulate(Var v, const Tensor& delta) {
  if (!requires_grad(v)) return;
  grad_buffer(v).vector() += delta.vector();
}

void Graph::backward(Var loss) {
  if (nodes_.empty()) throw Error("empty tape: backward called without a forward pass");
  if (value(loss).size() != 1) throw ShapeError("backward requires a scalar loss");
  if (requires_grad(loss)) {
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) {
        // Copy: accumulation may touch other nodes but never this one.
        const Tensor out_grad = n.grad;
        n.backward(*this, out_grad);
      } else if (n.param != nullptr) {
        n.param->grad.vector() += n.grad.vector();
      }
    }
  }
  nodes_.clear();
}

// --- ops --------------------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Shape matrix_shape(const Tensor& t) { return {t.rows(), t.cols()}; }

template <typename Forward, typename Derivative>
Var unary(Graph& g, Var a, Forward f, Derivative df) {
  const Tensor& x = g.value(a);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return g.record(std::move(out), {a}, [a, df](Graph& gr, const Tensor& dy) {
    const Tensor& xv = gr.value(a);
    Tensor& dx = gr.grad_buffer(a);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += dy[i] * df(xv[i]);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Graph& g, Var a, Var b) {
  const Tensor& x = g.value(a);
  const Tensor& y = g.value(b);
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_string(x.shape()) + " vs " +
                     shape_string(y.shape()));
  }
  Tensor out({x.rows(), y.cols()});
  out.matrix().noalias() = x.matrix() * y.matrix();
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& dy) {
    if (gr.requires_grad(a)) {
      gr.grad_buffer(a).matrix().noalias() += dy.matrix() * gr.value(b).matrix().transpose();
    }
    if (gr.requires_grad(b)) {
      gr.grad_buffer(b).matrix().noalias() += gr.value(a).matrix().transpose() * dy.matrix();
    }
  });
}

Var transpose(Graph& g, Var a) {
  const Tensor& x = g.value(a);
  Tensor out({x.cols(), x.rows()});
  out.matrix() = x.matrix().transpose();
  return g.record(std::move(out), {a}, [a](Graph& gr, const Tensor& dy) {
    gr.grad_buffer(a).matrix() += dy.matrix().transpose();
  });
}

Var add(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "add");
  Tensor out = g.value(a);
  out.vector() += g.value(b).vector();
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& dy) {
    gr.accumulate(a, dy);
    gr.accumulate(b, dy);
  });
}

Var sub(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "sub");
  Tensor out = g.value(a);
  out.vector() -= g.value(b).vector();
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& dy) {
    gr.accumulate(a, dy);
    if (gr.requires_grad(b)) gr.grad_buffer(b).vector() -= dy.vector();
  });
}

Var mul(Graph& g, Var a, Var b) {
  require_same_shape(g.value(a), g.value(b), "mul");
  Tensor out = g.value(a);
  out.vector().array() *= g.value(b).vector().array();
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& dy) {
    if (gr.requires_grad(a)) {
      gr.grad_buffer(a).vector().array() += dy.vector().array() * gr.value(b).vector().array();
    }
    if (gr.requires_grad(b)) {
      gr.grad_buffer(b).vector().array() += dy.vector().array() * gr.value(a).vector().array();
    }
  });
}

Var scale(Graph& g, Var a, double s) {
  Tensor out = g.value(a);
  out.vector() *= s;
  return g.record(std::move(out), {a}, [a, s](Graph& gr, const Tensor& dy) {
    gr.grad_buffer(a).vector() += s * dy.vector();
  });
}

Var add_row_bias(Graph& g, Var a, Var bias) {
  const Tensor& x = g.value(a);
  const Tensor& b = g.value(bias);
  if (b.size() != x.cols()) {
    throw ShapeError("add_row_bias: bias " + shape_string(b.shape()) + " vs input " +
                     shape_string(x.shape()));
  }
  Tensor out = x.reshaped(matrix_shape(x));
  out.matrix().rowwise() += b.vector().transpose();
  return g.record(std::move(out), {a, bias}, [a, bias](Graph& gr, const Tensor& dy) {
    if (gr.requires_grad(a)) gr.grad_buffer(a).vector() += dy.vector();
    if (gr.requires_grad(bias)) {
      gr.grad_buffer(bias).vector() += dy.matrix().colwise().sum().transpose();
    }
  });
}

Var relu(Graph& g, Var a) {
  if (g.tracking_branches()) {
    for (double x : g.value(a).values()) g.note_branch(x > 0.0 ? 1 : 0);
  }
  return unary(
      g, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Graph& g, Var a) {
  return unary(g, a, sigmoid_scalar, [](double x) {
    const double s = sigmoid_scalar(x);
    return s * (1.0 - s);
  });
}

Var tanh(Graph& g, Var a) {
  return unary(
      g, a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

Var log1p_scaled(Graph& g, Var a, double in_scale, double out_scale) {
  return unary(
      g, a, [=](double x) { return out_scale * std::log1p(x * in_scale); },
      [=](double x) { return out_scale * in_scale / (1.0 + x * in_scale); });
}

Var squash(Graph& g, Var a, double lo, double hi) {
  const double span = hi - lo;
  return unary(
      g, a, [=](double x) { return lo + span * sigmoid_scalar(x); },
      [=](double x) {
        const double s = sigmoid_scalar(x);
        return span * s * (1.0 - s);
      });
}

Var sum(Graph& g, Var a) {
  const Tensor& x = g.value(a);
  const double total = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  return g.record(Tensor::scalar(total), {a}, [a](Graph& gr, const Tensor& dy) {
    gr.grad_buffer(a).vector().array() += dy[0];
  });
}

Var mean(Graph& g, Var a) {
  const Tensor& x = g.value(a);
  const double n = static_cast<double>(x.size());
  // Sequential sum: the utterance score must equal the plain mean of frames.
  const double total = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  return g.record(Tensor::scalar(total / n), {a}, [a, n](Graph& gr, const Tensor& dy) {
    gr.grad_buffer(a).vector().array() += dy[0] / n;
  });
}

Var softmax_rows(Graph& g, Var a) {
  const Tensor& x = g.value(a);
  Tensor out = x.reshaped(matrix_shape(x));
  auto m = out.matrix();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
  const std::size_t out_id = g.size();
  return g.record(std::move(out), {a}, [a, out_id](Graph& gr, const Tensor& dy) {
    const auto y = gr.value(Var{out_id}).matrix();
    const auto d = dy.matrix();
    auto dx = gr.grad_buffer(a).matrix();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = y.row(r).dot(d.row(r));
      dx.row(r).array() += y.row(r).array() * (d.row(r).array() - dot);
    }
  });
}

Var concat_cols(Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = g.value(parts.front()).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (g.value(p).rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_string(g.value(parts.front()).shape()) +
                       " vs " + shape_string(g.value(p).shape()));
    }
    cols += g.value(p).cols();
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& x = g.value(p);
    out.matrix().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(x.cols())) =
        x.matrix();
    offset += x.cols();
  }
  return g.record(std::move(out), parts, [parts](Graph& gr, const Tensor& dy) {
    std::size_t off = 0;
    for (Var p : parts) {
      const std::size_t c = gr.value(p).cols();
      if (gr.requires_grad(p)) {
        gr.grad_buffer(p).matrix() +=
            dy.matrix().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(c));
      }
      off += c;
    }
  });
}

}  // namespace mtq::nn
