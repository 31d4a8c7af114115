#pragma once

#include "mtq/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

namespace mtq::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

// Named parameters in insertion order. References returned by add/get stay
// valid for the lifetime of the store.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& add(const std::string& name, Tensor init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;
  std::vector<std::string> names() const;

  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Handle to a node on the tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Graph;
using BackwardFn = std::function<void(Graph& graph, const Tensor& out_grad)>;

// Tape for one forward pass. backward() replays it in reverse, accumulates
// parameter gradients into the bound ParamStore entries and clears the tape.
class Graph {
 public:
  // With gradients disabled nothing is recorded for backward; used for
  // inference.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }

  Var input(Tensor value);
  Var param(Parameter& p);

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Adds delta into v's gradient buffer if v requires a gradient.
  void accumulate(Var v, const Tensor& delta);
  // Mutable gradient buffer (allocated on first use); only call when
  // requires_grad(v).
  Tensor& grad_buffer(Var v);

  void backward(Var loss);
  std::size_t size() const { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    branch_signature_ = kSignatureSeed;
  }

  // Optional digest of which side of every kink (ReLU input sign, loss
  // branch) the forward pass took. Finite-difference checks use it to tell a
  // step that crossed a kink from a genuine gradient mismatch.
  void set_branch_tracking(bool enabled) { track_branches_ = enabled; }
  bool tracking_branches() const { return track_branches_; }
  void note_branch(std::uint64_t side) {
    branch_signature_ = (branch_signature_ ^ side) * 0x100000001b3ULL;
  }
  std::uint64_t branch_signature() const { return branch_signature_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  // deque: references returned by value() survive later records.
  static constexpr std::uint64_t kSignatureSeed = 0xcbf29ce484222325ULL;

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
  bool track_branches_ = false;
  std::uint64_t branch_signature_ = kSignatureSeed;
};

// --- elementwise and matrix ops -------------------------------------------

Var matmul(Graph& g, Var a, Var b);
Var transpose(Graph& g, Var a);
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double s);
Var add_row_bias(Graph& g, Var a, Var bias);
Var relu(Graph& g, Var a);
Var sigmoid(Graph& g, Var a);
Var tanh(Graph& g, Var a);
// out_scale * log(1 + a * in_scale); requires a >= 0.
Var log1p_scaled(Graph& g, Var a, double in_scale, double out_scale);
// lo + (hi - lo) * sigmoid(a)
Var squash(Graph& g, Var a, double lo, double hi);
Var sum(Graph& g, Var a);
Var mean(Graph& g, Var a);
Var softmax_rows(Graph& g, Var a);
Var concat_cols(Graph& g, const std::vector<Var>& parts);

}  // namespace mtq::nn
