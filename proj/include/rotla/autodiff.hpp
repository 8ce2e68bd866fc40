#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rotla/tensor.hpp"

namespace rotla::ad {

enum class Precision { f64, f32 };

/// Round to the active storage precision. f32 emulates single-precision
/// training by narrowing every materialized value; f64 is the identity.
double round_to(Precision p, double x);

/// Handle into a Tape. Cheap to copy; invalid when default-constructed.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over Tensor values. Nodes are appended in creation
/// order (ids strictly increase), so one reverse sweep visits every node
/// after all of its consumers. Single-threaded per tape; independent
/// tapes may run concurrently.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self, const Tensor& grad_out)>;

  explicit Tape(Precision precision = Precision::f64) : precision_(precision) {}

  Precision precision() const { return precision_; }

  /// Parameter or input leaf. Only leaves with requires_grad accumulate
  /// gradients.
  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Register an op result. `backward` may be empty for non-differentiable
  /// outputs; it is dropped automatically when no parent needs gradients.
  Var emplace(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  const Tensor& val(Var v) const;
  bool needs_grad(Var v) const;
  /// Accumulates into the node's gradient buffer; ignored for nodes that
  /// do not require gradients.
  void add_grad(Var v, const Tensor& g);
  /// Gradient accumulated by the last backward() (zeros if none reached v).
  Tensor grad(Var v) const;

  /// Reverse sweep from a scalar loss; gradients of all reachable
  /// grad-requiring nodes are (re)computed. errors: non-scalar loss.
  void backward(Var loss);

  std::int64_t num_nodes() const { return static_cast<std::int64_t>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched
    BackwardFn backward;
    bool needs_grad = false;
  };

  void round_value(Tensor& t) const;

  Precision precision_;
  std::vector<Node> nodes_;
};

}  // namespace rotla::ad
