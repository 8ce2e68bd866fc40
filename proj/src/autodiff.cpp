#include "rotla/autodiff.hpp"

namespace rotla::ad {

double round_to(Precision p, double x) {
  return p == Precision::f32 ? static_cast<double>(static_cast<float>(x)) : x;
}

void Tape::round_value(Tensor& t) const {
  if (precision_ != Precision::f32) return;
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = static_cast<double>(static_cast<float>(t.at(i)));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  round_value(value);
  Node n;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::emplace(Tensor value, const std::vector<Var>& parents, BackwardFn backward) {
  bool needs = false;
  for (Var p : parents) {
    check(p.valid() && p.id < static_cast<std::int32_t>(nodes_.size()), "op parent is not on this tape");
    needs = needs || nodes_[static_cast<std::size_t>(p.id)].needs_grad;
  }
  round_value(value);
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::val(Var v) const {
  check(v.valid() && v.id < static_cast<std::int32_t>(nodes_.size()), "invalid tape handle");
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

bool Tape::needs_grad(Var v) const {
  check(v.valid() && v.id < static_cast<std::int32_t>(nodes_.size()), "invalid tape handle");
  return nodes_[static_cast<std::size_t>(v.id)].needs_grad;
}

void Tape::add_grad(Var v, const Tensor& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.needs_grad) return;
  check(g.same_shape(n.value), "gradient shape " + g.shape_str() + " does not match value " + n.value.shape_str());
  if (n.grad.size() == 0) {
    n.grad = g;
    round_value(n.grad);
    return;
  }
  for (std::int64_t i = 0; i < g.size(); ++i)
    n.grad.at(i) = round_to(precision_, n.grad.at(i) + g.at(i));
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) return Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  check(loss.valid() && loss.id < static_cast<std::int32_t>(nodes_.size()), "invalid loss handle");
  check(val(loss).size() == 1, "backward requires a scalar loss, got shape " + val(loss).shape_str());
  for (auto& n : nodes_) n.grad = Tensor();
  add_grad(loss, Tensor::scalar(1.0));
  for (std::int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, Var{id}, n.grad);
  }
}

}  // namespace rotla::ad
