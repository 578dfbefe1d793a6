#include "labeldist/autodiff/tape.hpp"

#include "labeldist/errors.hpp"

namespace labeldist::ad {

const Tensor& Var::value() const { return tape->value(id); }

Tensor Var::grad() const {
  if (tape->has_grad(id)) return tape->grad(id);
  return Tensor(value().shape(), 0.0);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool needs = false;
  for (std::size_t p : parents) needs = needs || nodes_[p].requires_grad;
  Node node{std::move(value), {}, needs, std::move(parents), {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward: variable from another tape");
  if (nodes_[root.id].value.size() != 1)
    throw ShapeError("backward: root must be a scalar, got " +
                     shape_string(nodes_[root.id].value.shape()));
  grad(root.id)[0] += 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad = Tensor();
}

}  // namespace labeldist::ad
