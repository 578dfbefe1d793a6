#pragma once
// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order of the graph, so backward() is a single reverse sweep.

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "labeldist/autodiff/tensor.hpp"
#include "labeldist/rng.hpp"

namespace labeldist::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
  /// Gradient after Tape::backward(); zeros if nothing flowed into this node.
  Tensor grad() const;
};

/// Propagates the gradient of node `self` into its parents.
using BackwardFn = std::function<void(Tape& tape, std::size_t self)>;

class Tape {
 public:
  explicit Tape(std::uint64_t seed = 0) : rng_(seed), seed_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Records an operator output. The node requires a gradient iff any parent does.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated (zero) on first use.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

  /// Seeds d root / d root = 1 (root must be a scalar) and sweeps in reverse.
  void backward(Var root);
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }
  Rng& rng() noexcept { return rng_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // stable addresses: values stay valid as nodes are added
  Rng rng_;
  std::uint64_t seed_;
};

}  // namespace labeldist::ad
