// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors of doubles with reverse-mode gradient tracking.
//
// A Tensor is a cheap handle to a shared node. Copying a Tensor shares the
// node, which is how parameters are shared between modules: two handles to
// the same node receive the same gradient and see the same updates.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace triad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  // Empty until a gradient reaches this node.
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Writable storage. Only meant for leaves (parameters, inputs); mutating an
  // interior node invalidates any graph that recorded it.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t flat_index) const { return impl_->data.at(flat_index); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Drops the gradient buffer; has_grad() becomes false.
  void zero_grad() { impl_->grad.clear(); }

  // Same values, no history.
  Tensor detach() const;
  Tensor clone() const;

  bool same_node(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<detail::Node>& node() const { return impl_; }

  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> impl_;
};

/// Topologically ordered view of the graph that produced a scalar loss.
///
/// Nodes are listed parents-first; every node that requires a gradient and is
/// reachable from the loss appears exactly once.
class ComputationTape {
 public:
  explicit ComputationTape(const Tensor& loss);

  const std::vector<detail::Node*>& nodes() const { return order_; }

  // Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
  // gradient. Interior gradients are reset first, so calling this twice adds
  // the leaf gradients twice.
  void backward();

 private:
  Tensor loss_;
  std::vector<detail::Node*> order_;
};

void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording for its lifetime (evaluation, generation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Builds an op result. Parents and the backward rule are only recorded when
// grad mode is on and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents,
                   std::function<void(Node&)> backward, const char* op);

}  // namespace detail

}  // namespace triad
