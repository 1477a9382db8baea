#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "infocal/errors.hpp"
#include "infocal/num/tensor.hpp"

namespace infocal::num {

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid as long as the
/// tape is alive.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  T item() const { return value().item(); }
};

template <typename T>
using Gradients = std::map<std::string, Tensor<T>>;

/// Reverse-mode tape. Nodes are appended in evaluation order, so the record
/// vector is already topologically sorted and `backward` is a single reverse
/// sweep. Single-owner and single-threaded.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Named input. Only leaves with `requires_grad` appear in the gradient map.
  Var<T> leaf(Tensor<T> value, std::string name, bool requires_grad) {
    check_finite(value, name.empty() ? "leaf" : name);
    Node n;
    n.op = "leaf";
    n.name = std::move(name);
    n.value = std::move(value);
    n.needs_grad = requires_grad;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), "", false); }

  /// Appends the result of a primitive. `backward` is dropped when no input
  /// needs a gradient.
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward) {
    return record(op, std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
  }

  Var<T> record(const char* op, Tensor<T> value, const std::vector<Var<T>>& inputs,
                BackwardFn backward) {
    check_finite(value, op);
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
      expects(in.tape == this, "primitive inputs must live on the same tape");
      n.inputs.push_back(in.id);
      n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var<T> v) const { return nodes_[v.id].needs_grad; }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient accumulator of node `id`, zero-initialised on first access.
  Tensor<T>& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (!n.grad) n.grad.emplace(n.value.shape(), T{0});
    return *n.grad;
  }
  bool has_grad(std::size_t id) const { return nodes_[id].grad.has_value(); }

  /// Exact reverse-mode gradients of a [1,1] loss with respect to every named
  /// leaf that requires a gradient. Unreached leaves get zeros.
  Gradients<T> backward(Var<T> loss) {
    expects(loss.tape == this, "loss lives on a different tape");
    const auto& lv = nodes_.at(loss.id).value;
    if (lv.size() != 1) throw ContractViolation("backward needs a scalar loss, got shape " + shape_string(lv.shape()));
    for (auto& n : nodes_) n.grad.reset();
    grad(loss.id).fill(T{1});
    for (std::size_t k = loss.id + 1; k-- > 0;) {
      auto& n = nodes_[k];
      if (!n.backward || !n.grad) continue;
      n.backward(*this, k);
      for (auto in : nodes_[k].inputs) {
        if (nodes_[in].grad && !nodes_[in].grad->all_finite())
          throw NumericFault(nodes_[k].op, "non-finite gradient");
      }
    }
    Gradients<T> out;
    for (auto& n : nodes_) {
      if (!n.is_leaf || !n.needs_grad || n.name.empty()) continue;
      auto& slot = out[n.name];
      if (n.grad) {
        if (slot.empty()) slot = *n.grad;
        else
          for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += (*n.grad)[i];
      } else if (slot.empty()) {
        slot = Tensor<T>(n.value.shape(), T{0});
      }
    }
    return out;
  }

 private:
  struct Node {
    const char* op = "";
    std::string name;
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    bool is_leaf = false;
  };

  static void check_finite(const Tensor<T>& t, const std::string& where) {
    if (!t.all_finite()) throw NumericFault(where, "non-finite value");
  }

  std::vector<Node> nodes_;
};

}  // namespace infocal::num
