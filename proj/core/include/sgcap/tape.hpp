#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgcap/tensor.hpp"

namespace sgcap::ad {

/// Primitive operations recorded on a Tape. Leaves are parameters and constants.
enum class OpKind {
  kParameter,
  kConstant,
  kMatmul,
  kAdd,
  kConcatCols,
  kConcatRows,
  kReshape,
  kTanh,
  kSigmoid,
  kMul,
  kScale,
  kSum,
  kMeanRows,
  kGather,
  kDropout,
  kMaskedSoftmax,
  kCrossEntropy,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> parse_op_name(std::string_view name);

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// holds the node (see Tape::truncate).
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Result of a backward pass: adjoints for every node that requires a
/// gradient, plus a per-parameter-name view.
class Gradients {
 public:
  /// Gradient of a recorded value; zeros when the node was not reached.
  Tensor of(Var v) const;
  /// One entry per parameter leaf on the tape; zeros when unreached.
  const std::map<std::string, Tensor>& by_name() const { return by_name_; }

 private:
  friend class Tape;
  std::vector<std::vector<double>> node_grads_;
  std::vector<std::pair<std::size_t, std::size_t>> shapes_;
  std::map<std::string, Tensor> by_name_;
};

/// Ordered record of primitive applications for reverse-mode differentiation.
/// Confined to one thread; distinct tapes are independent.
class Tape {
 public:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<std::size_t> inputs;
    Tensor value;
    const Tensor* external = nullptr;  // leaves that borrow storage
    bool requires_grad = false;
    std::string name;                  // parameter name
    std::vector<std::size_t> indices;  // gather rows / cross-entropy targets
    Tensor aux;                        // dropout mask / softmax mask
    bool has_aux = false;
    double scalar = 0.0;

    const Tensor& val() const { return external != nullptr ? *external : value; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf. Borrows `value`, which must outlive the tape's use.
  Var parameter(std::string name, const Tensor& value);
  /// Non-differentiable leaf owning its value.
  Var constant(Tensor value);
  /// Non-differentiable leaf borrowing `value`.
  Var constant_ref(const Tensor& value);

  const Tensor& value(Var v) const { return nodes_.at(v.id()).val(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Drops every node recorded at or after position `size`.
  void truncate(std::size_t size);

  /// Reverse sweep from a scalar loss.
  Gradients backward(Var loss) const;

  /// Test hook: negates the adjoint of every node of `kind` during backward.
  void inject_adjoint_fault(std::optional<OpKind> kind) { fault_ = kind; }

  Var record(Node node);

 private:
  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::optional<OpKind> fault_;
};

// Primitive set. All inputs must live on the same tape. Shapes are never
// broadcast; vectors are 1 x n rows.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
Var sum(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// Mean over rows whose mask entry is nonzero (all rows when mask is empty).
Var mean_rows(Var a, std::span<const double> row_mask = {});
/// Row gather; the adjoint scatter-adds, so repeated indices accumulate.
Var gather_rows(Var table, std::vector<std::size_t> indices);
/// x * mask for an externally sampled mask with entries in {0, 1/keep}.
Var dropout(Var x, const Tensor& mask);
/// Row-wise softmax; entries with mask 0 get exactly 0. A row with no live
/// entry is an error.
Var masked_softmax_rows(Var x, const Tensor* mask = nullptr);
/// Mean over rows of -log softmax(logits_r)[target_r].
Var cross_entropy(Var logits, std::vector<std::size_t> targets);

}  // namespace sgcap::ad
