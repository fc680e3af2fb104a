#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sgcap/tape.hpp"
#include "sgcap/tensor.hpp"

namespace sgcap::ad {

/// A parameter together with its Adamax accumulators.
struct ParameterSlot {
  Tensor value;
  Tensor first_moment;
  Tensor inf_norm;

  friend bool operator==(const ParameterSlot&, const ParameterSlot&) = default;
};

/// Named parameters. Iteration order is lexicographic by name, which keeps
/// every sweep over the store deterministic.
class ParameterStore {
 public:
  /// Throws std::invalid_argument on a duplicate name.
  void add(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return slots_.contains(name); }
  const Tensor& value(const std::string& name) const { return slot(name).value; }
  Tensor& value(const std::string& name) { return slot(name).value; }
  const ParameterSlot& slot(const std::string& name) const;
  ParameterSlot& slot(const std::string& name);

  const std::map<std::string, ParameterSlot>& slots() const { return slots_; }
  std::map<std::string, ParameterSlot>& slots() { return slots_; }
  std::vector<std::string> names() const;
  std::size_t scalar_count() const;

  /// Number of optimizer updates applied so far.
  std::size_t step_count() const { return step_count_; }
  void set_step_count(std::size_t n) { step_count_ = n; }

  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

 private:
  std::map<std::string, ParameterSlot> slots_;
  std::size_t step_count_ = 0;
};

/// Puts store parameters on a tape lazily, one leaf per name.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParameterStore& store) : tape_(tape), store_(store) {}

  Var operator()(const std::string& name);
  Tape& tape() { return tape_; }
  const ParameterStore& store() const { return store_; }

 private:
  Tape& tape_;
  const ParameterStore& store_;
  std::map<std::string, Var> bound_;
};

using GradientMap = std::map<std::string, Tensor>;

/// Per-name gradients covering every parameter in `store`; parameters that
/// the loss never reached get zero tensors.
GradientMap complete_gradients(const ParameterStore& store, const Gradients& grads);

/// Binary checkpoint: parameter names, shapes, row-major doubles and both
/// optimizer accumulators, plus an opaque metadata string. Round-trips
/// bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     std::string_view metadata);

struct Checkpoint {
  ParameterStore params;
  std::string metadata;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sgcap::ad
