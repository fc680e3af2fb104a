#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "sgcap/parameters.hpp"
#include "sgcap/tape.hpp"

namespace sgcap::model {

using Rng = std::mt19937_64;

/// Uniform(-bound, bound) initialisation.
ad::Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng);

struct AttentionDims {
  std::size_t feature_dim = 0;
  std::size_t query_dim = 0;
  std::size_t hidden_dim = 0;
};

/// Tape-bound weights of one additive attention head (no biases).
struct AttentionWeights {
  ad::Var feature_proj;  // D_f x H
  ad::Var query_proj;    // D_q x H
  ad::Var score;         // H x 1
};

/// Names and shapes of one additive attention head inside a ParameterStore.
class AttentionHead {
 public:
  AttentionHead() = default;
  AttentionHead(std::string prefix, AttentionDims dims);

  const AttentionDims& dims() const { return dims_; }
  const std::string& prefix() const { return prefix_; }

  void register_params(ad::ParameterStore& store, Rng& rng, double bound) const;
  AttentionWeights bind(ad::ParamBinder& binder) const;

  std::string feature_proj_name() const { return prefix_ + ".feature_proj"; }
  std::string query_proj_name() const { return prefix_ + ".query_proj"; }
  std::string score_name() const { return prefix_ + ".score"; }

 private:
  std::string prefix_;
  AttentionDims dims_;
};

struct AttentionResult {
  ad::Var context;  // 1 x D_f
  ad::Var weights;  // 1 x N
};

/// score_i = v . tanh(W_f^T f_i + W_q^T q); weights = masked softmax over
/// rows; context = sum_i weights_i f_i. `mask` is 1 x N with nonzero = live.
AttentionResult attend(ad::Var features, ad::Var query, const ad::Tensor* mask,
                       const AttentionWeights& w);

/// features * W_f, reusable across decoding steps with fixed features.
ad::Var project_features(ad::Var features, const AttentionWeights& w);

/// attend() with `projected` = project_features(features, w).
AttentionResult attend_projected(ad::Var features, ad::Var projected, ad::Var query,
                                 const ad::Tensor* mask, const AttentionWeights& w);

}  // namespace sgcap::model
