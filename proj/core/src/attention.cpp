#include "sgcap/attention.hpp"

#include <stdexcept>
#include <vector>

namespace sgcap::model {

ad::Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

AttentionHead::AttentionHead(std::string prefix, AttentionDims dims)
    : prefix_(std::move(prefix)), dims_(dims) {
  if (dims_.feature_dim == 0 || dims_.query_dim == 0 || dims_.hidden_dim == 0) {
    throw std::invalid_argument("attention head " + prefix_ + ": dimensions must be positive");
  }
}

void AttentionHead::register_params(ad::ParameterStore& store, Rng& rng, double bound) const {
  store.add(feature_proj_name(), uniform_tensor(dims_.feature_dim, dims_.hidden_dim, bound, rng));
  store.add(query_proj_name(), uniform_tensor(dims_.query_dim, dims_.hidden_dim, bound, rng));
  store.add(score_name(), uniform_tensor(dims_.hidden_dim, 1, bound, rng));
}

AttentionWeights AttentionHead::bind(ad::ParamBinder& binder) const {
  return {binder(feature_proj_name()), binder(query_proj_name()), binder(score_name())};
}

ad::Var project_features(ad::Var features, const AttentionWeights& w) {
  return ad::matmul(features, w.feature_proj);
}

AttentionResult attend_projected(ad::Var features, ad::Var projected, ad::Var query,
                                 const ad::Tensor* mask, const AttentionWeights& w) {
  const std::size_t n = features.rows();
  if (n == 0) throw std::invalid_argument("attend: empty feature set");
  if (query.rows() != 1) {
    throw ad::ShapeError("attend: query must be a row vector, got " +
                         query.value().shape_string());
  }
  const ad::Var q = ad::matmul(query, w.query_proj);
  const ad::Var tiled = ad::gather_rows(q, std::vector<std::size_t>(n, 0));
  const ad::Var hidden = ad::tanh(ad::add(projected, tiled));
  const ad::Var scores = ad::reshape(ad::matmul(hidden, w.score), 1, n);
  const ad::Var weights = ad::masked_softmax_rows(scores, mask);
  return {ad::matmul(weights, features), weights};
}

AttentionResult attend(ad::Var features, ad::Var query, const ad::Tensor* mask,
                       const AttentionWeights& w) {
  if (features.rows() == 0) throw std::invalid_argument("attend: empty feature set");
  return attend_projected(features, project_features(features, w), query, mask, w);
}

}  // namespace sgcap::model
