#pragma once

#include <random>
#include <vector>

#include "sgcap/attention.hpp"
#include "sgcap/scene_graph.hpp"
#include "sgcap/tensor.hpp"

namespace testutil {

inline sgcap::ad::Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng,
                                       double bound = 1.0) {
  return sgcap::model::uniform_tensor(r, c, bound, rng);
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

struct GraphSpec {
  std::size_t max_objects = 6;
  std::size_t max_relations = 8;
  std::size_t feature_dim = 4;
  std::size_t object_vocab = 20;
  std::size_t predicate_vocab = 10;
};

/// Random valid graph with at least one object; relations may repeat
/// triplets. Scores are uniform in [0, 1].
inline sgcap::sg::SceneGraph random_graph(std::mt19937_64& rng, const GraphSpec& spec = {}) {
  using namespace sgcap::sg;
  std::uniform_int_distribution<std::size_t> n_obj(1, spec.max_objects);
  const std::size_t o = n_obj(rng);
  std::vector<ObjectVertex> objects;
  for (std::size_t i = 0; i < o; ++i) {
    objects.push_back({std::uniform_int_distribution<std::size_t>(0, spec.object_vocab - 1)(rng),
                       random_vector(spec.feature_dim, rng)});
  }
  std::vector<RelationVertex> relations;
  if (o >= 2) {
    const std::size_t r =
        std::uniform_int_distribution<std::size_t>(0, spec.max_relations)(rng);
    std::uniform_int_distribution<std::size_t> pick(0, o - 1);
    std::uniform_real_distribution<double> score(0.0, 1.0);
    for (std::size_t j = 0; j < r; ++j) {
      std::size_t s = pick(rng), t = pick(rng);
      while (t == s) t = pick(rng);
      relations.push_back(
          {std::uniform_int_distribution<std::size_t>(0, spec.predicate_vocab - 1)(rng),
           random_vector(spec.feature_dim, rng), s, t, score(rng)});
    }
  }
  return SceneGraph(spec.feature_dim, std::move(objects), std::move(relations));
}

}  // namespace testutil
