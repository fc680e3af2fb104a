#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgcap/tensor.hpp"
#include "sgcap/vocabulary.hpp"

namespace sgcap::sg {

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ObjectVertex {
  std::size_t label = 0;
  std::vector<double> feature;

  friend bool operator==(const ObjectVertex&, const ObjectVertex&) = default;
};

/// A relation vertex owns both of its edges: one incoming from `subject`,
/// one outgoing to `object`.
struct RelationVertex {
  std::size_t predicate = 0;
  std::vector<double> feature;
  std::size_t subject = 0;
  std::size_t object = 0;
  /// Ranking confidence in [0, 1]; gold graphs use 1.
  double score = 1.0;

  friend bool operator==(const RelationVertex&, const RelationVertex&) = default;
};

struct Triplet {
  std::size_t subject = 0;
  std::size_t predicate = 0;
  std::size_t object = 0;

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct ScoredTriplet {
  Triplet triplet;
  double score = 0.0;
  std::size_t relation = 0;
};

enum class VertexKind { kObject, kRelation };

struct VertexRef {
  VertexKind kind = VertexKind::kObject;
  std::size_t index = 0;

  friend auto operator<=>(const VertexRef&, const VertexRef&) = default;
};

struct GraphLimits {
  std::optional<std::size_t> object_vocab;
  std::optional<std::size_t> predicate_vocab;
  bool allow_self_loops = false;
};

/// Bipartite object/relation graph. Immutable once constructed; the
/// constructor rejects anything `validate` rejects.
class SceneGraph {
 public:
  SceneGraph() = default;
  SceneGraph(std::size_t feature_dim, std::vector<ObjectVertex> objects,
             std::vector<RelationVertex> relations, const GraphLimits& limits = {});

  /// Empty string when valid, otherwise the first violated invariant.
  static std::string validate(std::size_t feature_dim, const std::vector<ObjectVertex>& objects,
                              const std::vector<RelationVertex>& relations,
                              const GraphLimits& limits = {});

  std::size_t feature_dim() const { return feature_dim_; }
  const std::vector<ObjectVertex>& objects() const { return objects_; }
  const std::vector<RelationVertex>& relations() const { return relations_; }
  std::size_t num_objects() const { return objects_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  std::size_t num_vertices() const { return objects_.size() + relations_.size(); }

  /// Row of the vertex in feature_matrix: objects first, then relations.
  std::size_t row_of(VertexRef v) const;

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;

 private:
  std::size_t feature_dim_ = 0;
  std::vector<ObjectVertex> objects_;
  std::vector<RelationVertex> relations_;
};

/// Object vertex: relations whose object is it. Relation vertex: its subject.
std::vector<VertexRef> incoming_neighbors(const SceneGraph& g, VertexRef v);

/// Subjects of every relation pointing at `object`, ascending and unique.
std::vector<std::size_t> object_neighbors(const SceneGraph& g, std::size_t object);

/// One entry per relation, by score descending; ties keep relation order.
std::vector<ScoredTriplet> extract_triplets(const SceneGraph& g);

struct FeatureMatrix {
  ad::Tensor features;  // (o + r) x k
  std::vector<VertexKind> kinds;
};

FeatureMatrix feature_matrix(const SceneGraph& g);

/// JSON graph document, labels resolved through the two vocabularies.
nlohmann::json graph_to_json(const SceneGraph& g, const Vocabulary& objects,
                             const Vocabulary& predicates);
SceneGraph graph_from_json(const nlohmann::json& doc, const Vocabulary& objects,
                           const Vocabulary& predicates, std::size_t feature_dim,
                           bool allow_self_loops = false);

}  // namespace sgcap::sg
