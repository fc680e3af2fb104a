#include "sgcap/scene_graph.hpp"

#include <algorithm>
#include <cmath>

namespace sgcap::sg {

SceneGraph::SceneGraph(std::size_t feature_dim, std::vector<ObjectVertex> objects,
                       std::vector<RelationVertex> relations, const GraphLimits& limits)
    : feature_dim_(feature_dim), objects_(std::move(objects)), relations_(std::move(relations)) {
  if (auto err = validate(feature_dim_, objects_, relations_, limits); !err.empty()) {
    throw GraphError("invalid scene graph: " + err);
  }
}

std::string SceneGraph::validate(std::size_t feature_dim, const std::vector<ObjectVertex>& objects,
                                 const std::vector<RelationVertex>& relations,
                                 const GraphLimits& limits) {
  if (feature_dim == 0) return "feature dimension must be positive";
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (o.feature.size() != feature_dim) {
      return "object " + std::to_string(i) + " has feature length " +
             std::to_string(o.feature.size()) + ", expected " + std::to_string(feature_dim);
    }
    if (limits.object_vocab && o.label >= *limits.object_vocab) {
      return "object " + std::to_string(i) + " label " + std::to_string(o.label) +
             " outside vocabulary";
    }
  }
  for (std::size_t j = 0; j < relations.size(); ++j) {
    const auto& r = relations[j];
    const std::string where = "relation " + std::to_string(j);
    if (r.feature.size() != feature_dim) {
      return where + " has feature length " + std::to_string(r.feature.size());
    }
    if (r.subject >= objects.size()) return where + " subject index out of range";
    if (r.object >= objects.size()) return where + " object index out of range";
    if (!limits.allow_self_loops && r.subject == r.object) return where + " is a self-loop";
    if (limits.predicate_vocab && r.predicate >= *limits.predicate_vocab) {
      return where + " predicate outside vocabulary";
    }
    if (!(r.score >= 0.0 && r.score <= 1.0)) return where + " score outside [0, 1]";
  }
  return {};
}

std::size_t SceneGraph::row_of(VertexRef v) const {
  if (v.kind == VertexKind::kObject) {
    if (v.index >= objects_.size()) throw GraphError("unknown object vertex " + std::to_string(v.index));
    return v.index;
  }
  if (v.index >= relations_.size()) {
    throw GraphError("unknown relation vertex " + std::to_string(v.index));
  }
  return objects_.size() + v.index;
}

std::vector<VertexRef> incoming_neighbors(const SceneGraph& g, VertexRef v) {
  g.row_of(v);
  std::vector<VertexRef> out;
  if (v.kind == VertexKind::kRelation) {
    out.push_back({VertexKind::kObject, g.relations()[v.index].subject});
    return out;
  }
  for (std::size_t j = 0; j < g.num_relations(); ++j) {
    if (g.relations()[j].object == v.index) out.push_back({VertexKind::kRelation, j});
  }
  return out;
}

std::vector<std::size_t> object_neighbors(const SceneGraph& g, std::size_t object) {
  g.row_of({VertexKind::kObject, object});
  std::vector<std::size_t> out;
  for (const auto& r : g.relations()) {
    if (r.object == object) out.push_back(r.subject);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<ScoredTriplet> extract_triplets(const SceneGraph& g) {
  std::vector<ScoredTriplet> out;
  out.reserve(g.num_relations());
  for (std::size_t j = 0; j < g.num_relations(); ++j) {
    const auto& r = g.relations()[j];
    out.push_back({{g.objects()[r.subject].label, r.predicate, g.objects()[r.object].label},
                   r.score,
                   j});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ScoredTriplet& a, const ScoredTriplet& b) { return a.score > b.score; });
  return out;
}

FeatureMatrix feature_matrix(const SceneGraph& g) {
  const std::size_t k = g.feature_dim();
  std::vector<double> values;
  values.reserve(g.num_vertices() * k);
  FeatureMatrix fm;
  for (const auto& o : g.objects()) {
    values.insert(values.end(), o.feature.begin(), o.feature.end());
    fm.kinds.push_back(VertexKind::kObject);
  }
  for (const auto& r : g.relations()) {
    values.insert(values.end(), r.feature.begin(), r.feature.end());
    fm.kinds.push_back(VertexKind::kRelation);
  }
  fm.features = ad::Tensor(g.num_vertices(), k, std::move(values));
  return fm;
}

nlohmann::json graph_to_json(const SceneGraph& g, const Vocabulary& objects,
                             const Vocabulary& predicates) {
  nlohmann::json doc;
  doc["objects"] = nlohmann::json::array();
  for (const auto& o : g.objects()) {
    doc["objects"].push_back({{"label", objects.token(o.label)}, {"feature", o.feature}});
  }
  doc["relations"] = nlohmann::json::array();
  for (const auto& r : g.relations()) {
    doc["relations"].push_back({{"predicate", predicates.token(r.predicate)},
                                {"subject", r.subject},
                                {"object", r.object},
                                {"score", r.score},
                                {"feature", r.feature}});
  }
  return doc;
}

SceneGraph graph_from_json(const nlohmann::json& doc, const Vocabulary& objects,
                           const Vocabulary& predicates, std::size_t feature_dim,
                           bool allow_self_loops) {
  try {
    std::vector<ObjectVertex> objs;
    for (const auto& o : doc.at("objects")) {
      objs.push_back({objects.id(o.at("label").get<std::string>()),
                      o.at("feature").get<std::vector<double>>()});
    }
    std::vector<RelationVertex> rels;
    for (const auto& r : doc.at("relations")) {
      RelationVertex rv;
      rv.predicate = predicates.id(r.at("predicate").get<std::string>());
      rv.subject = r.at("subject").get<std::size_t>();
      rv.object = r.at("object").get<std::size_t>();
      rv.score = r.value("score", 1.0);
      rv.feature = r.at("feature").get<std::vector<double>>();
      rels.push_back(std::move(rv));
    }
    GraphLimits limits;
    limits.allow_self_loops = allow_self_loops;
    return SceneGraph(feature_dim, std::move(objs), std::move(rels), limits);
  } catch (const nlohmann::json::exception& e) {
    throw GraphError(std::string("malformed graph document: ") + e.what());
  }
}

}  // namespace sgcap::sg
