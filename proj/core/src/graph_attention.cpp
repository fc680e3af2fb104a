#include "sgcap/graph_attention.hpp"

#include <algorithm>
#include <stdexcept>

namespace sgcap::model {

GraphAttentionLayer::GraphAttentionLayer(std::string prefix, std::size_t feature_dim,
                                         std::size_t query_dim, std::size_t hidden_dim)
    : prefix_(std::move(prefix)),
      feature_dim_(feature_dim),
      object_head_(prefix_ + ".object.att", {feature_dim, query_dim, hidden_dim}),
      relation_head_(prefix_ + ".relation.att", {feature_dim, query_dim, hidden_dim}) {}

void GraphAttentionLayer::register_params(ad::ParameterStore& store, Rng& rng,
                                          double bound) const {
  object_head_.register_params(store, rng, bound);
  store.add(object_output_name(), uniform_tensor(2 * feature_dim_, feature_dim_, bound, rng));
  relation_head_.register_params(store, rng, bound);
  store.add(relation_output_name(), uniform_tensor(2 * feature_dim_, feature_dim_, bound, rng));
}

GraphAttentionWeights GraphAttentionLayer::bind(ad::ParamBinder& binder) const {
  return {{object_head_.bind(binder), binder(object_output_name())},
          {relation_head_.bind(binder), binder(relation_output_name())}};
}

std::vector<std::size_t> neighborhood_rows(const sg::SceneGraph& g, sg::VertexRef v) {
  const std::size_t self = g.row_of(v);
  std::vector<std::size_t> rows{self};
  auto push_unique = [&](std::size_t r) {
    if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
  };
  if (v.kind == sg::VertexKind::kObject) {
    for (const auto& in : sg::incoming_neighbors(g, v)) push_unique(g.row_of(in));
    for (std::size_t o : sg::object_neighbors(g, v.index)) push_unique(o);
  } else {
    const auto& r = g.relations()[v.index];
    push_unique(r.subject);
    push_unique(r.object);
  }
  return rows;
}

namespace {

NeighborhoodBlock make_block(const sg::SceneGraph& g, sg::VertexKind kind, std::size_t count) {
  NeighborhoodBlock b;
  std::vector<std::vector<std::size_t>> hoods;
  for (std::size_t i = 0; i < count; ++i) {
    const sg::VertexRef v{kind, i};
    b.rows.push_back(g.row_of(v));
    hoods.push_back(neighborhood_rows(g, v));
    b.width = std::max(b.width, hoods.back().size());
  }
  const std::size_t n = b.rows.size();
  b.mask = ad::Tensor(n, b.width);
  b.segment = ad::Tensor(n, n * b.width);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < b.width; ++s) {
      const bool live = s < hoods[i].size();
      b.members.push_back(live ? hoods[i][s] : b.rows[i]);
      b.owners.push_back(b.rows[i]);
      b.mask(i, s) = live ? 1.0 : 0.0;
      b.segment(i, i * b.width + s) = 1.0;
    }
  }
  return b;
}

ad::Var update_block(const NeighborhoodBlock& b, const BlockInputs& in, ad::Var query_proj,
                     const std::vector<std::size_t>& query_rows, const VertexUpdateWeights& w) {
  ad::Tape* tape = in.members.tape();
  const std::size_t n = b.rows.size();
  const std::size_t k = in.members.cols();

  const ad::Var queries = ad::gather_rows(query_proj, query_rows);
  const ad::Var hidden = ad::tanh(ad::add(in.projected, queries));
  const ad::Var scores = ad::reshape(ad::matmul(hidden, w.attention.score), n, b.width);
  const ad::Var weights = ad::masked_softmax_rows(scores, &b.mask);

  const ad::Var weight_col = ad::reshape(weights, n * b.width, 1);
  const ad::Var spread = ad::matmul(weight_col, tape->constant(ad::Tensor(1, k, 1.0)));
  const ad::Var weighted = ad::mul(spread, in.members);
  const ad::Var context = ad::matmul(tape->constant(b.segment), weighted);

  return ad::tanh(ad::matmul(ad::concat_cols({in.own, context}), w.output_proj));
}

BlockInputs prepare_block(const NeighborhoodBlock& b, ad::Var features,
                          const VertexUpdateWeights& w) {
  BlockInputs in;
  if (b.rows.empty()) return in;
  in.members = ad::gather_rows(features, b.members);
  in.projected = ad::matmul(in.members, w.attention.feature_proj);
  in.own = ad::gather_rows(features, b.rows);
  return in;
}

void check_rows(const GraphLayout& layout, ad::Var features) {
  if (features.rows() != layout.vertices || features.cols() != layout.feature_dim) {
    throw ad::ShapeError("graph attention: features " + features.value().shape_string() +
                         " do not match graph with " + std::to_string(layout.vertices) +
                         " vertices of dimension " + std::to_string(layout.feature_dim));
  }
}

ad::Var combine(ad::Var features, const std::vector<ad::Var>& parts) {
  if (parts.empty()) return features;
  if (parts.size() == 1) return parts.front();
  return ad::concat_rows(parts);
}

}  // namespace

GraphLayout build_layout(const sg::SceneGraph& g) {
  GraphLayout layout;
  layout.vertices = g.num_vertices();
  layout.feature_dim = g.feature_dim();
  layout.objects = make_block(g, sg::VertexKind::kObject, g.num_objects());
  layout.relations = make_block(g, sg::VertexKind::kRelation, g.num_relations());
  return layout;
}

CgatInputs prepare_cgat(const GraphLayout& layout, ad::Var features,
                        const GraphAttentionWeights& w) {
  check_rows(layout, features);
  return {features, prepare_block(layout.objects, features, w.object),
          prepare_block(layout.relations, features, w.relation)};
}

ad::Var cgat_layer_per_vertex(const GraphLayout& layout, ad::Var features, ad::Var queries,
                              const GraphAttentionWeights& w) {
  const CgatInputs in = prepare_cgat(layout, features, w);
  if (queries.rows() != layout.vertices) {
    throw ad::ShapeError("cgat_layer_per_vertex: " + std::to_string(queries.rows()) +
                         " queries for " + std::to_string(layout.vertices) + " vertices");
  }
  std::vector<ad::Var> parts;
  if (!layout.objects.rows.empty()) {
    const ad::Var qp = ad::matmul(queries, w.object.attention.query_proj);
    parts.push_back(update_block(layout.objects, in.objects, qp, layout.objects.owners, w.object));
  }
  if (!layout.relations.rows.empty()) {
    const ad::Var qp = ad::matmul(queries, w.relation.attention.query_proj);
    parts.push_back(
        update_block(layout.relations, in.relations, qp, layout.relations.owners, w.relation));
  }
  return combine(features, parts);
}

ad::Var cgat_layer(const GraphLayout& layout, const CgatInputs& in, ad::Var query,
                   const GraphAttentionWeights& w) {
  if (query.rows() != 1) {
    throw ad::ShapeError("cgat_layer: query must be a row vector, got " +
                         query.value().shape_string());
  }
  std::vector<ad::Var> parts;
  if (!layout.objects.rows.empty()) {
    const ad::Var qp = ad::matmul(query, w.object.attention.query_proj);
    const std::vector<std::size_t> zeros(layout.objects.members.size(), 0);
    parts.push_back(update_block(layout.objects, in.objects, qp, zeros, w.object));
  }
  if (!layout.relations.rows.empty()) {
    const ad::Var qp = ad::matmul(query, w.relation.attention.query_proj);
    const std::vector<std::size_t> zeros(layout.relations.members.size(), 0);
    parts.push_back(update_block(layout.relations, in.relations, qp, zeros, w.relation));
  }
  return combine(in.features, parts);
}

ad::Var cgat_layer(const GraphLayout& layout, ad::Var features, ad::Var query,
                   const GraphAttentionWeights& w) {
  return cgat_layer(layout, prepare_cgat(layout, features, w), query, w);
}

ad::Var cgat_layer(const sg::SceneGraph& g, ad::Var features, ad::Var query,
                   const GraphAttentionWeights& w) {
  return cgat_layer(build_layout(g), features, query, w);
}

ad::Var gat_layer(const sg::SceneGraph& g, ad::Var features, const GraphAttentionWeights& w) {
  if (features.rows() != g.num_vertices() || features.cols() != g.feature_dim()) {
    throw ad::ShapeError("gat_layer: features " + features.value().shape_string() +
                         " do not match graph with " + std::to_string(g.num_vertices()) +
                         " vertices");
  }
  if (g.num_vertices() == 0) return features;
  std::vector<ad::Var> rows;
  rows.reserve(g.num_vertices());
  auto update = [&](sg::VertexRef v, const VertexUpdateWeights& kw) {
    const std::size_t self = g.row_of(v);
    const ad::Var hood = ad::gather_rows(features, neighborhood_rows(g, v));
    const ad::Var own = ad::gather_rows(features, {self});
    const AttentionResult att = attend(hood, own, nullptr, kw.attention);
    rows.push_back(ad::tanh(ad::matmul(ad::concat_cols({own, att.context}), kw.output_proj)));
  };
  for (std::size_t i = 0; i < g.num_objects(); ++i) update({sg::VertexKind::kObject, i}, w.object);
  for (std::size_t j = 0; j < g.num_relations(); ++j) {
    update({sg::VertexKind::kRelation, j}, w.relation);
  }
  return rows.size() == 1 ? rows.front() : ad::concat_rows(rows);
}

}  // namespace sgcap::model
