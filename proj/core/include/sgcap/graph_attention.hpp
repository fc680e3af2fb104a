#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sgcap/attention.hpp"
#include "sgcap/scene_graph.hpp"

namespace sgcap::model {

/// Tape-bound weights for one vertex kind.
struct VertexUpdateWeights {
  AttentionWeights attention;
  ad::Var output_proj;  // 2k x k
};

struct GraphAttentionWeights {
  VertexUpdateWeights object;
  VertexUpdateWeights relation;
};

/// Parameters of a single-layer graph attention update over both vertex
/// kinds. The query size is k for self-queried GAT and the decoder hidden
/// size for the conditional layer.
class GraphAttentionLayer {
 public:
  GraphAttentionLayer() = default;
  GraphAttentionLayer(std::string prefix, std::size_t feature_dim, std::size_t query_dim,
                      std::size_t hidden_dim);

  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t query_dim() const { return object_head_.dims().query_dim; }

  void register_params(ad::ParameterStore& store, Rng& rng, double bound) const;
  GraphAttentionWeights bind(ad::ParamBinder& binder) const;

  std::string object_output_name() const { return prefix_ + ".object.out"; }
  std::string relation_output_name() const { return prefix_ + ".relation.out"; }
  const AttentionHead& object_head() const { return object_head_; }
  const AttentionHead& relation_head() const { return relation_head_; }

 private:
  std::string prefix_;
  std::size_t feature_dim_ = 0;
  AttentionHead object_head_;
  AttentionHead relation_head_;
};

/// Feature-matrix rows a vertex attends over, self first. Objects: self,
/// incoming relations, then subjects of those relations. Relations: self,
/// subject, object.
std::vector<std::size_t> neighborhood_rows(const sg::SceneGraph& g, sg::VertexRef v);

/// Padded neighbourhood tables for one vertex kind, precomputed per graph.
struct NeighborhoodBlock {
  std::vector<std::size_t> rows;     // updated rows, ascending
  std::size_t width = 0;             // padded neighbourhood size
  std::vector<std::size_t> members;  // rows.size() * width feature rows
  std::vector<std::size_t> owners;   // owning row for each member slot
  ad::Tensor mask;                   // rows.size() x width
  ad::Tensor segment;                // rows.size() x (rows.size() * width) block ones
};

struct GraphLayout {
  std::size_t vertices = 0;
  std::size_t feature_dim = 0;
  NeighborhoodBlock objects;
  NeighborhoodBlock relations;
};

GraphLayout build_layout(const sg::SceneGraph& g);

/// Query-independent part of one vertex kind's update.
struct BlockInputs {
  ad::Var members;    // gathered neighbourhood rows
  ad::Var projected;  // members * W_f
  ad::Var own;        // rows being updated
};

struct CgatInputs {
  ad::Var features;
  BlockInputs objects;
  BlockInputs relations;
};

/// Gathers and projects neighbourhood rows once, for reuse across queries.
CgatInputs prepare_cgat(const GraphLayout& layout, ad::Var features,
                        const GraphAttentionWeights& w);

/// Standard GAT: each vertex queries with its own feature row. Evaluated
/// vertex by vertex through attend().
ad::Var gat_layer(const sg::SceneGraph& g, ad::Var features, const GraphAttentionWeights& w);

/// Conditional GAT: every vertex's attention is scored against the external
/// query `query` (1 x D_q). Synchronous: all rows read the input matrix.
ad::Var cgat_layer(const sg::SceneGraph& g, ad::Var features, ad::Var query,
                   const GraphAttentionWeights& w);
ad::Var cgat_layer(const GraphLayout& layout, ad::Var features, ad::Var query,
                   const GraphAttentionWeights& w);
ad::Var cgat_layer(const GraphLayout& layout, const CgatInputs& inputs, ad::Var query,
                   const GraphAttentionWeights& w);

/// Conditional GAT with one query row per vertex (V x D_q).
ad::Var cgat_layer_per_vertex(const GraphLayout& layout, ad::Var features, ad::Var queries,
                              const GraphAttentionWeights& w);

}  // namespace sgcap::model
