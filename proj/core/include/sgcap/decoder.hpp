#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgcap/attention.hpp"
#include "sgcap/graph_attention.hpp"
#include "sgcap/parameters.hpp"
#include "sgcap/scene_graph.hpp"

namespace sgcap::model {

/// Reserved caption-vocabulary ids.
namespace token {
inline constexpr std::size_t kStart = 0;
inline constexpr std::size_t kEnd = 1;
inline constexpr std::size_t kPad = 2;
inline constexpr std::size_t kUnk = 3;
inline constexpr std::size_t kReservedCount = 4;
}  // namespace token

enum class Variant { kButd, kFlat, kHierSg, kHierIm, kHierSgGat, kHierSgCgat };

inline constexpr std::array<Variant, 6> kAllVariants{
    Variant::kButd,   Variant::kFlat,      Variant::kHierSg,
    Variant::kHierIm, Variant::kHierSgGat, Variant::kHierSgCgat};

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);
/// Comma-separated list of accepted names, for error messages.
std::string valid_variant_names();
bool uses_graph(Variant v);

struct ModelConfig {
  Variant variant = Variant::kButd;
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 64;
  /// Additive-attention scorer width; 0 means hidden_dim.
  std::size_t attention_dim = 0;
  std::size_t image_dim = 32;
  std::size_t graph_dim = 32;
  double dropout = 0.5;

  std::size_t attention_width() const { return attention_dim == 0 ? hidden_dim : attention_dim; }
  /// Throws ConfigError.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct DecoderState {
  ad::Tensor h1, c1, h2, c2;
};

struct StateVars {
  ad::Var h1, c1, h2, c2;
};

/// Externally sampled inverted-dropout masks for one decoding step.
struct StepDropout {
  ad::Tensor embedding;  // 1 x E
  ad::Tensor hidden;     // 1 x H, applied to h2 before the vocabulary projection
};

/// Inputs describing one image. `graph` must be null for BUTD and non-null
/// for every other variant.
struct ImageInput {
  const ad::Tensor* features = nullptr;  // n x d, padded rows allowed
  std::span<const double> mask;          // length n, nonzero = real object; empty = all
  const sg::SceneGraph* graph = nullptr;
};

struct LstmWeights {
  std::array<ad::Var, 4> w;  // input, forget, output, candidate: (in + H) x H
  std::array<ad::Var, 4> b;  // 1 x H
};

/// Per-image values on one tape, reused by every decoding step. Holds every
/// weight the step function touches, so a tape may be truncated back to the
/// end of encode() between steps.
struct EncodedImage {
  ad::Tape* tape = nullptr;
  ad::Var embedding;
  LstmWeights lstm1, lstm2;
  AttentionWeights att_x, att_y;
  GraphAttentionWeights graph_weights;
  ad::Var vocab_proj;

  ad::Var image;
  ad::Tensor image_mask;  // 1 x n
  ad::Var image_mean;
  ad::Var image_proj;

  ad::Var graph_features;  // raw Y, or GAT(Y) for the GAT variant
  ad::Var graph_mean;
  ad::Var graph_proj;      // unused for C-GAT, whose Y changes per step
  GraphLayout layout;
  CgatInputs cgat;  // C-GAT only
};

struct StepOutput {
  StateVars state;
  ad::Var logits;          // 1 x V
  ad::Var graph_features;  // graph rows consumed at this step (invalid for BUTD)
};

/// Two-layer attention LSTM caption decoder in one of six input-fusion
/// variants. Owns its parameters.
class CaptionModel {
 public:
  CaptionModel(ModelConfig config, std::uint64_t init_seed);
  /// Adopts existing parameters; names and shapes must match the config.
  CaptionModel(ModelConfig config, ad::ParameterStore params);

  const ModelConfig& config() const { return config_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  /// Names of parameters for the configured variant, with shapes.
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> parameter_spec() const;

  EncodedImage encode(ad::ParamBinder& binder, const ImageInput& input) const;
  StateVars initial_state(ad::Tape& tape) const;
  StepOutput step(const EncodedImage& enc, std::size_t prev_word, const StateVars& state,
                  const StepDropout* dropout) const;

  /// Mean per-token cross-entropy under teacher forcing. `caption` includes
  /// the start and end tokens; `dropout` is empty or has one entry per
  /// predicted token.
  ad::Var sequence_loss(ad::ParamBinder& binder, std::span<const std::size_t> caption,
                        const ImageInput& input, std::span<const StepDropout> dropout) const;

  /// Head layout, exposed for tests that tie parameters across variants.
  const AttentionHead& image_head() const { return att_x_; }
  const AttentionHead& graph_head() const { return att_y_; }
  const GraphAttentionLayer& graph_layer() const { return graph_layer_; }
  std::size_t lstm1_input_dim() const;
  std::size_t lstm2_input_dim() const;

 private:
  void build_heads();
  void init_params(std::uint64_t seed);

  ModelConfig config_;
  ad::ParameterStore params_;
  AttentionHead att_x_;
  AttentionHead att_y_;
  GraphAttentionLayer graph_layer_;
};

}  // namespace sgcap::model
