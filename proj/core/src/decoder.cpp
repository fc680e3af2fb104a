#include "sgcap/decoder.hpp"

#include <string>

#include "sgcap/errors.hpp"

namespace sgcap::model {
namespace {

constexpr double kInitBound = 0.1;
constexpr std::array<const char*, 4> kGateNames{"i", "f", "o", "g"};

std::string gate_weight(const char* layer, std::size_t gate) {
  return std::string(layer) + ".W_" + kGateNames[gate];
}

std::string gate_bias(const char* layer, std::size_t gate) {
  return std::string(layer) + ".b_" + kGateNames[gate];
}

bool hierarchical_sg_first(Variant v) {
  return v == Variant::kHierSg || v == Variant::kHierSgGat || v == Variant::kHierSgCgat;
}

LstmWeights bind_lstm(ad::ParamBinder& binder, const char* layer) {
  LstmWeights w;
  for (std::size_t g = 0; g < 4; ++g) {
    w.w[g] = binder(gate_weight(layer, g));
    w.b[g] = binder(gate_bias(layer, g));
  }
  return w;
}

std::pair<ad::Var, ad::Var> lstm_cell(const LstmWeights& w, ad::Var input, ad::Var h_prev,
                                      ad::Var c_prev) {
  const ad::Var z = ad::concat_cols({input, h_prev});
  const ad::Var i = ad::sigmoid(ad::add(ad::matmul(z, w.w[0]), w.b[0]));
  const ad::Var f = ad::sigmoid(ad::add(ad::matmul(z, w.w[1]), w.b[1]));
  const ad::Var o = ad::sigmoid(ad::add(ad::matmul(z, w.w[2]), w.b[2]));
  const ad::Var g = ad::tanh(ad::add(ad::matmul(z, w.w[3]), w.b[3]));
  const ad::Var c = ad::add(ad::mul(f, c_prev), ad::mul(i, g));
  const ad::Var h = ad::mul(o, ad::tanh(c));
  return {h, c};
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kButd: return "BUTD";
    case Variant::kFlat: return "FA";
    case Variant::kHierSg: return "HA-SG";
    case Variant::kHierIm: return "HA-IM";
    case Variant::kHierSgGat: return "HA-SG+GAT";
    case Variant::kHierSgCgat: return "HA-SG+CGAT";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  if (name == "HA-SG+C-GAT") return Variant::kHierSgCgat;
  return std::nullopt;
}

std::string valid_variant_names() {
  std::string out;
  for (Variant v : kAllVariants) {
    if (!out.empty()) out += ", ";
    out += variant_name(v);
  }
  return out;
}

bool uses_graph(Variant v) { return v != Variant::kButd; }

void ModelConfig::validate() const {
  if (vocab_size <= token::kReservedCount) {
    throw ConfigError("model vocab_size must exceed the " +
                      std::to_string(token::kReservedCount) + " reserved tokens");
  }
  if (hidden_dim == 0 || embed_dim == 0 || image_dim == 0 || graph_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", std::string(variant_name(variant))},
          {"vocab_size", vocab_size},
          {"hidden_dim", hidden_dim},
          {"embed_dim", embed_dim},
          {"attention_dim", attention_dim},
          {"image_dim", image_dim},
          {"graph_dim", graph_dim},
          {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  const auto name = j.at("variant").get<std::string>();
  const auto v = parse_variant(name);
  if (!v) throw ConfigError("unknown variant '" + name + "'; valid: " + valid_variant_names());
  c.variant = *v;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.attention_dim = j.value("attention_dim", c.attention_dim);
  c.image_dim = j.value("image_dim", c.image_dim);
  c.graph_dim = j.value("graph_dim", c.graph_dim);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

CaptionModel::CaptionModel(ModelConfig config, std::uint64_t init_seed)
    : config_(std::move(config)) {
  config_.validate();
  build_heads();
  init_params(init_seed);
}

CaptionModel::CaptionModel(ModelConfig config, ad::ParameterStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  build_heads();
  const auto spec = parameter_spec();
  if (spec.size() != params_.slots().size()) {
    throw ConfigError("parameter set does not match model config (" +
                      std::to_string(params_.slots().size()) + " tensors, expected " +
                      std::to_string(spec.size()) + ")");
  }
  for (const auto& [name, shape] : spec) {
    if (!params_.contains(name)) throw ConfigError("missing parameter " + name);
    const auto& t = params_.value(name);
    if (t.rows() != shape.first || t.cols() != shape.second) {
      throw ConfigError("parameter " + name + " has shape " + t.shape_string());
    }
  }
}

std::size_t CaptionModel::lstm1_input_dim() const {
  const auto& c = config_;
  return c.hidden_dim + c.embed_dim + c.image_dim + (uses_graph(c.variant) ? c.graph_dim : 0);
}

std::size_t CaptionModel::lstm2_input_dim() const {
  const auto& c = config_;
  return c.hidden_dim + c.image_dim + (uses_graph(c.variant) ? c.graph_dim : 0);
}

void CaptionModel::build_heads() {
  const auto& c = config_;
  const std::size_t a = c.attention_width();
  const std::size_t x_query = hierarchical_sg_first(c.variant) ? c.hidden_dim + c.graph_dim
                                                               : c.hidden_dim;
  att_x_ = AttentionHead("att_x", {c.image_dim, x_query, a});
  if (uses_graph(c.variant)) {
    const std::size_t y_query =
        c.variant == Variant::kHierIm ? c.hidden_dim + c.image_dim : c.hidden_dim;
    att_y_ = AttentionHead("att_y", {c.graph_dim, y_query, a});
  }
  if (c.variant == Variant::kHierSgGat) {
    graph_layer_ = GraphAttentionLayer("gat", c.graph_dim, c.graph_dim, a);
  } else if (c.variant == Variant::kHierSgCgat) {
    graph_layer_ = GraphAttentionLayer("cgat", c.graph_dim, c.hidden_dim, a);
  }
}

std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>>
CaptionModel::parameter_spec() const {
  ad::ParameterStore probe;
  Rng rng(0);
  const auto& c = config_;
  probe.add("embedding", ad::Tensor(c.vocab_size, c.embed_dim));
  for (const char* layer : {"lstm1", "lstm2"}) {
    const std::size_t in =
        (layer[4] == '1' ? lstm1_input_dim() : lstm2_input_dim()) + c.hidden_dim;
    for (std::size_t g = 0; g < 4; ++g) {
      probe.add(gate_weight(layer, g), ad::Tensor(in, c.hidden_dim));
      probe.add(gate_bias(layer, g), ad::Tensor(1, c.hidden_dim));
    }
  }
  att_x_.register_params(probe, rng, 0.0);
  if (uses_graph(c.variant)) att_y_.register_params(probe, rng, 0.0);
  if (c.variant == Variant::kHierSgGat || c.variant == Variant::kHierSgCgat) {
    graph_layer_.register_params(probe, rng, 0.0);
  }
  probe.add("vocab_proj", ad::Tensor(c.hidden_dim, c.vocab_size));
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> out;
  for (const auto& [name, slot] : probe.slots()) {
    out.push_back({name, {slot.value.rows(), slot.value.cols()}});
  }
  return out;
}

void CaptionModel::init_params(std::uint64_t seed) {
  Rng rng(seed);
  const auto& c = config_;
  params_.add("embedding", uniform_tensor(c.vocab_size, c.embed_dim, kInitBound, rng));
  for (const char* layer : {"lstm1", "lstm2"}) {
    const std::size_t in =
        (layer[4] == '1' ? lstm1_input_dim() : lstm2_input_dim()) + c.hidden_dim;
    for (std::size_t g = 0; g < 4; ++g) {
      params_.add(gate_weight(layer, g), uniform_tensor(in, c.hidden_dim, kInitBound, rng));
      params_.add(gate_bias(layer, g), g == 1 ? ad::Tensor(1, c.hidden_dim, 1.0)
                                              : uniform_tensor(1, c.hidden_dim, kInitBound, rng));
    }
  }
  att_x_.register_params(params_, rng, kInitBound);
  if (uses_graph(c.variant)) att_y_.register_params(params_, rng, kInitBound);
  if (c.variant == Variant::kHierSgGat || c.variant == Variant::kHierSgCgat) {
    graph_layer_.register_params(params_, rng, kInitBound);
  }
  params_.add("vocab_proj", uniform_tensor(c.hidden_dim, c.vocab_size, kInitBound, rng));
}

EncodedImage CaptionModel::encode(ad::ParamBinder& binder, const ImageInput& input) const {
  const auto& c = config_;
  if (input.features == nullptr) throw ConfigError("decoder input has no image features");
  if (uses_graph(c.variant) && input.graph == nullptr) {
    throw ConfigError(std::string(variant_name(c.variant)) + " requires a scene graph input");
  }
  if (!uses_graph(c.variant) && input.graph != nullptr) {
    throw ConfigError("BUTD does not accept a scene graph input");
  }
  const ad::Tensor& x = *input.features;
  if (x.cols() != c.image_dim || x.rows() == 0) {
    throw ad::ShapeError("image features " + x.shape_string() + " do not match image_dim " +
                         std::to_string(c.image_dim));
  }
  if (!input.mask.empty() && input.mask.size() != x.rows()) {
    throw ad::ShapeError("image mask length does not match feature rows");
  }

  ad::Tape& tape = binder.tape();
  EncodedImage e;
  e.tape = &tape;
  e.embedding = binder("embedding");
  e.lstm1 = bind_lstm(binder, "lstm1");
  e.lstm2 = bind_lstm(binder, "lstm2");
  e.att_x = att_x_.bind(binder);
  e.vocab_proj = binder("vocab_proj");

  e.image = tape.constant_ref(x);
  e.image_mask = ad::Tensor(1, x.rows(), 1.0);
  if (!input.mask.empty()) {
    for (std::size_t i = 0; i < x.rows(); ++i) e.image_mask[i] = input.mask[i] != 0.0 ? 1.0 : 0.0;
  }
  e.image_mean = ad::mean_rows(e.image, e.image_mask.data());
  e.image_proj = project_features(e.image, e.att_x);

  if (uses_graph(c.variant)) {
    const sg::SceneGraph& g = *input.graph;
    if (g.feature_dim() != c.graph_dim) {
      throw ad::ShapeError("scene graph feature dim " + std::to_string(g.feature_dim()) +
                           " does not match graph_dim " + std::to_string(c.graph_dim));
    }
    if (g.num_vertices() == 0) throw ad::ShapeError("scene graph has no vertices");
    e.att_y = att_y_.bind(binder);
    ad::Var y = tape.constant(sg::feature_matrix(g).features);
    if (c.variant == Variant::kHierSgGat || c.variant == Variant::kHierSgCgat) {
      e.graph_weights = graph_layer_.bind(binder);
    }
    if (c.variant == Variant::kHierSgGat) y = gat_layer(g, y, e.graph_weights);
    if (c.variant == Variant::kHierSgCgat) {
      e.layout = build_layout(g);
      e.cgat = prepare_cgat(e.layout, y, e.graph_weights);
    }
    e.graph_features = y;
    e.graph_mean = ad::mean_rows(y);
    if (c.variant != Variant::kHierSgCgat) e.graph_proj = project_features(y, e.att_y);
  }
  return e;
}

StateVars CaptionModel::initial_state(ad::Tape& tape) const {
  const std::size_t h = config_.hidden_dim;
  return {tape.constant(ad::Tensor(1, h)), tape.constant(ad::Tensor(1, h)),
          tape.constant(ad::Tensor(1, h)), tape.constant(ad::Tensor(1, h))};
}

StepOutput CaptionModel::step(const EncodedImage& e, std::size_t prev_word, const StateVars& s,
                              const StepDropout* dropout) const {
  const auto& c = config_;
  if (prev_word >= c.vocab_size) {
    throw std::invalid_argument("step: word id " + std::to_string(prev_word) +
                                " outside vocabulary of " + std::to_string(c.vocab_size));
  }
  ad::Var word = ad::gather_rows(e.embedding, {prev_word});
  if (dropout != nullptr) word = ad::dropout(word, dropout->embedding);

  const bool graph = uses_graph(c.variant);
  const ad::Var in1 = graph ? ad::concat_cols({s.h2, word, e.image_mean, e.graph_mean})
                            : ad::concat_cols({s.h2, word, e.image_mean});
  const auto [h1, c1] = lstm_cell(e.lstm1, in1, s.h1, s.c1);

  StepOutput out;
  ad::Var in2;
  const ad::Tensor* xmask = &e.image_mask;
  auto att_image = [&](ad::Var query) {
    return attend_projected(e.image, e.image_proj, query, xmask, e.att_x).context;
  };
  switch (c.variant) {
    case Variant::kButd: {
      in2 = ad::concat_cols({h1, att_image(h1)});
      break;
    }
    case Variant::kFlat: {
      const ad::Var x = att_image(h1);
      const ad::Var y =
          attend_projected(e.graph_features, e.graph_proj, h1, nullptr, e.att_y).context;
      in2 = ad::concat_cols({h1, x, y});
      out.graph_features = e.graph_features;
      break;
    }
    case Variant::kHierIm: {
      const ad::Var x = att_image(h1);
      const ad::Var y = attend_projected(e.graph_features, e.graph_proj,
                                         ad::concat_cols({h1, x}), nullptr, e.att_y)
                            .context;
      in2 = ad::concat_cols({h1, x, y});
      out.graph_features = e.graph_features;
      break;
    }
    case Variant::kHierSg:
    case Variant::kHierSgGat:
    case Variant::kHierSgCgat: {
      ad::Var feats = e.graph_features;
      ad::Var proj = e.graph_proj;
      if (c.variant == Variant::kHierSgCgat) {
        feats = cgat_layer(e.layout, e.cgat, h1, e.graph_weights);
        proj = project_features(feats, e.att_y);
      }
      const ad::Var y = attend_projected(feats, proj, h1, nullptr, e.att_y).context;
      const ad::Var x = att_image(ad::concat_cols({h1, y}));
      in2 = ad::concat_cols({h1, x, y});
      out.graph_features = feats;
      break;
    }
  }
  const auto [h2, c2] = lstm_cell(e.lstm2, in2, s.h2, s.c2);
  const ad::Var top = dropout != nullptr ? ad::dropout(h2, dropout->hidden) : h2;
  out.logits = ad::matmul(top, e.vocab_proj);
  out.state = {h1, c1, h2, c2};
  return out;
}

ad::Var CaptionModel::sequence_loss(ad::ParamBinder& binder, std::span<const std::size_t> caption,
                                    const ImageInput& input,
                                    std::span<const StepDropout> dropout) const {
  if (caption.size() < 2) {
    throw std::invalid_argument("sequence_loss: caption needs at least start and end tokens");
  }
  const std::size_t steps = caption.size() - 1;
  if (!dropout.empty() && dropout.size() != steps) {
    throw std::invalid_argument("sequence_loss: " + std::to_string(dropout.size()) +
                                " dropout masks for " + std::to_string(steps) + " steps");
  }
  const EncodedImage enc = encode(binder, input);
  StateVars state = initial_state(binder.tape());
  std::vector<ad::Var> logits;
  logits.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const StepOutput out = step(enc, caption[t], state, dropout.empty() ? nullptr : &dropout[t]);
    logits.push_back(out.logits);
    state = out.state;
  }
  const ad::Var all = logits.size() == 1 ? logits.front() : ad::concat_rows(logits);
  return ad::cross_entropy(all, {caption.begin() + 1, caption.end()});
}

}  // namespace sgcap::model
