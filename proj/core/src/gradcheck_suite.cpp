#include "sgcap/gradcheck_suite.hpp"

#include <cstdio>
#include <functional>
#include <random>

#include "sgcap/decoder.hpp"
#include "sgcap/graph_attention.hpp"

namespace sgcap {
namespace {

using ad::ParamBinder;
using ad::ParameterStore;
using ad::Tensor;
using ad::Var;

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double bound = 1.0) {
  return model::uniform_tensor(r, c, bound, rng);
}

/// Reduces an arbitrary matrix to a scalar with fixed random weights so
/// that no adjoint is trivially uniform.
Var weighted_sum(Var x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(x, x.tape()->constant(random_tensor(x.rows(), x.cols(), rng))));
}

struct Case {
  std::string name;
  ParameterStore params;
  ad::LossClosure loss;
};

std::vector<Case> primitive_cases() {
  std::mt19937_64 rng(11);
  std::vector<Case> cases;
  auto add_case = [&](std::string name, std::vector<std::pair<std::string, Tensor>> inputs,
                      ad::LossClosure loss) {
    Case c{std::move(name), {}, std::move(loss)};
    for (auto& [n, t] : inputs) c.params.add(n, std::move(t));
    cases.push_back(std::move(c));
  };
  add_case("matmul", {{"a", random_tensor(3, 4, rng)}, {"b", random_tensor(4, 2, rng)}},
           [](ParamBinder& p) { return weighted_sum(ad::matmul(p("a"), p("b")), 1); });
  add_case("add", {{"a", random_tensor(2, 3, rng)}, {"b", random_tensor(2, 3, rng)}},
           [](ParamBinder& p) { return weighted_sum(ad::add(p("a"), p("b")), 2); });
  add_case("mul", {{"a", random_tensor(2, 3, rng)}, {"b", random_tensor(2, 3, rng)}},
           [](ParamBinder& p) { return weighted_sum(ad::mul(p("a"), p("b")), 3); });
  add_case("scale", {{"a", random_tensor(2, 3, rng)}},
           [](ParamBinder& p) { return weighted_sum(ad::scale(p("a"), -1.7), 4); });
  add_case("tanh", {{"a", random_tensor(3, 3, rng, 2.0)}},
           [](ParamBinder& p) { return weighted_sum(ad::tanh(p("a")), 5); });
  add_case("sigmoid", {{"a", random_tensor(3, 3, rng, 2.0)}},
           [](ParamBinder& p) { return weighted_sum(ad::sigmoid(p("a")), 6); });
  add_case("sum", {{"a", random_tensor(2, 4, rng)}},
           [](ParamBinder& p) { return ad::scale(ad::sum(p("a")), 0.5); });
  add_case("concat-cols", {{"a", random_tensor(2, 3, rng)}, {"b", random_tensor(2, 1, rng)}},
           [](ParamBinder& p) { return weighted_sum(ad::concat_cols({p("a"), p("b")}), 7); });
  add_case("concat-rows", {{"a", random_tensor(2, 3, rng)}, {"b", random_tensor(1, 3, rng)}},
           [](ParamBinder& p) { return weighted_sum(ad::concat_rows({p("a"), p("b")}), 8); });
  add_case("reshape", {{"a", random_tensor(2, 6, rng)}},
           [](ParamBinder& p) { return weighted_sum(ad::reshape(p("a"), 4, 3), 9); });
  add_case("mean-rows", {{"a", random_tensor(4, 3, rng)}}, [](ParamBinder& p) {
    static const std::vector<double> mask{1.0, 0.0, 1.0, 1.0};
    return weighted_sum(ad::mean_rows(p("a"), mask), 10);
  });
  add_case("gather", {{"a", random_tensor(4, 3, rng)}}, [](ParamBinder& p) {
    return weighted_sum(ad::gather_rows(p("a"), {2, 0, 2, 3}), 11);
  });
  add_case("dropout", {{"a", random_tensor(2, 4, rng)}}, [](ParamBinder& p) {
    static const Tensor mask(2, 4, {2.0, 0.0, 2.0, 2.0, 0.0, 2.0, 2.0, 0.0});
    return weighted_sum(ad::dropout(p("a"), mask), 12);
  });
  add_case("masked-softmax", {{"a", random_tensor(3, 4, rng, 2.0)}}, [](ParamBinder& p) {
    static const Tensor mask(3, 4, {1, 1, 0, 1, 1, 1, 1, 1, 0, 1, 0, 0});
    return weighted_sum(ad::masked_softmax_rows(p("a"), &mask), 13);
  });
  add_case("cross-entropy", {{"a", random_tensor(3, 5, rng, 2.0)}},
           [](ParamBinder& p) { return ad::cross_entropy(p("a"), {4, 0, 2}); });
  return cases;
}

sg::SceneGraph tiny_graph(std::size_t k, std::mt19937_64& rng) {
  auto feat = [&] {
    const Tensor t = random_tensor(1, k, rng);
    return std::vector<double>(t.data().begin(), t.data().end());
  };
  std::vector<sg::ObjectVertex> objs{{0, feat()}, {1, feat()}, {2, feat()}};
  std::vector<sg::RelationVertex> rels{{0, feat(), 0, 1, 0.9}, {1, feat(), 2, 1, 0.4},
                                       {2, feat(), 1, 0, 0.7}};
  return sg::SceneGraph(k, std::move(objs), std::move(rels));
}

std::vector<Case> layer_cases() {
  std::mt19937_64 rng(21);
  const std::size_t k = 4, dq = 3, h = 5;
  auto graph = std::make_shared<sg::SceneGraph>(tiny_graph(k, rng));
  std::vector<Case> cases;

  {
    Case c{"attention", {}, {}};
    model::AttentionHead head("att", {k, dq, h});
    head.register_params(c.params, rng, 0.5);
    c.params.add("features", random_tensor(4, k, rng));
    c.params.add("query", random_tensor(1, dq, rng));
    c.loss = [head](ParamBinder& p) {
      static const Tensor mask(1, 4, {1, 1, 0, 1});
      const auto r = model::attend(p("features"), p("query"), &mask, head.bind(p));
      return ad::add(weighted_sum(r.context, 31), weighted_sum(r.weights, 32));
    };
    cases.push_back(std::move(c));
  }
  {
    Case c{"gat", {}, {}};
    model::GraphAttentionLayer layer("gat", k, k, h);
    layer.register_params(c.params, rng, 0.5);
    c.params.add("Y", random_tensor(graph->num_vertices(), k, rng));
    c.loss = [layer, graph](ParamBinder& p) {
      return weighted_sum(model::gat_layer(*graph, p("Y"), layer.bind(p)), 33);
    };
    cases.push_back(std::move(c));
  }
  {
    Case c{"cgat", {}, {}};
    model::GraphAttentionLayer layer("cgat", k, dq, h);
    layer.register_params(c.params, rng, 0.5);
    c.params.add("Y", random_tensor(graph->num_vertices(), k, rng));
    c.params.add("query", random_tensor(1, dq, rng));
    c.loss = [layer, graph](ParamBinder& p) {
      return weighted_sum(model::cgat_layer(*graph, p("Y"), p("query"), layer.bind(p)), 34);
    };
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<Case> decoder_cases() {
  std::vector<Case> cases;
  for (model::Variant v : model::kAllVariants) {
    std::mt19937_64 rng(41);
    model::ModelConfig mc;
    mc.variant = v;
    mc.vocab_size = 12;
    mc.hidden_dim = 6;
    mc.embed_dim = 5;
    mc.attention_dim = 4;
    mc.image_dim = 4;
    mc.graph_dim = 4;
    auto model = std::make_shared<model::CaptionModel>(mc, 99);
    auto image = std::make_shared<Tensor>(random_tensor(4, mc.image_dim, rng));
    auto graph = std::make_shared<sg::SceneGraph>(tiny_graph(mc.graph_dim, rng));
    const std::vector<std::size_t> caption{model::token::kStart, 5, 7, 4, 9, model::token::kEnd};
    auto masks = std::make_shared<std::vector<model::StepDropout>>();
    std::bernoulli_distribution keep(0.8);
    for (std::size_t t = 0; t + 1 < caption.size(); ++t) {
      model::StepDropout d{Tensor(1, mc.embed_dim), Tensor(1, mc.hidden_dim)};
      for (double& x : d.embedding.data()) x = keep(rng) ? 1.25 : 0.0;
      for (double& x : d.hidden.data()) x = keep(rng) ? 1.25 : 0.0;
      masks->push_back(std::move(d));
    }
    Case c{"decoder:" + std::string(model::variant_name(v)), model->params(), {}};
    c.loss = [model, image, graph, masks, caption, v](ParamBinder& p) {
      static const std::vector<double> mask{1.0, 1.0, 1.0, 0.0};
      model::ImageInput in{image.get(), mask, model::uses_graph(v) ? graph.get() : nullptr};
      return model->sequence_loss(p, caption, in, *masks);
    };
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace

std::vector<SuiteResult> run_gradcheck_suite(double tolerance, std::optional<ad::OpKind> fault) {
  ad::GradCheckOptions opts;
  opts.fault = fault;
  std::vector<SuiteResult> out;
  for (auto* make : {&primitive_cases, &layer_cases, &decoder_cases}) {
    for (Case& c : make()) {
      out.push_back({c.name, ad::grad_check(c.loss, c.params, tolerance, opts)});
    }
  }
  return out;
}

bool print_suite(std::ostream& out, const std::vector<SuiteResult>& results) {
  bool ok = true;
  for (const auto& r : results) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", r.report.max_error());
    out << (r.report.passed ? "PASS " : "FAIL ") << r.name << " max-rel-err=" << buf;
    if (!r.report.passed) {
      for (const auto& e : r.report.entries) {
        if (e.max_relative_error > r.report.tolerance) {
          out << " [" << e.parameter << "[" << e.worst_index << "] analytic=" << e.analytic
              << " numeric=" << e.numeric << "]";
          break;
        }
      }
    }
    out << '\n';
    ok = ok && r.report.passed;
  }
  return ok;
}

}  // namespace sgcap
