#include <benchmark/benchmark.h>

#include <random>

#include "sgcap/decode.hpp"
#include "sgcap/decoder.hpp"
#include "sgcap/graph_attention.hpp"
#include "sgcap/metrics.hpp"
#include "sgcap/synthetic.hpp"
#include "sgcap/trainer.hpp"

using namespace sgcap;

namespace {

const synth::Corpus& corpus() {
  static const synth::Corpus c = [] {
    synth::CorpusConfig cfg;
    cfg.scene_count = 32;
    return synth::generate_corpus(cfg);
  }();
  return c;
}

model::ModelConfig config_for(model::Variant v) {
  model::ModelConfig mc;
  mc.variant = v;
  mc.vocab_size = corpus().lexicon.words().size();
  return mc;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  std::mt19937_64 rng(1);
  const ad::Tensor a = model::uniform_tensor(n, n, 1.0, rng);
  const ad::Tensor b = model::uniform_tensor(n, n, 1.0, rng);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var y = ad::sum(ad::matmul(tape.parameter("a", a), tape.parameter("b", b)));
    benchmark::DoNotOptimize(tape.backward(y));
  }
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64);

static void BM_CgatLayer(benchmark::State& state) {
  const auto& scene = corpus().scenes.front();
  model::GraphAttentionLayer layer("cgat", 32, 64, 64);
  ad::ParameterStore store;
  std::mt19937_64 rng(2);
  layer.register_params(store, rng, 0.1);
  const ad::Tensor y = sg::feature_matrix(scene.predicted).features;
  const ad::Tensor q = model::uniform_tensor(1, 64, 1.0, rng);
  const auto layout = model::build_layout(scene.predicted);
  for (auto _ : state) {
    ad::Tape tape;
    ad::ParamBinder p(tape, store);
    benchmark::DoNotOptimize(
        model::cgat_layer(layout, tape.constant_ref(y), tape.constant_ref(q), layer.bind(p)));
  }
}
BENCHMARK(BM_CgatLayer);

static void BM_SequenceLoss(benchmark::State& state) {
  const auto variant = model::kAllVariants[std::size_t(state.range(0))];
  model::CaptionModel m(config_for(variant), 1);
  const auto& scene = corpus().scenes.front();
  const auto caption = corpus().lexicon.encode(scene.captions.front());
  const auto input = train::scene_input(scene, variant, train::GraphSource::kPredicted);
  for (auto _ : state) {
    ad::Tape tape;
    ad::ParamBinder p(tape, m.params());
    const ad::Var loss = m.sequence_loss(p, caption, input, {});
    benchmark::DoNotOptimize(tape.backward(loss));
  }
  state.SetLabel(std::string(model::variant_name(variant)));
}
BENCHMARK(BM_SequenceLoss)->DenseRange(0, 5);

static void BM_BeamDecode(benchmark::State& state) {
  model::CaptionModel m(config_for(model::Variant::kHierSgCgat), 1);
  const auto& scene = corpus().scenes.front();
  const auto input = train::scene_input(scene, model::Variant::kHierSgCgat,
                                        train::GraphSource::kPredicted);
  model::DecodeOptions opts;
  opts.beam_width = std::size_t(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(model::decode_beam(m, input, opts));
}
BENCHMARK(BM_BeamDecode)->Arg(1)->Arg(5);

static void BM_Bleu4(benchmark::State& state) {
  std::vector<metrics::Sentence> cands;
  std::vector<metrics::References> refs;
  for (const auto& s : corpus().scenes) {
    cands.push_back(s.captions.front());
    refs.push_back(s.captions);
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::bleu4(cands, refs));
}
BENCHMARK(BM_Bleu4);
BENCHMARK_MAIN();
