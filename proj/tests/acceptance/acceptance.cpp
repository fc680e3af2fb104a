// Acceptance checks. Usage: sgcap_acceptance [criterion...]; no argument runs all ten.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgcap/decode.hpp"
#include "sgcap/experiment.hpp"
#include "sgcap/gradcheck_suite.hpp"
#include "sgcap/graph_attention.hpp"
#include "sgcap/metrics.hpp"
#include "sgcap/synthetic.hpp"
#include "sgcap/trainer.hpp"

namespace fs = std::filesystem;
using namespace sgcap;
using ad::Tensor;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor uniform(std::size_t r, std::size_t c, std::mt19937_64& rng, double bound = 1.0) {
  return model::uniform_tensor(r, c, bound, rng);
}

sg::SceneGraph random_graph(std::mt19937_64& rng, std::size_t k, std::size_t max_objects,
                            std::size_t max_relations, std::size_t object_vocab = 20,
                            std::size_t predicate_vocab = 10) {
  std::uniform_int_distribution<std::size_t> n_obj(1, max_objects);
  std::uniform_real_distribution<double> u(-1.0, 1.0), score(0.0, 1.0);
  auto feature = [&] {
    std::vector<double> f(k);
    for (double& v : f) v = u(rng);
    return f;
  };
  const std::size_t o = n_obj(rng);
  std::vector<sg::ObjectVertex> objects;
  for (std::size_t i = 0; i < o; ++i) objects.push_back({rng() % object_vocab, feature()});
  std::vector<sg::RelationVertex> relations;
  if (o >= 2) {
    const std::size_t r = std::uniform_int_distribution<std::size_t>(0, max_relations)(rng);
    for (std::size_t j = 0; j < r; ++j) {
      const std::size_t s = rng() % o;
      std::size_t t = rng() % o;
      while (t == s) t = rng() % o;
      relations.push_back({rng() % predicate_vocab, feature(), s, t, score(rng)});
    }
  }
  return sg::SceneGraph(k, std::move(objects), std::move(relations));
}

// 1 ------------------------------------------------------------------------
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto results = run_gradcheck_suite(1e-4);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string failed;
  for (const auto& r : results) {
    worst = std::max(worst, r.report.max_error());
    if (!r.report.passed) failed += " " + r.name;
  }
  Outcome o;
  o.pass = failed.empty() && secs < 60.0;
  o.detail = fmt("%zu checks, max rel err %.2e (tol 1e-4), %.1f s (limit 60 s)", results.size(),
                 worst, secs);
  if (!failed.empty()) o.detail += "; failed:" + failed;
  return o;
}

// 2 ------------------------------------------------------------------------
Outcome attention_correctness() {
  std::mt19937_64 rng(2);
  double worst_sum = 0.0, worst_perm = 0.0;
  bool masked_exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 10, df = 1 + rng() % 6, dq = 1 + rng() % 6,
                      h = 1 + rng() % 6;
    model::AttentionHead head("att", {df, dq, h});
    ad::ParameterStore store;
    model::Rng init(rng());
    head.register_params(store, init, 1.5);
    const Tensor x = uniform(n, df, rng, 2.0), q = uniform(1, dq, rng, 2.0);
    Tensor mask(1, n);
    for (double& m : mask.data()) m = (rng() % 4 == 0) ? 0.0 : 1.0;
    mask[rng() % n] = 1.0;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor px(n, df), pmask(1, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < df; ++c) px(i, c) = x(perm[i], c);
      pmask[i] = mask[perm[i]];
    }
    ad::Tape tape;
    ad::ParamBinder binder(tape, store);
    const auto w = head.bind(binder);
    const auto a = model::attend(tape.constant(x), tape.constant(q), &mask, w);
    const auto b = model::attend(tape.constant(px), tape.constant(q), &pmask, w);
    const Tensor& wa = a.weights.value();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += wa[i];
      if (mask[i] == 0.0 && wa[i] != 0.0) masked_exact = false;
      if (wa[i] < 0.0) masked_exact = false;
      worst_perm = std::max(worst_perm, std::abs(b.weights.value()[i] - wa[perm[i]]));
    }
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    worst_perm = std::max(worst_perm, ad::max_abs_diff(a.context.value(), b.context.value()));
  }
  Outcome o;
  o.pass = worst_sum <= 1e-9 && masked_exact && worst_perm <= 1e-12;
  o.detail = fmt("1000 instances: |sum-1| max %.1e (tol 1e-9), masked rows exactly 0: %s, "
                 "permutation diff max %.1e (tol 1e-12)",
                 worst_sum, masked_exact ? "yes" : "no", worst_perm);
  return o;
}

// 3 ------------------------------------------------------------------------
Outcome cgat_reduction() {
  std::mt19937_64 rng(3);
  const std::size_t k = 6;
  model::GraphAttentionLayer layer("g", k, k, 5);
  ad::ParameterStore store;
  model::Rng init(33);
  layer.register_params(store, init, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const sg::SceneGraph g = random_graph(rng, k, 8, 10);
    ad::Tape tape;
    ad::ParamBinder binder(tape, store);
    const auto w = layer.bind(binder);
    const ad::Var f = tape.constant(sg::feature_matrix(g).features);
    const Tensor gat = model::gat_layer(g, f, w).value();
    const Tensor cgat = model::cgat_layer_per_vertex(model::build_layout(g), f, f, w).value();
    worst = std::max(worst, ad::max_abs_diff(gat, cgat));
  }
  return {worst <= 1e-12, fmt("100 graphs, max |GAT - C-GAT(self query)| = %.1e (tol 1e-12)", worst)};
}

// 4 ------------------------------------------------------------------------
Outcome overfit() {
  synth::CorpusConfig cc;
  cc.scene_count = 32;
  cc.train_fraction = 1.0;
  cc.val_fraction = 0.0;
  const synth::Corpus corpus = synth::generate_corpus(cc);
  std::vector<const synth::Scene*> all;
  for (const auto& s : corpus.scenes) all.push_back(&s);
  std::vector<metrics::References> refs;
  for (const auto* s : all) refs.push_back(s->captions);

  exp::ExperimentConfig ec;
  ec.corpus = cc;
  bool pass = true;
  std::string detail;
  for (model::Variant v : model::kAllVariants) {
    train::TrainConfig tc;
    tc.max_epochs = 200;
    tc.early_stop_patience = 200;
    tc.dropout = 0.0;
    tc.batch_size = 2;
    tc.lr = 0.01;
    tc.target_metric = 1.0;
    tc.val_beam = 5;
    ec.train = tc;
    model::CaptionModel m(ec.model_config(v, corpus.lexicon), ec.model.init_seed);
    const auto t0 = Clock::now();
    const auto result = train::fit(m, all, all, corpus.lexicon, tc);
    const double secs = seconds_since(t0);
    model::DecodeOptions beam;
    beam.beam_width = 5;
    beam.max_length = 32;
    const auto decoded = train::decode_scenes(m, all, corpus.lexicon, beam);
    std::size_t exact = 0;
    for (std::size_t i = 0; i < all.size(); ++i) exact += decoded[i] == all[i]->captions[0];
    const double bleu = metrics::bleu4(decoded, refs);
    const bool ok = result.best_metric >= 0.95 && secs < 300.0 && exact == all.size();
    pass = pass && ok;
    detail += fmt("%s%s: train BLEU %.3f in %zu epochs, %.0f s; beam-5 BLEU %.3f, %zu/32 exact",
                  detail.empty() ? "" : "; ", std::string(model::variant_name(v)).c_str(),
                  result.best_metric, result.log.size(), secs, bleu, exact);
  }
  return {pass, detail + " (need BLEU >= 0.95 within 200 epochs, < 300 s, all captions)"};
}

// 5 ------------------------------------------------------------------------
struct BucketScores {
  double rel_f1 = 0.0, bleu = 0.0;
};

Outcome bucket_trend() {
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::map<std::string, std::map<std::string, BucketScores>> sum;  // model -> bucket
  std::string detail;
  for (std::uint64_t seed : seeds) {
    synth::CorpusConfig cc;
    cc.scene_count = 800;
    cc.train_fraction = 0.6;
    cc.val_fraction = 0.1;
    cc.corruption_rates = {0.0, 0.25, 0.5, 0.75};
    cc.corruption_weights = {};
    cc.seed = seed;
    const synth::Corpus corpus = synth::generate_corpus(cc);
    exp::ExperimentConfig ec;
    ec.corpus = cc;
    ec.train.max_epochs = 40;
    ec.train.batch_size = 8;
    ec.train.lr = 0.004;
    ec.train.dropout = 0.3;
    ec.train.seed = seed;
    for (model::Variant v : {model::Variant::kButd, model::Variant::kHierSgCgat}) {
      const auto t0 = Clock::now();
      model::CaptionModel m(ec.model_config(v, corpus.lexicon), 100 + seed);
      train::fit(m, corpus.split(synth::Split::kTrain), corpus.split(synth::Split::kVal),
                 corpus.lexicon, ec.train);
      const auto rows = exp::evaluate_model(m, corpus, ec.eval, ec.hash());
      const std::string name(model::variant_name(v));
      for (const auto& r : rows) {
        sum[name][r.bucket].rel_f1 += r.spice.relation.f1 / double(seeds.size());
        sum[name][r.bucket].bleu += r.bleu4 / double(seeds.size());
      }
      std::cerr << "  [5] seed " << seed << " " << name << " " << fmt("%.0f s", seconds_since(t0))
                << '\n';
    }
  }
  const auto& b = sum["BUTD"];
  const auto& c = sum["HA-SG+CGAT"];
  const double rel_high = c.at("high").rel_f1 - b.at("high").rel_f1;
  const double rel_low = c.at("low").rel_f1 - b.at("low").rel_f1;
  const double bleu_high = c.at("high").bleu - b.at("high").bleu;
  const double bleu_low = c.at("low").bleu - b.at("low").bleu;
  Outcome o;
  o.pass = rel_high > 0.0 && rel_high > rel_low && bleu_high > bleu_low;
  o.detail = fmt("3-seed means: rel F1 high CGAT %.4f vs BUTD %.4f; advantage high %+.4f vs low "
                 "%+.4f; BLEU-4 advantage high %+.4f vs low %+.4f",
                 c.at("high").rel_f1, b.at("high").rel_f1, rel_high, rel_low, bleu_high, bleu_low);
  return o;
}

// 6 ------------------------------------------------------------------------
double oracle_recall(const sg::SceneGraph& predicted, const sg::SceneGraph& gold, std::size_t k) {
  auto ranked = sg::extract_triplets(predicted);
  if (ranked.size() > k) ranked.resize(k);
  std::vector<sg::Triplet> g;
  for (const auto& r : gold.relations()) {
    g.push_back({gold.objects()[r.subject].label, r.predicate, gold.objects()[r.object].label});
  }
  std::vector<int> owner(g.size(), -1);
  std::function<bool(std::size_t, std::vector<bool>&)> augment = [&](std::size_t p,
                                                                     std::vector<bool>& seen) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (seen[j] || !(ranked[p].triplet == g[j])) continue;
      seen[j] = true;
      if (owner[j] < 0 || augment(std::size_t(owner[j]), seen)) {
        owner[j] = int(p);
        return true;
      }
    }
    return false;
  };
  std::size_t matched = 0;
  for (std::size_t p = 0; p < ranked.size(); ++p) {
    std::vector<bool> seen(g.size(), false);
    matched += augment(p, seen);
  }
  return double(matched) / double(g.size());
}

Outcome sgdet_oracle() {
  std::mt19937_64 rng(6);
  std::size_t pairs = 0, mismatches = 0, decreases = 0;
  while (pairs < 100) {
    const sg::SceneGraph gold = random_graph(rng, 2, 10, 12, 3, 2);
    if (gold.num_relations() == 0) continue;
    std::vector<sg::RelationVertex> pred;
    const sg::SceneGraph noise = random_graph(rng, 2, 10, 12, 3, 2);
    for (const auto& r : noise.relations()) {
      auto x = r;
      x.subject %= gold.num_objects();
      x.object %= gold.num_objects();
      if (x.subject != x.object) pred.push_back(x);
    }
    for (std::size_t j = 0; j < gold.num_relations(); j += 2) {
      auto r = gold.relations()[j];
      r.score = std::uniform_real_distribution<double>(0, 1)(rng);
      pred.push_back(r);
    }
    const sg::SceneGraph predicted(2, gold.objects(), pred);
    double prev = 0.0;
    for (std::size_t k = 1; k <= pred.size() + 1; ++k) {
      const double r = metrics::sgdet_recall_at_k(predicted, gold, k);
      mismatches += r != oracle_recall(predicted, gold, k);
      decreases += r < prev;
      prev = r;
    }
    ++pairs;
  }
  return {mismatches == 0 && decreases == 0,
          fmt("100 graph pairs, all k: %zu oracle mismatches, %zu decreases in k", mismatches,
              decreases)};
}

// 7 ------------------------------------------------------------------------
std::vector<std::string> words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

Outcome metric_oracles() {
  struct Row {
    const char* candidate;
    const char* reference;
    double bleu;
    double rouge;
  };
  // Hand-computed values.
  const std::vector<Row> table{
      {"a man rides a horse .", "a man rides a horse .", 1.0, 1.0},
      {"a man rides a dog", "a man rides a horse", std::pow(0.2, 0.25), 0.8},
      {"a man rides a horse", "a man rides the horse", 0.0, 0.8},
      {"a man rides a", "a man rides a horse", std::exp(1.0 - 5.0 / 4.0),
       (1 + 1.44) * 1.0 * 0.8 / (0.8 + 1.44 * 1.0)},
      {"x y z w", "a b c d", 0.0, 0.0},
  };
  double worst_bleu = 0.0, worst_rouge = 0.0;
  for (const Row& r : table) {
    const std::vector<metrics::Sentence> c{words(r.candidate)};
    const std::vector<metrics::References> ref{{words(r.reference)}};
    worst_bleu = std::max(worst_bleu, std::abs(metrics::bleu4(c, ref) - r.bleu));
    worst_rouge = std::max(worst_rouge, std::abs(metrics::rouge_l(c, ref) - r.rouge));
  }
  const double rouge_abcd = metrics::rouge_l_sentence(words("a b c d"), {words("a c d")});
  worst_rouge = std::max(worst_rouge, std::abs(rouge_abcd - 2.44 * 0.75 / (1.0 + 1.44 * 0.75)));
  const std::vector<metrics::Sentence> c{words("a man rides a dog")};
  const std::vector<metrics::References> ref{{words("a man rides a horse")}};
  const double worked = metrics::bleu4(c, ref);

  std::vector<metrics::Sentence> corpus;
  std::vector<metrics::References> refs;
  for (const Row& r : table) {
    corpus.push_back(words(r.reference));
    refs.push_back({words(r.reference)});
  }
  const double id_bleu = metrics::bleu4(corpus, refs), id_rouge = metrics::rouge_l(corpus, refs);
  Outcome o;
  o.pass = worst_bleu <= 1e-9 && worst_rouge <= 1e-9 && std::abs(worked - 0.6687) < 1e-4 &&
           id_bleu == 1.0 && id_rouge == 1.0;
  o.detail = fmt("5-pair table: max BLEU err %.1e, max ROUGE-L err %.1e (tol 1e-9); worked "
                 "example %.4f; identical corpus BLEU %.1f ROUGE-L %.1f",
                 worst_bleu, worst_rouge, worked, id_bleu, id_rouge);
  return o;
}

// 8 ------------------------------------------------------------------------
Outcome decoding() {
  std::mt19937_64 rng(8);
  std::size_t greedy_mismatch = 0, dominance_fail = 0;
  for (int trial = 0; trial < 50; ++trial) {
    model::ModelConfig mc;
    mc.variant = model::kAllVariants[trial % 6];
    mc.vocab_size = 10 + trial % 7;
    mc.hidden_dim = 8;
    mc.embed_dim = 6;
    mc.image_dim = 5;
    mc.graph_dim = 4;
    model::CaptionModel m(mc, 500 + trial);
    for (auto& [name, slot] : m.params().slots()) {
      for (double& v : slot.value.data()) v *= 15.0;
    }
    const Tensor x = uniform(6, 5, rng);
    const sg::SceneGraph g = random_graph(rng, 4, 5, 5);
    model::ImageInput in;
    in.features = &x;
    if (model::uses_graph(mc.variant)) in.graph = &g;
    model::DecodeOptions one;
    one.beam_width = 1;
    one.max_length = 12;
    model::DecodeOptions five = one;
    five.beam_width = 5;
    const auto greedy = model::decode_greedy(m, in, 12);
    const auto b1 = model::decode_beam(m, in, one);
    const auto b5 = model::decode_beam(m, in, five);
    greedy_mismatch += !(greedy.tokens == b1.tokens && greedy.ended == b1.ended &&
                         greedy.log_prob == b1.log_prob);
    dominance_fail += b5.normalized() < greedy.normalized();
  }
  return {greedy_mismatch == 0 && dominance_fail == 0,
          fmt("50 (model, input) pairs: %zu beam-1/greedy mismatches, %zu beam-5 below greedy "
              "(length-normalised log-prob)",
              greedy_mismatch, dominance_fail)};
}

// 9 ------------------------------------------------------------------------
Outcome schedules() {
  const train::TrainConfig tc;
  train::PlateauSchedule flat(tc.lr, tc.decay_factor, tc.decay_patience, tc.early_stop_patience,
                              tc.max_epochs);
  std::vector<double> lrs;
  while (!flat.should_stop()) {
    lrs.push_back(flat.lr());
    flat.observe(0.3);  // never improves after the first epoch
  }
  const bool decay_ok = lrs.size() > 9 && lrs[8] == 0.002 && std::abs(lrs[9] - 0.0016) < 1e-15;
  const std::size_t stagnant_stop = flat.epochs();

  train::PlateauSchedule rising(tc.lr, tc.decay_factor, tc.decay_patience, tc.early_stop_patience,
                                tc.max_epochs);
  double metric = 0.0;
  while (!rising.should_stop()) rising.observe(metric += 0.01);
  const std::size_t max_stop = rising.epochs();

  Outcome o;
  o.pass = decay_ok && stagnant_stop == 21 && max_stop == 50;
  o.detail = fmt("lr epoch 9 %.4f, epoch 10 %.4f; stagnant curve stops after epoch %zu "
                 "(want 21); improving curve stops after %zu (want 50)",
                 lrs.size() > 8 ? lrs[8] : 0.0, lrs.size() > 9 ? lrs[9] : 0.0, stagnant_stop,
                 max_stop);
  return o;
}

// 10 -----------------------------------------------------------------------
Outcome gold_graph_inference() {
  const fs::path root = fs::temp_directory_path() / "sgcap_acceptance_gold";
  fs::remove_all(root);
  std::ostringstream log;
  auto run = [&](const std::string& tag, std::vector<double> rates) {
    exp::ExperimentConfig ec;
    ec.corpus.scene_count = 60;
    ec.corpus.corruption_rates = std::move(rates);
    ec.corpus.corruption_weights = {};
    ec.train.max_epochs = 3;
    ec.train.batch_size = 8;
    ec.model.hidden_dim = 16;
    ec.model.embed_dim = 16;
    ec.eval.gold_graphs = true;
    const fs::path corpus = root / (tag + "_corpus"), run_dir = root / (tag + "_run");
    exp::cmd_generate(ec, corpus, false, log);
    exp::cmd_train(ec, model::Variant::kHierSgCgat, corpus, run_dir, false, log);
    const fs::path csv = root / (tag + ".csv");
    exp::cmd_evaluate(run_dir / "checkpoint.bin", corpus, ec.eval, csv, log);
    std::ifstream in(csv);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
  };
  const auto corrupted = run("mixed", {0.25, 0.5, 0.75, 1.0});
  const auto clean = run("clean", {0.0});
  // rows: header, 4 predicted, 4 gold
  std::size_t gold_rows = 0, identical = 0;
  for (std::size_t i = 1; i < clean.size(); ++i) {
    if (clean[i].find(",gold,") == std::string::npos) continue;
    ++gold_rows;
    std::string pred = clean[i];
    pred.replace(pred.find(",gold,"), 6, ",predicted,");
    identical += std::find(clean.begin(), clean.end(), pred) != clean.end();
  }
  std::size_t corrupted_gold = 0;
  for (const auto& l : corrupted) corrupted_gold += l.find(",gold,") != std::string::npos;
  fs::remove_all(root);
  Outcome o;
  o.pass = corrupted_gold > 0 && gold_rows > 0 && identical == gold_rows;
  o.detail = fmt("corrupted corpus: %zu gold-graph rows written; zero-corruption corpus: %zu/%zu "
                 "gold rows identical to predicted rows",
                 corrupted_gold, identical, gold_rows);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"gradient suite", gradient_suite},
      {"attention correctness", attention_correctness},
      {"C-GAT/GAT reduction", cgat_reduction},
      {"overfit", overfit},
      {"quality-bucket trend", bucket_trend},
      {"SGDet oracle", sgdet_oracle},
      {"metric oracles", metric_oracles},
      {"decoding", decoding},
      {"schedules", schedules},
      {"gold-graph inference", gold_graph_inference},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    const std::size_t n = std::stoul(argv[i]);
    if (n < 1 || n > criteria.size()) {
      std::cerr << "criterion must be 1.." << criteria.size() << '\n';
      return 2;
    }
    selected.insert(n);
  }
  if (selected.empty()) {
    for (std::size_t i = 1; i <= criteria.size(); ++i) selected.insert(i);
  }
  bool all = true;
  for (std::size_t n : selected) {
    const auto& [name, fn] = criteria[n - 1];
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): "
              << o.detail << fmt(" [%.1f s]", seconds_since(t0)) << std::endl;
  }
  return all ? 0 : 1;
}
