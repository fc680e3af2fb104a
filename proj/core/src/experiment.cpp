#include "sgcap/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "sgcap/errors.hpp"
#include "sgcap/gradcheck_suite.hpp"
#include "sgcap/parameters.hpp"

namespace sgcap::exp {
namespace fs = std::filesystem;

namespace {

nlohmann::json section(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return nlohmann::json::object();
  const auto& s = j.at(key);
  if (!s.is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

model::Variant parse_variant_or_throw(const std::string& name) {
  const auto v = model::parse_variant(name);
  if (!v) {
    throw ConfigError("unknown variant '" + name + "'; valid variants: " +
                      model::valid_variant_names());
  }
  return *v;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  c.corpus = synth::CorpusConfig::from_json(section(j, "corpus"));
  c.train = train::TrainConfig::from_json(section(j, "train"));
  try {
    const auto m = section(j, "model");
    c.model.hidden_dim = m.value("hidden_dim", c.model.hidden_dim);
    c.model.embed_dim = m.value("embed_dim", c.model.embed_dim);
    c.model.attention_dim = m.value("attention_dim", c.model.attention_dim);
    c.model.init_seed = m.value("init_seed", c.model.init_seed);
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j.at("variants")) c.variants.push_back(parse_variant_or_throw(v.get<std::string>()));
    }
    const auto e = section(j, "eval");
    c.eval.beam = e.value("beam", c.eval.beam);
    c.eval.buckets = e.value("buckets", c.eval.buckets);
    c.eval.gold_graphs = e.value("gold_graphs", c.eval.gold_graphs);
    c.eval.max_length = e.value("max_length", c.eval.max_length);
    if (e.contains("recall_k") && !e.at("recall_k").is_null()) {
      c.eval.recall_k = e.at("recall_k").get<std::size_t>();
    }
    if (j.contains("corpus_dir")) {
      fs::path p = j.at("corpus_dir").get<std::string>();
      c.corpus_dir = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("experiment config: ") + ex.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json variants_json = nlohmann::json::array();
  for (auto v : variants) variants_json.push_back(std::string(model::variant_name(v)));
  nlohmann::json j{{"corpus", corpus.to_json()},
                   {"train", train.to_json()},
                   {"model",
                    {{"hidden_dim", model.hidden_dim},
                     {"embed_dim", model.embed_dim},
                     {"attention_dim", model.attention_dim},
                     {"init_seed", model.init_seed}}},
                   {"variants", variants_json},
                   {"eval",
                    {{"beam", eval.beam},
                     {"buckets", eval.buckets},
                     {"gold_graphs", eval.gold_graphs},
                     {"max_length", eval.max_length}}}};
  if (eval.recall_k) j["eval"]["recall_k"] = *eval.recall_k;
  if (corpus_dir) j["corpus_dir"] = corpus_dir->string();
  return j;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a(to_json().dump())); }

void ExperimentConfig::validate() const {
  corpus.validate();
  train.validate();
  if (model.hidden_dim == 0 || model.embed_dim == 0) {
    throw ConfigError("model hidden_dim and embed_dim must be positive");
  }
  if (variants.empty()) throw ConfigError("variants list is empty");
  if (eval.beam == 0) throw ConfigError("eval beam must be at least 1");
  if (eval.max_length == 0) throw ConfigError("eval max_length must be positive");
  if (eval.recall_k && *eval.recall_k == 0) throw ConfigError("eval recall_k must be positive");
}

model::ModelConfig ExperimentConfig::model_config(model::Variant v,
                                                  const synth::Lexicon& lex) const {
  model::ModelConfig mc;
  mc.variant = v;
  mc.vocab_size = lex.words().size();
  mc.hidden_dim = model.hidden_dim;
  mc.embed_dim = model.embed_dim;
  mc.attention_dim = model.attention_dim;
  mc.image_dim = corpus.image_dim;
  mc.graph_dim = corpus.graph_dim;
  mc.dropout = train.dropout;
  return mc;
}

void prepare_output_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory " + dir.string() +
                        " already exists; pass --force to overwrite");
    }
    if (force) fs::remove_all(dir);
  }
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

void cmd_generate(const ExperimentConfig& config, const fs::path& out, bool force,
                  std::ostream& log) {
  const synth::Corpus corpus = synth::generate_corpus(config.corpus);
  prepare_output_dir(out, force);
  synth::write_corpus(corpus, out);
  log << "wrote " << corpus.scenes.size() << " scenes to " << out.string() << " (seed "
      << config.corpus.seed << ", config " << hex64(config.corpus.hash()) << ")\n";
}

void save_model(const fs::path& path, const model::CaptionModel& model,
                const nlohmann::json& metadata) {
  nlohmann::json meta = metadata;
  meta["model"] = model.config().to_json();
  ad::save_checkpoint(path, model.params(), meta.dump());
}

TrainedModel load_model(const fs::path& path) {
  ad::Checkpoint ck = ad::load_checkpoint(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.metadata);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed checkpoint metadata");
  }
  if (!meta.contains("model")) throw std::runtime_error(path.string() + ": no model config");
  auto mc = model::ModelConfig::from_json(meta.at("model"));
  return {model::CaptionModel(mc, std::move(ck.params)), std::move(meta)};
}

void cmd_train(const ExperimentConfig& config, model::Variant variant, const fs::path& corpus_dir,
               const fs::path& out, bool force, std::ostream& log) {
  if (!fs::exists(corpus_dir / "manifest.json")) {
    throw ConfigError("corpus " + corpus_dir.string() + " not found (no manifest.json)");
  }
  const synth::Corpus corpus = synth::read_corpus(corpus_dir);
  prepare_output_dir(out, force);

  ExperimentConfig effective = config;
  effective.corpus = corpus.config;
  model::CaptionModel model(effective.model_config(variant, corpus.lexicon),
                            config.model.init_seed);
  const auto train_split = corpus.split(synth::Split::kTrain);
  const auto val_split = corpus.split(synth::Split::kVal);

  std::ofstream log_file(out / "train_log.jsonl");
  if (!log_file) throw std::runtime_error("cannot write " + (out / "train_log.jsonl").string());
  const auto result = train::fit(model, train_split, val_split, corpus.lexicon, config.train,
                                 [&](const train::EpochRecord& r) {
                                   log_file << train::record_to_json(r).dump() << '\n';
                                   log_file.flush();
                                   log << "epoch " << r.epoch << " loss " << r.train_loss << " "
                                       << config.train.val_metric << " " << r.val_metric
                                       << " lr " << r.lr << '\n';
                                 });
  const nlohmann::json meta{{"variant", std::string(model::variant_name(variant))},
                            {"config_hash", config.hash()},
                            {"corpus_config_hash", hex64(corpus.config.hash())},
                            {"vocab_hash", hex64(corpus.lexicon.words().hash())},
                            {"best_epoch", result.best_epoch},
                            {"best_metric", result.best_metric},
                            {"epochs", result.log.size()}};
  save_model(out / "checkpoint.bin", model, meta);
  nlohmann::json run = meta;
  run["experiment"] = config.to_json();
  run["model"] = model.config().to_json();
  write_text(out / "run.json", run.dump(2) + "\n");
  log << "best " << config.train.val_metric << " " << result.best_metric << " at epoch "
      << result.best_epoch << "; checkpoint " << (out / "checkpoint.bin").string() << '\n';
}

std::vector<metrics::ReportRow> evaluate_model(const model::CaptionModel& model,
                                               const synth::Corpus& corpus,
                                               const EvalOptions& options,
                                               const std::string& config_hash) {
  const auto test = corpus.split(synth::Split::kTest);
  if (test.empty()) throw ConfigError("corpus has an empty test split");
  const std::size_t k =
      options.recall_k.value_or(std::min<std::size_t>(100, corpus.config.max_relations));

  std::vector<metrics::QualityBucket> buckets;
  for (const synth::Scene* s : test) {
    buckets.push_back(metrics::bucket(metrics::sgdet_recall_at_k(s->predicted, s->gold, k)));
  }

  model::DecodeOptions dopts;
  dopts.beam_width = options.beam;
  dopts.max_length = options.max_length;

  std::vector<train::GraphSource> sources{train::GraphSource::kPredicted};
  if (options.gold_graphs) sources.push_back(train::GraphSource::kGold);

  std::vector<metrics::ReportRow> rows;
  for (auto source : sources) {
    const auto captions = train::decode_scenes(model, test, corpus.lexicon, dopts, source);
    std::vector<metrics::SpiceBreakdown> spice;
    std::vector<double> recall;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto tuples = synth::tuples_from_caption(captions[i], corpus.lexicon);
      spice.push_back(metrics::spice_breakdown(tuples, test[i]->gold_tuples));
      const auto& g = source == train::GraphSource::kGold ? test[i]->gold : test[i]->predicted;
      recall.push_back(metrics::sgdet_recall_at_k(g, test[i]->gold, k));
    }

    auto group_row = [&](const std::string& label, auto&& include) {
      metrics::ReportRow row;
      row.model = std::string(model::variant_name(model.config().variant));
      row.graphs = source == train::GraphSource::kGold ? "gold" : "predicted";
      row.bucket = label;
      row.config_hash = config_hash;
      std::vector<metrics::Sentence> cands;
      std::vector<metrics::References> refs;
      std::vector<metrics::SpiceBreakdown> sp;
      double rsum = 0.0;
      for (std::size_t i = 0; i < test.size(); ++i) {
        if (!include(i)) continue;
        cands.push_back(captions[i]);
        refs.push_back(test[i]->captions);
        sp.push_back(spice[i]);
        rsum += recall[i];
      }
      row.n_scenes = cands.size();
      if (row.n_scenes > 0) {
        row.bleu4 = metrics::bleu4(cands, refs);
        row.rouge_l = metrics::rouge_l(cands, refs);
        row.spice = metrics::mean_breakdown(sp);
        row.mean_recall = rsum / double(row.n_scenes);
      }
      rows.push_back(std::move(row));
    };
    group_row("all", [](std::size_t) { return true; });
    if (options.buckets) {
      for (auto b : {metrics::QualityBucket::kLow, metrics::QualityBucket::kAverage,
                     metrics::QualityBucket::kHigh}) {
        group_row(std::string(metrics::bucket_name(b)),
                  [&](std::size_t i) { return buckets[i] == b; });
      }
    }
  }
  return rows;
}

void cmd_evaluate(const fs::path& checkpoint, const fs::path& corpus_dir,
                  const EvalOptions& options, const std::optional<fs::path>& out_csv,
                  std::ostream& out) {
  TrainedModel trained = load_model(checkpoint);
  const synth::Corpus corpus = synth::read_corpus(corpus_dir);
  const std::string vocab = hex64(corpus.lexicon.words().hash());
  if (trained.metadata.value("vocab_hash", std::string()) != vocab) {
    throw ConfigError("checkpoint vocabulary hash " +
                      trained.metadata.value("vocab_hash", std::string("<none>")) +
                      " does not match corpus vocabulary hash " + vocab);
  }
  const auto& mc = trained.model.config();
  if (mc.image_dim != corpus.config.image_dim || mc.graph_dim != corpus.config.graph_dim) {
    throw ConfigError("checkpoint feature dimensions do not match the corpus");
  }
  const auto rows = evaluate_model(trained.model, corpus, options,
                                   trained.metadata.value("config_hash", std::string()));
  if (out_csv) {
    std::ofstream f(*out_csv);
    if (!f) throw std::runtime_error("cannot write " + out_csv->string());
    metrics::write_report_csv(f, rows);
    if (!f) throw std::runtime_error("write failed for " + out_csv->string());
  } else {
    metrics::write_report_csv(out, rows);
  }
}

bool cmd_gradcheck(std::optional<ad::OpKind> fault, std::ostream& out) {
  return print_suite(out, run_gradcheck_suite(1e-4, fault));
}

}  // namespace sgcap::exp
