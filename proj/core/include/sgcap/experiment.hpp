#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgcap/decoder.hpp"
#include "sgcap/metrics.hpp"
#include "sgcap/synthetic.hpp"
#include "sgcap/trainer.hpp"

namespace sgcap::exp {

struct ModelSizes {
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 64;
  std::size_t attention_dim = 0;
  std::uint64_t init_seed = 3;
};

struct EvalOptions {
  std::size_t beam = 5;
  bool buckets = true;
  bool gold_graphs = false;
  /// Recall cutoff; default min(100, corpus max_relations).
  std::optional<std::size_t> recall_k;
  std::size_t max_length = 32;
};

/// One experiment file: corpus, training, model sizes, variants and
/// evaluation options. Relative paths resolve against the file's directory.
struct ExperimentConfig {
  synth::CorpusConfig corpus;
  train::TrainConfig train;
  ModelSizes model;
  std::vector<model::Variant> variants{model::Variant::kButd};
  EvalOptions eval;
  std::optional<std::filesystem::path> corpus_dir;

  /// Throws ConfigError for unknown keys' values, bad variants or invalid
  /// sections.
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  std::string hash() const;
  void validate() const;

  model::ModelConfig model_config(model::Variant v, const synth::Lexicon& lex) const;
};

model::Variant parse_variant_or_throw(const std::string& name);

/// Refuses a non-empty `dir` unless `force`; creates it.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

void cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out, bool force,
                  std::ostream& log);

struct TrainedModel {
  model::CaptionModel model;
  nlohmann::json metadata;
};

void save_model(const std::filesystem::path& path, const model::CaptionModel& model,
                const nlohmann::json& metadata);
TrainedModel load_model(const std::filesystem::path& path);

/// Writes checkpoint.bin, train_log.jsonl and run.json into `out`.
void cmd_train(const ExperimentConfig& config, model::Variant variant,
               const std::filesystem::path& corpus_dir, const std::filesystem::path& out,
               bool force, std::ostream& log);

/// Report rows over the test split: "all" plus low/average/high when
/// buckets are on, for predicted graphs and, in gold mode, again for gold
/// graphs. Scenes are bucketed by predicted-graph recall in both modes.
std::vector<metrics::ReportRow> evaluate_model(const model::CaptionModel& model,
                                               const synth::Corpus& corpus,
                                               const EvalOptions& options,
                                               const std::string& config_hash);

void cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& corpus_dir,
                  const EvalOptions& options, const std::optional<std::filesystem::path>& out_csv,
                  std::ostream& out);

/// Returns true when every check passed.
bool cmd_gradcheck(std::optional<ad::OpKind> fault, std::ostream& out);

}  // namespace sgcap::exp
