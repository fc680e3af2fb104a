#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgcap/decode.hpp"
#include "sgcap/decoder.hpp"
#include "sgcap/parameters.hpp"
#include "sgcap/synthetic.hpp"

namespace sgcap::train {

struct AdamaxOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adamax update of every parameter named in `grads`; increments the
/// store's step count. Throws std::domain_error naming the parameter when a
/// gradient is not finite, and std::invalid_argument on a name or shape
/// mismatch. Nothing is modified when it throws.
void adamax_step(ad::ParameterStore& params, const ad::GradientMap& grads, double lr,
                 const AdamaxOptions& options = {});

/// Reduce-on-plateau learning rate with early stopping. Call observe() once
/// per finished epoch; lr() is the rate for the next epoch.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double factor, std::size_t decay_patience,
                  std::size_t stop_patience, std::size_t max_epochs);

  /// Returns true when `metric` improves on the best seen so far.
  bool observe(double metric);
  bool should_stop() const;

  double lr() const { return lr_; }
  std::size_t epochs() const { return epochs_; }
  std::size_t bad_epochs() const { return bad_; }
  double best() const { return best_; }

 private:
  double lr_;
  double factor_;
  std::size_t decay_patience_;
  std::size_t stop_patience_;
  std::size_t max_epochs_;
  std::size_t epochs_ = 0;
  std::size_t bad_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

struct TrainConfig {
  double lr = 0.002;
  double decay_factor = 0.8;
  std::size_t decay_patience = 8;
  std::size_t early_stop_patience = 20;
  std::size_t max_epochs = 50;
  double dropout = 0.5;
  std::size_t batch_size = 16;
  std::string val_metric = "bleu4";  // or "rouge_l"
  std::size_t val_beam = 1;          // 1 = greedy
  std::size_t max_caption_length = 32;
  /// Stop as soon as the validation metric reaches this value.
  std::optional<double> target_metric;
  std::uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_metric = 0.0;
  double lr = 0.0;  // rate used during the epoch

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  ad::ParameterStore best_params;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which graph a scene feeds to graph variants.
enum class GraphSource { kPredicted, kGold };

model::ImageInput scene_input(const synth::Scene& scene, model::Variant variant,
                              GraphSource source);

/// Decodes one caption per scene, returned as words.
std::vector<std::vector<std::string>> decode_scenes(const model::CaptionModel& model,
                                                    std::span<const synth::Scene* const> scenes,
                                                    const synth::Lexicon& lex,
                                                    const model::DecodeOptions& options,
                                                    GraphSource source = GraphSource::kPredicted);

/// Validation score of `model` under `metric` ("bleu4" or "rouge_l").
double evaluate_metric(const model::CaptionModel& model,
                       std::span<const synth::Scene* const> scenes, const synth::Lexicon& lex,
                       const std::string& metric, const model::DecodeOptions& options);

/// Inverted dropout masks for a caption of `steps` predicted tokens.
std::vector<model::StepDropout> sample_dropout(std::size_t steps, std::size_t embed_dim,
                                               std::size_t hidden_dim, double p,
                                               std::mt19937_64& rng);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Teacher-forced training with Adamax, seeded shuffling and fresh dropout
/// masks, plateau decay and early stopping on the validation metric. The
/// model ends holding the best parameters. Throws TrainingDiverged on a
/// non-finite loss.
TrainResult fit(model::CaptionModel& model, std::span<const synth::Scene* const> train,
                std::span<const synth::Scene* const> val, const synth::Lexicon& lex,
                const TrainConfig& config, const EpochCallback& on_epoch = {});

nlohmann::json record_to_json(const EpochRecord& r);
void write_log_jsonl(std::ostream& out, std::span<const EpochRecord> log);

}  // namespace sgcap::train
