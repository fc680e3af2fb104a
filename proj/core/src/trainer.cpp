#include "sgcap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sgcap/errors.hpp"
#include "sgcap/metrics.hpp"

namespace sgcap::train {

void adamax_step(ad::ParameterStore& params, const ad::GradientMap& grads, double lr,
                 const AdamaxOptions& options) {
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) {
      throw std::invalid_argument("adamax_step: gradient for unknown parameter " + name);
    }
    const auto& v = params.value(name);
    if (v.rows() != g.rows() || v.cols() != g.cols()) {
      throw std::invalid_argument("adamax_step: gradient " + g.shape_string() +
                                  " does not match parameter " + name + " " + v.shape_string());
    }
    if (!g.all_finite()) {
      throw std::domain_error("adamax_step: non-finite gradient for parameter " + name);
    }
  }
  const std::size_t t = params.step_count() + 1;
  const double step = lr / (1.0 - std::pow(options.beta1, double(t)));
  for (const auto& [name, g] : grads) {
    ad::ParameterSlot& slot = params.slot(name);
    auto theta = slot.value.data();
    auto m = slot.first_moment.data();
    auto u = slot.inf_norm.data();
    const auto gv = g.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * gv[i];
      u[i] = std::max(options.beta2 * u[i], std::abs(gv[i]));
      theta[i] -= step * m[i] / (u[i] + options.epsilon);
    }
  }
  params.set_step_count(t);
}

PlateauSchedule::PlateauSchedule(double lr, double factor, std::size_t decay_patience,
                                 std::size_t stop_patience, std::size_t max_epochs)
    : lr_(lr),
      factor_(factor),
      decay_patience_(decay_patience),
      stop_patience_(stop_patience),
      max_epochs_(max_epochs) {
  if (decay_patience == 0 || stop_patience == 0 || max_epochs == 0) {
    throw std::invalid_argument("PlateauSchedule: patiences and max epochs must be positive");
  }
}

bool PlateauSchedule::observe(double metric) {
  ++epochs_;
  if (metric > best_) {
    best_ = metric;
    bad_ = 0;
    return true;
  }
  ++bad_;
  if (bad_ % decay_patience_ == 0) lr_ *= factor_;
  return false;
}

bool PlateauSchedule::should_stop() const {
  return bad_ >= stop_patience_ || epochs_ >= max_epochs_;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0 && lr <= 1.0)) throw ConfigError("train lr must be in (0, 1]");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw ConfigError("train decay_factor must be in (0, 1]");
  }
  if (decay_patience == 0 || early_stop_patience == 0) {
    throw ConfigError("train patiences must be positive");
  }
  if (max_epochs == 0) throw ConfigError("train max_epochs must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train dropout must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("train batch_size must be positive");
  if (val_metric != "bleu4" && val_metric != "rouge_l") {
    throw ConfigError("train val_metric must be bleu4 or rouge_l");
  }
  if (val_beam == 0) throw ConfigError("train val_beam must be at least 1");
  if (max_caption_length == 0) throw ConfigError("train max_caption_length must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j{{"lr", lr},
                   {"decay_factor", decay_factor},
                   {"decay_patience", decay_patience},
                   {"early_stop_patience", early_stop_patience},
                   {"max_epochs", max_epochs},
                   {"dropout", dropout},
                   {"batch_size", batch_size},
                   {"val_metric", val_metric},
                   {"val_beam", val_beam},
                   {"max_caption_length", max_caption_length},
                   {"seed", seed}};
  if (target_metric) j["target_metric"] = *target_metric;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.decay_factor = j.value("decay_factor", c.decay_factor);
    c.decay_patience = j.value("decay_patience", c.decay_patience);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.dropout = j.value("dropout", c.dropout);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.val_metric = j.value("val_metric", c.val_metric);
    c.val_beam = j.value("val_beam", c.val_beam);
    c.max_caption_length = j.value("max_caption_length", c.max_caption_length);
    if (j.contains("target_metric")) c.target_metric = j.at("target_metric").get<double>();
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

model::ImageInput scene_input(const synth::Scene& scene, model::Variant variant,
                              GraphSource source) {
  model::ImageInput in;
  in.features = &scene.features;
  in.mask = scene.mask;
  if (model::uses_graph(variant)) {
    in.graph = source == GraphSource::kGold ? &scene.gold : &scene.predicted;
  }
  return in;
}

std::vector<std::vector<std::string>> decode_scenes(const model::CaptionModel& model,
                                                    std::span<const synth::Scene* const> scenes,
                                                    const synth::Lexicon& lex,
                                                    const model::DecodeOptions& options,
                                                    GraphSource source) {
  std::vector<std::vector<std::string>> out;
  out.reserve(scenes.size());
  for (const synth::Scene* s : scenes) {
    const auto input = scene_input(*s, model.config().variant, source);
    const auto hyp = options.beam_width == 1
                         ? model::decode_greedy(model, input, options.max_length)
                         : model::decode_beam(model, input, options);
    out.push_back(lex.decode(hyp.tokens));
  }
  return out;
}

double evaluate_metric(const model::CaptionModel& model,
                       std::span<const synth::Scene* const> scenes, const synth::Lexicon& lex,
                       const std::string& metric, const model::DecodeOptions& options) {
  const auto candidates = decode_scenes(model, scenes, lex, options);
  std::vector<metrics::References> refs;
  for (const synth::Scene* s : scenes) refs.push_back(s->captions);
  if (metric == "rouge_l") return metrics::rouge_l(candidates, refs);
  return metrics::bleu4(candidates, refs);
}

std::vector<model::StepDropout> sample_dropout(std::size_t steps, std::size_t embed_dim,
                                               std::size_t hidden_dim, double p,
                                               std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  auto mask = [&](std::size_t n) {
    ad::Tensor m(1, n);
    for (double& v : m.data()) v = keep(rng) ? scale : 0.0;
    return m;
  };
  std::vector<model::StepDropout> out(steps);
  for (auto& d : out) {
    d.embedding = mask(embed_dim);
    d.hidden = mask(hidden_dim);
  }
  return out;
}

TrainResult fit(model::CaptionModel& model, std::span<const synth::Scene* const> train,
                std::span<const synth::Scene* const> val, const synth::Lexicon& lex,
                const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw ConfigError("fit: empty training split");
  if (val.empty()) throw ConfigError("fit: empty validation split");

  const model::ModelConfig& mc = model.config();
  std::vector<std::vector<std::size_t>> captions;
  for (const synth::Scene* s : train) captions.push_back(lex.encode(s->captions.front()));

  PlateauSchedule schedule(config.lr, config.decay_factor, config.decay_patience,
                           config.early_stop_patience, config.max_epochs);
  model::DecodeOptions decode_opts;
  decode_opts.beam_width = config.val_beam;
  decode_opts.max_length = config.max_caption_length;

  TrainResult result;
  result.best_params = model.params();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  while (true) {
    const std::size_t epoch = schedule.epochs() + 1;
    std::mt19937_64 rng(synth::mix_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = schedule.lr();

    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      ad::GradientMap accum;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const auto& caption = captions[idx];
        std::vector<model::StepDropout> masks;
        if (config.dropout > 0.0) {
          masks = sample_dropout(caption.size() - 1, mc.embed_dim, mc.hidden_dim, config.dropout,
                                 rng);
        }
        ad::Tape tape;
        ad::ParamBinder binder(tape, model.params());
        const ad::Var loss = model.sequence_loss(
            binder, caption, scene_input(*train[idx], mc.variant, GraphSource::kPredicted), masks);
        const double value = loss.value()[0];
        if (!std::isfinite(value)) {
          throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(step) + ": loss is " +
                                 std::to_string(value));
        }
        loss_sum += value;
        const ad::Gradients grads = tape.backward(loss);
        for (const auto& [name, g] : grads.by_name()) {
          auto [it, inserted] = accum.try_emplace(name, g);
          if (!inserted) {
            auto dst = it->second.data();
            const auto src = g.data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
        }
      }
      const double inv = 1.0 / double(end - start);
      for (auto& [name, g] : accum) {
        for (double& v : g.data()) v *= inv;
      }
      try {
        adamax_step(model.params(), accum, lr);
      } catch (const std::domain_error& e) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(step) + ": " + e.what());
      }
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(train.size());
    rec.val_metric = evaluate_metric(model, val, lex, config.val_metric, decode_opts);
    rec.lr = lr;
    result.log.push_back(rec);
    if (schedule.observe(rec.val_metric)) {
      result.best_params = model.params();
      result.best_epoch = epoch;
      result.best_metric = rec.val_metric;
    }
    if (on_epoch) on_epoch(rec);
    if (schedule.should_stop()) break;
    if (config.target_metric && rec.val_metric >= *config.target_metric) break;
  }
  model.params() = result.best_params;
  return result;
}

nlohmann::json record_to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_metric", r.val_metric},
          {"lr", r.lr}};
}

void write_log_jsonl(std::ostream& out, std::span<const EpochRecord> log) {
  for (const auto& r : log) out << record_to_json(r).dump() << '\n';
}

}  // namespace sgcap::train
