#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sgcap/scene_graph.hpp"
#include "sgcap/tensor.hpp"
#include "sgcap/tuples.hpp"
#include "sgcap/vocabulary.hpp"

namespace sgcap::synth {

struct CorpusConfig {
  std::size_t object_vocab = 20;
  std::size_t predicate_vocab = 10;
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  std::size_t min_relations = 2;
  std::size_t max_relations = 5;
  std::size_t object_slots = 8;  // padded image rows n
  std::size_t image_dim = 32;    // d
  std::size_t graph_dim = 32;    // k
  double noise = 0.1;            // feature sigma
  /// Per-scene corruption rate, drawn from `corruption_rates` with
  /// probabilities proportional to `corruption_weights` (uniform if empty).
  std::vector<double> corruption_rates{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> corruption_weights{1.0, 1.0, 1.0, 2.0, 3.0};
  std::size_t scene_count = 200;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static CorpusConfig from_json(const nlohmann::json& j);
  std::uint64_t hash() const;
};

/// Word, object and predicate vocabularies for one corpus configuration.
class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(Vocabulary words, Vocabulary objects, Vocabulary predicates);
  static Lexicon build(std::size_t object_vocab, std::size_t predicate_vocab);

  const Vocabulary& words() const { return words_; }
  const Vocabulary& objects() const { return objects_; }
  const Vocabulary& predicates() const { return predicates_; }

  /// Word ids wrapped in start/end; unknown words map to the unk id.
  std::vector<std::size_t> encode(std::span<const std::string> caption) const;
  /// Inverse of encode for generated ids; reserved ids are dropped.
  std::vector<std::string> decode(std::span<const std::size_t> ids) const;

  void save(const std::filesystem::path& dir) const;
  static Lexicon load(const std::filesystem::path& dir);

 private:
  Vocabulary words_, objects_, predicates_;
};

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);

struct Scene {
  std::size_t id = 0;
  Split split = Split::kTrain;
  double corruption_rate = 0.0;
  sg::SceneGraph gold;
  sg::SceneGraph predicted;
  ad::Tensor features;          // object_slots x image_dim
  std::vector<double> mask;     // object_slots, 1 for real objects
  std::vector<std::vector<std::string>> captions;
  CaptionTuples gold_tuples;
};

struct Corpus {
  CorpusConfig config;
  Lexicon lexicon;
  std::vector<Scene> scenes;

  std::vector<const Scene*> split(Split s) const;
};

/// Fixed per-label embeddings plus feature noise.
class FeatureBank {
 public:
  FeatureBank(const CorpusConfig& config);

  std::vector<double> object_feature(std::size_t label, std::mt19937_64& rng) const;
  std::vector<double> predicate_feature(std::size_t predicate, std::mt19937_64& rng) const;
  std::vector<double> image_row(std::size_t label, std::mt19937_64& rng) const;
  std::size_t object_vocab() const { return object_graph_.size(); }
  std::size_t predicate_vocab() const { return predicate_graph_.size(); }

 private:
  std::vector<double> noisy(const std::vector<double>& base, std::mt19937_64& rng) const;

  double noise_;
  std::vector<std::vector<double>> object_image_, object_graph_, predicate_graph_;
};

/// Template rendering, one "a S P a O ." sentence per relation in order.
std::vector<std::string> render_caption(const sg::SceneGraph& g, const Lexicon& lex);

/// Object labels used by relations and the relation triplets, as strings.
CaptionTuples graph_tuples(const sg::SceneGraph& g, const Lexicon& lex);

/// Template inverse. Total: malformed sentences contribute nothing past
/// the prefix already recognised; output is deduplicated.
CaptionTuples tuples_from_caption(std::span<const std::string> caption, const Lexicon& lex);

/// Each relation independently corrupted with probability `rate` by one of
/// {drop, new predicate, new subject or object label}. Correct relations
/// score U(0.5, 1), corrupted ones U(0, 0.5). Features are copied from the
/// gold graph where the vertex is unchanged.
sg::SceneGraph corrupt_graph(const sg::SceneGraph& gold, double rate, std::uint64_t seed,
                             const FeatureBank& bank);

Corpus generate_corpus(const CorpusConfig& config);

/// Corpus directory: manifest.json, words.txt, objects.txt, predicates.txt,
/// scenes/NNNNN.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

nlohmann::json scene_to_json(const Scene& s, const Lexicon& lex);
Scene scene_from_json(const nlohmann::json& j, const Lexicon& lex, const CorpusConfig& config);

/// splitmix64 finaliser, used to derive per-scene seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace sgcap::synth
