#include "sgcap/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sgcap/decoder.hpp"
#include "sgcap/errors.hpp"

namespace sgcap::synth {
namespace {

constexpr std::array<const char*, 20> kObjectNames{
    "man",   "woman", "boy",   "girl",  "dog",  "cat",   "horse", "bike",  "car",   "tree",
    "table", "chair", "hat",   "shirt", "ball", "kite",  "bench", "plate", "cup",   "phone"};
constexpr std::array<const char*, 10> kPredicateNames{
    "rides", "wears", "holds", "near", "behind", "under", "above", "carries", "watches", "touches"};

constexpr const char* kArticle = "a";
constexpr const char* kStop = ".";

std::vector<double> gaussian_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

std::size_t uniform_index(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::size_t other_than(std::size_t exclude, std::size_t n, std::mt19937_64& rng) {
  const std::size_t r = uniform_index(0, n - 2, rng);
  return r >= exclude ? r + 1 : r;
}

std::string scene_file(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.json", id);
  return buf;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void CorpusConfig::validate() const {
  if (object_vocab == 0) throw ConfigError("corpus object_vocab must be positive");
  if (predicate_vocab < 2) throw ConfigError("corpus predicate_vocab must be at least 2");
  if (object_vocab < 2) throw ConfigError("corpus object_vocab must be at least 2");
  if (min_objects > max_objects) throw ConfigError("corpus objects range is empty");
  if (min_relations > max_relations) throw ConfigError("corpus relations range is empty");
  if (max_objects > object_vocab) {
    throw ConfigError("corpus object_vocab " + std::to_string(object_vocab) +
                      " is too small for " + std::to_string(max_objects) +
                      " distinct objects per scene");
  }
  if (max_objects > object_slots) {
    throw ConfigError("corpus object_slots must be at least max_objects");
  }
  if (min_objects < 2) throw ConfigError("corpus min_objects must be at least 2");
  if (min_relations < 1) throw ConfigError("corpus min_relations must be at least 1");
  if (min_relations > min_objects * (min_objects - 1)) {
    throw ConfigError("corpus min_relations exceeds the ordered pairs of min_objects");
  }
  if (image_dim == 0 || graph_dim == 0) throw ConfigError("corpus feature dims must be positive");
  if (!(noise >= 0.0)) throw ConfigError("corpus noise must be non-negative");
  if (corruption_rates.empty()) throw ConfigError("corpus corruption_rates is empty");
  for (double p : corruption_rates) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("corpus corruption rate outside [0, 1]");
  }
  if (!corruption_weights.empty()) {
    if (corruption_weights.size() != corruption_rates.size()) {
      throw ConfigError("corpus corruption_weights must match corruption_rates");
    }
    double total = 0.0;
    for (double w : corruption_weights) {
      if (!(w >= 0.0)) throw ConfigError("corpus corruption weight is negative");
      total += w;
    }
    if (total <= 0.0) throw ConfigError("corpus corruption weights sum to zero");
  }
  if (scene_count == 0) throw ConfigError("corpus scene_count must be positive");
  if (!(train_fraction > 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0)) {
    throw ConfigError("corpus split fractions must satisfy 0 < train, train + val <= 1");
  }
}

nlohmann::json CorpusConfig::to_json() const {
  return {{"object_vocab", object_vocab},
          {"predicate_vocab", predicate_vocab},
          {"min_objects", min_objects},
          {"max_objects", max_objects},
          {"min_relations", min_relations},
          {"max_relations", max_relations},
          {"object_slots", object_slots},
          {"image_dim", image_dim},
          {"graph_dim", graph_dim},
          {"noise", noise},
          {"corruption_rates", corruption_rates},
          {"corruption_weights", corruption_weights},
          {"scene_count", scene_count},
          {"train_fraction", train_fraction},
          {"val_fraction", val_fraction},
          {"seed", seed}};
}

CorpusConfig CorpusConfig::from_json(const nlohmann::json& j) {
  CorpusConfig c;
  try {
    c.object_vocab = j.value("object_vocab", c.object_vocab);
    c.predicate_vocab = j.value("predicate_vocab", c.predicate_vocab);
    c.min_objects = j.value("min_objects", c.min_objects);
    c.max_objects = j.value("max_objects", c.max_objects);
    c.min_relations = j.value("min_relations", c.min_relations);
    c.max_relations = j.value("max_relations", c.max_relations);
    c.object_slots = j.value("object_slots", c.object_slots);
    c.image_dim = j.value("image_dim", c.image_dim);
    c.graph_dim = j.value("graph_dim", c.graph_dim);
    c.noise = j.value("noise", c.noise);
    if (j.contains("corruption_rate")) {
      c.corruption_rates = {j.at("corruption_rate").get<double>()};
      c.corruption_weights.clear();
    }
    if (j.contains("corruption_rates")) {
      c.corruption_rates = j.at("corruption_rates").get<std::vector<double>>();
      c.corruption_weights = j.value("corruption_weights", std::vector<double>{});
    }
    c.scene_count = j.value("scene_count", c.scene_count);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("corpus config: ") + e.what());
  }
  return c;
}

std::uint64_t CorpusConfig::hash() const { return fnv1a(to_json().dump()); }

Lexicon::Lexicon(Vocabulary words, Vocabulary objects, Vocabulary predicates)
    : words_(std::move(words)), objects_(std::move(objects)), predicates_(std::move(predicates)) {
  if (words_.size() < model::token::kReservedCount) {
    throw ConfigError("word vocabulary lacks the reserved tokens");
  }
  for (const auto& t : objects_.tokens()) (void)words_.id(t);
  for (const auto& t : predicates_.tokens()) (void)words_.id(t);
}

Lexicon Lexicon::build(std::size_t object_vocab, std::size_t predicate_vocab) {
  std::vector<std::string> objs, preds;
  for (std::size_t i = 0; i < object_vocab; ++i) {
    objs.push_back(i < kObjectNames.size() ? kObjectNames[i] : "obj" + std::to_string(i));
  }
  for (std::size_t i = 0; i < predicate_vocab; ++i) {
    preds.push_back(i < kPredicateNames.size() ? kPredicateNames[i] : "rel" + std::to_string(i));
  }
  std::vector<std::string> words{"<start>", "<end>", "<pad>", "<unk>", kArticle, kStop};
  words.insert(words.end(), objs.begin(), objs.end());
  words.insert(words.end(), preds.begin(), preds.end());
  return Lexicon(Vocabulary(words), Vocabulary(objs), Vocabulary(preds));
}

std::vector<std::size_t> Lexicon::encode(std::span<const std::string> caption) const {
  std::vector<std::size_t> ids{model::token::kStart};
  for (const auto& w : caption) ids.push_back(words_.find(w).value_or(model::token::kUnk));
  ids.push_back(model::token::kEnd);
  return ids;
}

std::vector<std::string> Lexicon::decode(std::span<const std::size_t> ids) const {
  std::vector<std::string> out;
  for (std::size_t id : ids) {
    if (id < model::token::kReservedCount || id >= words_.size()) continue;
    out.push_back(words_.token(id));
  }
  return out;
}

void Lexicon::save(const std::filesystem::path& dir) const {
  words_.save(dir / "words.txt");
  objects_.save(dir / "objects.txt");
  predicates_.save(dir / "predicates.txt");
}

Lexicon Lexicon::load(const std::filesystem::path& dir) {
  return Lexicon(Vocabulary::load(dir / "words.txt"), Vocabulary::load(dir / "objects.txt"),
                 Vocabulary::load(dir / "predicates.txt"));
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::vector<const Scene*> Corpus::split(Split s) const {
  std::vector<const Scene*> out;
  for (const auto& scene : scenes) {
    if (scene.split == s) out.push_back(&scene);
  }
  return out;
}

FeatureBank::FeatureBank(const CorpusConfig& config) : noise_(config.noise) {
  std::mt19937_64 rng(mix_seed(config.seed, 0xfeed));
  for (std::size_t i = 0; i < config.object_vocab; ++i) {
    object_image_.push_back(gaussian_vector(config.image_dim, rng));
    object_graph_.push_back(gaussian_vector(config.graph_dim, rng));
  }
  for (std::size_t i = 0; i < config.predicate_vocab; ++i) {
    predicate_graph_.push_back(gaussian_vector(config.graph_dim, rng));
  }
}

std::vector<double> FeatureBank::noisy(const std::vector<double>& base,
                                       std::mt19937_64& rng) const {
  std::vector<double> v = base;
  if (noise_ > 0.0) {
    std::normal_distribution<double> dist(0.0, noise_);
    for (double& x : v) x += dist(rng);
  }
  return v;
}

std::vector<double> FeatureBank::object_feature(std::size_t label, std::mt19937_64& rng) const {
  return noisy(object_graph_.at(label), rng);
}

std::vector<double> FeatureBank::predicate_feature(std::size_t predicate,
                                                   std::mt19937_64& rng) const {
  return noisy(predicate_graph_.at(predicate), rng);
}

std::vector<double> FeatureBank::image_row(std::size_t label, std::mt19937_64& rng) const {
  return noisy(object_image_.at(label), rng);
}

std::vector<std::string> render_caption(const sg::SceneGraph& g, const Lexicon& lex) {
  std::vector<std::string> words;
  for (const auto& r : g.relations()) {
    words.insert(words.end(), {kArticle, lex.objects().token(g.objects()[r.subject].label),
                               lex.predicates().token(r.predicate), kArticle,
                               lex.objects().token(g.objects()[r.object].label), kStop});
  }
  return words;
}

CaptionTuples graph_tuples(const sg::SceneGraph& g, const Lexicon& lex) {
  std::set<std::string> objects;
  std::set<LabelTriplet> relations;
  for (const auto& r : g.relations()) {
    const auto& s = lex.objects().token(g.objects()[r.subject].label);
    const auto& o = lex.objects().token(g.objects()[r.object].label);
    objects.insert(s);
    objects.insert(o);
    relations.insert({s, lex.predicates().token(r.predicate), o});
  }
  return {{objects.begin(), objects.end()}, {relations.begin(), relations.end()}};
}

CaptionTuples tuples_from_caption(std::span<const std::string> caption, const Lexicon& lex) {
  std::set<std::string> objects;
  std::set<LabelTriplet> relations;
  // Sentence state: position within "a S P a O ." and the labels seen so far.
  std::size_t pos = 0;
  LabelTriplet cur;
  bool junk = false;
  for (const std::string& w : caption) {
    if (w == kStop) {
      pos = 0;
      junk = false;
      continue;
    }
    if (junk) continue;
    bool ok = false;
    switch (pos) {
      case 0:
      case 3: ok = w == kArticle; break;
      case 1:
      case 4:
        ok = lex.objects().find(w).has_value();
        if (ok) {
          objects.insert(w);
          cur[pos == 1 ? 0 : 2] = w;
        }
        break;
      case 2:
        ok = lex.predicates().find(w).has_value();
        if (ok) cur[1] = w;
        break;
      default: ok = false;
    }
    if (!ok) {
      junk = true;
      continue;
    }
    if (++pos == 5) relations.insert(cur);
  }
  return {{objects.begin(), objects.end()}, {relations.begin(), relations.end()}};
}

sg::SceneGraph corrupt_graph(const sg::SceneGraph& gold, double rate, std::uint64_t seed,
                             const FeatureBank& bank) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution corrupt(rate);
  std::uniform_real_distribution<double> high(0.5, 1.0), low(0.0, 0.5);
  std::vector<sg::ObjectVertex> objects = gold.objects();
  std::vector<sg::RelationVertex> relations;
  for (const auto& r : gold.relations()) {
    sg::RelationVertex out = r;
    if (!corrupt(rng)) {
      out.score = high(rng);
      relations.push_back(std::move(out));
      continue;
    }
    switch (uniform_index(0, 2, rng)) {
      case 0: continue;  // dropped
      case 1:
        out.predicate = other_than(r.predicate, bank.predicate_vocab(), rng);
        out.feature = bank.predicate_feature(out.predicate, rng);
        break;
      default: {
        const bool subject = uniform_index(0, 1, rng) == 0;
        const std::size_t old = objects[subject ? r.subject : r.object].label;
        const std::size_t label = other_than(old, bank.object_vocab(), rng);
        objects.push_back({label, bank.object_feature(label, rng)});
        (subject ? out.subject : out.object) = objects.size() - 1;
      }
    }
    out.score = low(rng);
    relations.push_back(std::move(out));
  }
  return sg::SceneGraph(gold.feature_dim(), std::move(objects), std::move(relations));
}

Corpus generate_corpus(const CorpusConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.config = config;
  corpus.lexicon = Lexicon::build(config.object_vocab, config.predicate_vocab);
  const FeatureBank bank(config);

  std::vector<double> weights = config.corruption_weights;
  if (weights.empty()) weights.assign(config.corruption_rates.size(), 1.0);

  const auto n_train = std::size_t(double(config.scene_count) * config.train_fraction + 0.5);
  const auto n_val = std::size_t(double(config.scene_count) * config.val_fraction + 0.5);

  for (std::size_t i = 0; i < config.scene_count; ++i) {
    std::mt19937_64 rng(mix_seed(config.seed, i + 1));
    Scene s;
    s.id = i;
    s.split = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);

    const std::size_t m = uniform_index(config.min_objects, config.max_objects, rng);
    std::vector<std::size_t> labels(config.object_vocab);
    for (std::size_t l = 0; l < labels.size(); ++l) labels[l] = l;
    std::shuffle(labels.begin(), labels.end(), rng);
    labels.resize(m);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) {
        if (a != b) pairs.emplace_back(a, b);
      }
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const std::size_t r = std::min(
        pairs.size(), uniform_index(config.min_relations, config.max_relations, rng));

    struct Draft {
      std::size_t subject, predicate, object;
    };
    std::vector<Draft> drafts;
    for (std::size_t j = 0; j < r; ++j) {
      drafts.push_back(
          {pairs[j].first, uniform_index(0, config.predicate_vocab - 1, rng), pairs[j].second});
    }
    std::sort(drafts.begin(), drafts.end(), [&](const Draft& a, const Draft& b) {
      return std::tuple(labels[a.subject], a.predicate, labels[a.object]) <
             std::tuple(labels[b.subject], b.predicate, labels[b.object]);
    });

    std::vector<sg::ObjectVertex> objects;
    s.features = ad::Tensor(config.object_slots, config.image_dim);
    s.mask.assign(config.object_slots, 0.0);
    for (std::size_t o = 0; o < m; ++o) {
      objects.push_back({labels[o], bank.object_feature(labels[o], rng)});
      const auto row = bank.image_row(labels[o], rng);
      std::copy(row.begin(), row.end(), s.features.data().begin() + std::ptrdiff_t(o * config.image_dim));
      s.mask[o] = 1.0;
    }
    std::vector<sg::RelationVertex> relations;
    for (const Draft& d : drafts) {
      relations.push_back({d.predicate, bank.predicate_feature(d.predicate, rng), d.subject,
                           d.object, 1.0});
    }
    s.gold = sg::SceneGraph(config.graph_dim, std::move(objects), std::move(relations));

    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    s.corruption_rate = config.corruption_rates[pick(rng)];
    s.predicted = corrupt_graph(s.gold, s.corruption_rate, mix_seed(config.seed ^ 0xc0ffee, i),
                                bank);
    s.captions = {render_caption(s.gold, corpus.lexicon)};
    s.gold_tuples = graph_tuples(s.gold, corpus.lexicon);
    corpus.scenes.push_back(std::move(s));
  }
  return corpus;
}

nlohmann::json scene_to_json(const Scene& s, const Lexicon& lex) {
  nlohmann::json caps = nlohmann::json::array();
  for (const auto& c : s.captions) caps.push_back(join(c));
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t r = 0; r < s.features.rows(); ++r) {
    const auto row = s.features.row_span(r);
    feats.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"id", s.id},
          {"split", std::string(split_name(s.split))},
          {"corruption_rate", s.corruption_rate},
          {"caption", caps},
          {"features", feats},
          {"mask", s.mask},
          {"gold", sg::graph_to_json(s.gold, lex.objects(), lex.predicates())},
          {"predicted", sg::graph_to_json(s.predicted, lex.objects(), lex.predicates())}};
}

Scene scene_from_json(const nlohmann::json& j, const Lexicon& lex, const CorpusConfig& config) {
  Scene s;
  try {
    s.id = j.at("id").get<std::size_t>();
    const auto split = j.at("split").get<std::string>();
    if (split == "train") {
      s.split = Split::kTrain;
    } else if (split == "val") {
      s.split = Split::kVal;
    } else if (split == "test") {
      s.split = Split::kTest;
    } else {
      throw std::invalid_argument("unknown split '" + split + "'");
    }
    s.corruption_rate = j.at("corruption_rate").get<double>();
    for (const auto& c : j.at("caption")) s.captions.push_back(split_words(c.get<std::string>()));
    const auto rows = j.at("features").get<std::vector<std::vector<double>>>();
    s.features = ad::Tensor(rows.size(), config.image_dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != config.image_dim) throw std::invalid_argument("feature row width");
      std::copy(rows[r].begin(), rows[r].end(),
                s.features.data().begin() + std::ptrdiff_t(r * config.image_dim));
    }
    s.mask = j.at("mask").get<std::vector<double>>();
    if (s.mask.size() != rows.size()) throw std::invalid_argument("mask length");
    s.gold = sg::graph_from_json(j.at("gold"), lex.objects(), lex.predicates(), config.graph_dim);
    s.predicted =
        sg::graph_from_json(j.at("predicted"), lex.objects(), lex.predicates(), config.graph_dim);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed scene document: ") + e.what());
  }
  s.gold_tuples = graph_tuples(s.gold, lex);
  return s;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "scenes");
  corpus.lexicon.save(dir);
  nlohmann::json manifest{{"format", "sgcap-corpus-1"},
                          {"config", corpus.config.to_json()},
                          {"seed", corpus.config.seed},
                          {"config_hash", hex64(corpus.config.hash())},
                          {"vocab_hash", hex64(corpus.lexicon.words().hash())},
                          {"scene_count", corpus.scenes.size()}};
  auto write = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
  };
  write(dir / "manifest.json", manifest.dump(2));
  for (const auto& s : corpus.scenes) {
    write(dir / "scenes" / scene_file(s.id), scene_to_json(s, corpus.lexicon).dump());
  }
}

Corpus read_corpus(const std::filesystem::path& dir) {
  auto read_json = [](const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ": " + e.what());
    }
  };
  const auto manifest = read_json(dir / "manifest.json");
  Corpus corpus;
  corpus.config = CorpusConfig::from_json(manifest.at("config"));
  corpus.lexicon = Lexicon::load(dir);
  if (manifest.at("vocab_hash").get<std::string>() != hex64(corpus.lexicon.words().hash())) {
    throw std::runtime_error(dir.string() + ": vocabulary does not match the manifest hash");
  }
  const auto count = manifest.at("scene_count").get<std::size_t>();
  for (std::size_t i = 0; i < count; ++i) {
    const auto path = dir / "scenes" / scene_file(i);
    try {
      corpus.scenes.push_back(scene_from_json(read_json(path), corpus.lexicon, corpus.config));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path.string() + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace sgcap::synth
