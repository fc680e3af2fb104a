#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sgcap/errors.hpp"
#include "sgcap/experiment.hpp"

namespace fs = std::filesystem;
using namespace sgcap;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sgcap_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Cli {
  int code;
  std::string out;
};

Cli cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "cli_output.txt";
  const std::string cmd = std::string(SGCAP_CLI) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream(p) << j.dump(2);
}

exp::ExperimentConfig tiny_config(std::vector<double> rates = {0.0, 0.5, 1.0}) {
  exp::ExperimentConfig ec;
  ec.corpus.scene_count = 30;
  ec.corpus.image_dim = 8;
  ec.corpus.graph_dim = 8;
  ec.corpus.corruption_rates = std::move(rates);
  ec.corpus.corruption_weights = {};
  ec.train.max_epochs = 2;
  ec.train.batch_size = 8;
  ec.model.hidden_dim = 12;
  ec.model.embed_dim = 12;
  ec.eval.beam = 2;
  return ec;
}

}  // namespace

TEST(ExperimentConfig, JsonRoundTripAndHash) {
  exp::ExperimentConfig ec = tiny_config();
  ec.variants = {model::Variant::kButd, model::Variant::kHierSgCgat};
  ec.eval.recall_k = 7;
  const auto back = exp::ExperimentConfig::from_json(ec.to_json());
  EXPECT_EQ(back.to_json(), ec.to_json());
  EXPECT_EQ(back.hash(), ec.hash());
  ec.train.lr = 0.003;
  EXPECT_NE(back.hash(), ec.hash());
}

TEST(ExperimentConfig, RejectsBadValues) {
  EXPECT_THROW(exp::ExperimentConfig::from_json({{"corpus", {{"object_vocab", 0}}}}), ConfigError);
  EXPECT_THROW(exp::ExperimentConfig::from_json({{"variants", {"LSTM"}}}), ConfigError);
  EXPECT_THROW(exp::ExperimentConfig::from_json(nlohmann::json::array()), ConfigError);
  try {
    exp::parse_variant_or_throw("nope");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("HA-SG+CGAT"), std::string::npos);
  }
}

TEST(ExperimentConfig, RelativeCorpusDirResolvesAgainstFile) {
  const fs::path dir = scratch("relpath");
  write_json(dir / "exp.json", {{"corpus_dir", "data/c1"}});
  const auto ec = exp::ExperimentConfig::load(dir / "exp.json");
  ASSERT_TRUE(ec.corpus_dir);
  EXPECT_EQ(*ec.corpus_dir, dir / "data/c1");
  fs::remove_all(dir);
}

TEST(Experiment, OutputDirectoryGuard) {
  const fs::path dir = scratch("guard");
  EXPECT_NO_THROW(exp::prepare_output_dir(dir / "fresh", false));
  std::ofstream(dir / "fresh" / "x.txt") << "x";
  EXPECT_THROW(exp::prepare_output_dir(dir / "fresh", false), ConfigError);
  EXPECT_NO_THROW(exp::prepare_output_dir(dir / "fresh", true));
  fs::remove_all(dir);
}

TEST(Experiment, EvaluateBucketsPartitionTestSplit) {
  const exp::ExperimentConfig ec = tiny_config();
  const synth::Corpus corpus = synth::generate_corpus(ec.corpus);
  model::CaptionModel m(ec.model_config(model::Variant::kHierSgGat, corpus.lexicon), 1);
  auto opts = ec.eval;
  opts.gold_graphs = true;
  const auto rows = exp::evaluate_model(m, corpus, opts, "h");
  ASSERT_EQ(rows.size(), 8u);
  const std::size_t n_test = corpus.split(synth::Split::kTest).size();
  for (const char* graphs : {"predicted", "gold"}) {
    std::size_t total = 0, all = 0;
    for (const auto& r : rows) {
      if (r.graphs != graphs) continue;
      EXPECT_EQ(r.config_hash, "h");
      if (r.bucket == "all") {
        all = r.n_scenes;
      } else {
        total += r.n_scenes;
      }
    }
    EXPECT_EQ(all, n_test);
    EXPECT_EQ(total, n_test);
  }
  opts.buckets = false;
  opts.gold_graphs = false;
  EXPECT_EQ(exp::evaluate_model(m, corpus, opts, "h").size(), 1u);
}

TEST(Experiment, GoldEqualsPredictedWithoutCorruption) {
  const exp::ExperimentConfig ec = tiny_config({0.0});
  const synth::Corpus corpus = synth::generate_corpus(ec.corpus);
  model::CaptionModel m(ec.model_config(model::Variant::kHierSgCgat, corpus.lexicon), 2);
  auto opts = ec.eval;
  opts.gold_graphs = true;
  const auto rows = exp::evaluate_model(m, corpus, opts, "h");
  ASSERT_EQ(rows.size(), 8u);
  for (std::size_t i = 0; i < 4; ++i) {
    auto gold = rows[i + 4];
    EXPECT_EQ(gold.graphs, "gold");
    gold.graphs = "predicted";
    std::ostringstream a, b;
    metrics::write_report_csv(a, std::vector<metrics::ReportRow>{rows[i]});
    metrics::write_report_csv(b, std::vector<metrics::ReportRow>{gold});
    EXPECT_EQ(a.str(), b.str());
  }
}

TEST(Experiment, ButdIgnoresGraphQualityOnSameScenes) {
  const exp::ExperimentConfig ec = tiny_config();
  const synth::Corpus corpus = synth::generate_corpus(ec.corpus);
  model::CaptionModel m(ec.model_config(model::Variant::kButd, corpus.lexicon), 2);
  auto opts = ec.eval;
  opts.gold_graphs = true;
  const auto rows = exp::evaluate_model(m, corpus, opts, "h");
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rows[i].bleu4, rows[i + 4].bleu4);
    EXPECT_EQ(rows[i].spice.overall.f1, rows[i + 4].spice.overall.f1);
  }
}

TEST(Cli, GenerateIsDeterministicAndRecordsSeed) {
  const fs::path dir = scratch("cli_gen");
  nlohmann::json cfg = tiny_config().to_json();
  cfg["corpus"]["seed"] = 1234;
  write_json(dir / "exp.json", cfg);
  ASSERT_EQ(cli("generate --config " + (dir / "exp.json").string() + " --out " + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(cli("generate --config " + (dir / "exp.json").string() + " --out " + (dir / "b").string(), dir).code, 0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  EXPECT_EQ(manifest.at("seed"), 1234);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
  }
  EXPECT_GT(files, 30u);

  const Cli again = cli("generate --config " + (dir / "exp.json").string() + " --out " + (dir / "a").string(), dir);
  EXPECT_EQ(again.code, 1);
  EXPECT_NE(again.out.find("--force"), std::string::npos) << again.out;
  EXPECT_EQ(cli("generate --config " + (dir / "exp.json").string() + " --out " + (dir / "a").string() + " --force", dir).code, 0);
  fs::remove_all(dir);
}

TEST(Cli, ConfigErrorsExitOne) {
  const fs::path dir = scratch("cli_err");
  write_json(dir / "bad.json", {{"corpus", {{"object_vocab", 0}}}});
  const Cli bad = cli("generate --config " + (dir / "bad.json").string() + " --out " + (dir / "c").string(), dir);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("object_vocab"), std::string::npos) << bad.out;

  const Cli variant = cli("train --variant LSTM --corpus " + dir.string() + " --out " + (dir / "r").string(), dir);
  EXPECT_EQ(variant.code, 1);
  for (const char* name : {"BUTD", "FA", "HA-SG", "HA-IM", "HA-SG+GAT", "HA-SG+CGAT"}) {
    EXPECT_NE(variant.out.find(name), std::string::npos) << variant.out;
  }
  EXPECT_EQ(cli("frobnicate", dir).code, 1);
  EXPECT_EQ(cli("evaluate --checkpoint " + (dir / "missing.bin").string() + " --corpus " + dir.string(), dir).code, 2);
  fs::remove_all(dir);
}

TEST(Cli, TrainEvaluateRoundTrip) {
  const fs::path dir = scratch("cli_train");
  nlohmann::json cfg = tiny_config().to_json();
  cfg["corpus_dir"] = "corpus";
  write_json(dir / "exp.json", cfg);
  const std::string conf = " --config " + (dir / "exp.json").string();
  ASSERT_EQ(cli("generate" + conf + " --out " + (dir / "corpus").string(), dir).code, 0);
  const Cli t = cli("train" + conf + " --variant HA-SG --out " + (dir / "run").string(), dir);
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.bin"));
  const std::string log = slurp(dir / "run" / "train_log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
  const auto run = nlohmann::json::parse(slurp(dir / "run" / "run.json"));
  EXPECT_EQ(run.at("config_hash"), exp::ExperimentConfig::load(dir / "exp.json").hash());

  EXPECT_EQ(cli("train" + conf + " --variant HA-SG --out " + (dir / "run").string(), dir).code, 1);

  const Cli e = cli("evaluate" + conf + " --checkpoint " + (dir / "run" / "checkpoint.bin").string() +
                        " --gold-graphs --out " + (dir / "report.csv").string(), dir);
  ASSERT_EQ(e.code, 0) << e.out;
  const std::string csv = slurp(dir / "report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
  EXPECT_NE(csv.find(",gold,high,"), std::string::npos);

  // a checkpoint is tied to its corpus vocabulary
  nlohmann::json other = cfg;
  other["corpus"]["object_vocab"] = 15;
  write_json(dir / "other.json", other);
  ASSERT_EQ(cli("generate --config " + (dir / "other.json").string() + " --out " + (dir / "c2").string(), dir).code, 0);
  const Cli mismatch = cli("evaluate --checkpoint " + (dir / "run" / "checkpoint.bin").string() +
                               " --corpus " + (dir / "c2").string(), dir);
  EXPECT_EQ(mismatch.code, 1);
  EXPECT_NE(mismatch.out.find("vocabulary hash"), std::string::npos) << mismatch.out;
  fs::remove_all(dir);
}

TEST(Cli, GradcheckPassesAndNamesInjectedFault) {
  const fs::path dir = scratch("cli_gc");
  const Cli ok = cli("gradcheck", dir);
  EXPECT_EQ(ok.code, 0) << ok.out;
  const Cli bad = cli("gradcheck --inject-fault tanh", dir);
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("FAIL tanh"), std::string::npos) << bad.out;
  fs::remove_all(dir);
}
