#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sgcap/errors.hpp"
#include "sgcap/experiment.hpp"

namespace fs = std::filesystem;
using namespace sgcap;

namespace {

exp::ExperimentConfig load_or_default(const std::string& path) {
  if (path.empty()) return exp::ExperimentConfig::from_json(nlohmann::json::object());
  return exp::ExperimentConfig::load(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-graph conditioned captioning workbench"};
  app.require_subcommand(1);

  std::string config_path, out_dir, variant_name, corpus_dir, checkpoint, fault_name;
  bool force = false;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic corpus");
  gen->add_option("--config", config_path, "Experiment config (JSON)");
  gen->add_option("--out", out_dir, "Corpus output directory")->required();
  gen->add_flag("--force", force, "Overwrite a non-empty output directory");

  auto* trn = app.add_subcommand("train", "Train one model variant");
  trn->add_option("--config", config_path, "Experiment config (JSON)");
  trn->add_option("--variant", variant_name, "Model variant")->required();
  trn->add_option("--out", out_dir, "Run output directory")->required();
  trn->add_option("--corpus", corpus_dir, "Corpus directory (default: config corpus_dir)");
  trn->add_flag("--force", force, "Overwrite a non-empty output directory");

  std::optional<std::size_t> beam, recall_k;
  std::optional<bool> gold_graphs, buckets;
  std::string csv_out;
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  ev->add_option("--config", config_path, "Experiment config for evaluation defaults");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--corpus", corpus_dir, "Corpus directory (default: config corpus_dir)");
  ev->add_option("--beam", beam, "Beam width");
  ev->add_option("--gold-graphs", gold_graphs, "Also report with gold graphs (true/false)")
      ->expected(0, 1)
      ->default_str("true");
  ev->add_option("--buckets", buckets, "Per-quality-bucket rows (true/false)")
      ->expected(0, 1)
      ->default_str("true");
  ev->add_option("--k", recall_k, "Recall cutoff for SGDet bucketing");
  ev->add_option("--out", csv_out, "CSV output path (default: stdout)");

  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  gc->add_option("--inject-fault", fault_name, "Negate one primitive's adjoint")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) {
      exp::cmd_generate(load_or_default(config_path), out_dir, force, std::cout);
    } else if (*trn) {
      const auto config = load_or_default(config_path);
      const auto variant = exp::parse_variant_or_throw(variant_name);
      fs::path corpus = corpus_dir;
      if (corpus.empty()) {
        if (!config.corpus_dir) throw ConfigError("no corpus: pass --corpus or set corpus_dir");
        corpus = *config.corpus_dir;
      }
      exp::cmd_train(config, variant, corpus, out_dir, force, std::cout);
    } else if (*ev) {
      const auto config = load_or_default(config_path);
      exp::EvalOptions opts = config.eval;
      if (beam) opts.beam = *beam;
      if (gold_graphs) opts.gold_graphs = *gold_graphs;
      if (buckets) opts.buckets = *buckets;
      if (recall_k) opts.recall_k = *recall_k;
      if (opts.beam == 0) throw ConfigError("--beam must be at least 1");
      fs::path corpus = corpus_dir;
      if (corpus.empty()) {
        if (!config.corpus_dir) throw ConfigError("no corpus: pass --corpus or set corpus_dir");
        corpus = *config.corpus_dir;
      }
      exp::cmd_evaluate(checkpoint, corpus, opts,
                        csv_out.empty() ? std::nullopt : std::optional<fs::path>(csv_out),
                        std::cout);
    } else if (*gc) {
      std::optional<ad::OpKind> fault;
      if (!fault_name.empty()) {
        fault = ad::parse_op_name(fault_name);
        if (!fault) throw ConfigError("unknown op '" + fault_name + "'");
      }
      return exp::cmd_gradcheck(fault, std::cout) ? 0 : 2;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
