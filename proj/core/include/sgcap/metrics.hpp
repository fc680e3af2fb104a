#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgcap/scene_graph.hpp"
#include "sgcap/tuples.hpp"

namespace sgcap::metrics {

using Sentence = std::vector<std::string>;
using References = std::vector<Sentence>;

struct BleuDetail {
  std::array<double, 4> precision{};  // clipped n-gram precisions
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
  double brevity_penalty = 0.0;
  double score = 0.0;
};

/// Corpus-level BLEU-4, uniform weights, no smoothing. Throws
/// std::invalid_argument on an empty corpus, unequal list lengths or an
/// empty reference list.
BleuDetail bleu4_detail(std::span<const Sentence> candidates,
                        std::span<const References> references);
double bleu4(std::span<const Sentence> candidates, std::span<const References> references);

inline constexpr double kRougeBeta = 1.2;

/// LCS F-measure of one candidate, maximised over its references.
double rouge_l_sentence(const Sentence& candidate, const References& references,
                        double beta = kRougeBeta);
/// Mean of rouge_l_sentence over the corpus.
double rouge_l(std::span<const Sentence> candidates, std::span<const References> references,
               double beta = kRougeBeta);

std::size_t lcs_length(const Sentence& a, const Sentence& b);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static Prf from_counts(std::size_t matched, std::size_t candidate, std::size_t reference);
};

struct SpiceBreakdown {
  Prf overall;
  Prf object;
  Prf relation;
};

/// Exact tuple matching with multiset semantics.
SpiceBreakdown spice_breakdown(const CaptionTuples& candidate, const CaptionTuples& reference);

/// Per-field mean over scenes.
SpiceBreakdown mean_breakdown(std::span<const SpiceBreakdown> scores);

/// Fraction of gold triplets recovered by the k best-scoring predicted
/// triplets, one gold triplet per prediction, greedy in score order. Throws
/// std::invalid_argument when `gold` has no relations or k is 0.
double sgdet_recall_at_k(const sg::SceneGraph& predicted, const sg::SceneGraph& gold,
                         std::size_t k);

enum class QualityBucket { kLow, kAverage, kHigh };

QualityBucket bucket(double recall);
std::string_view bucket_name(QualityBucket b);

/// One report line. Empty groups keep n_scenes = 0 and print blank
/// metric fields.
struct ReportRow {
  std::string model;
  std::string graphs;  // "predicted" or "gold"
  std::string bucket;  // "all", "low", "average", "high"
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  SpiceBreakdown spice;
  double mean_recall = 0.0;
  std::size_t n_scenes = 0;
  std::string config_hash;
};

const std::vector<std::string>& report_columns();
void write_report_csv(std::ostream& out, std::span<const ReportRow> rows);

}  // namespace sgcap::metrics
