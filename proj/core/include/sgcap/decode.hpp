#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sgcap/decoder.hpp"

namespace sgcap::model {

struct DecodeOptions {
  std::size_t beam_width = 5;
  std::size_t max_length = 16;  // generated tokens, end token included
  /// Rank finished beams by log-prob / length instead of raw log-prob.
  bool length_normalize = true;
};

struct Hypothesis {
  std::vector<std::size_t> tokens;  // generated words, end token excluded
  bool ended = false;               // true when the end token was emitted
  double log_prob = 0.0;

  std::size_t length() const { return tokens.size() + (ended ? 1 : 0); }
  double normalized() const { return length() == 0 ? 0.0 : log_prob / double(length()); }
};

/// Argmax decoding; ties go to the lower token id. Never applies dropout.
Hypothesis decode_greedy(const CaptionModel& model, const ImageInput& input,
                         std::size_t max_length);

/// Beam search from the start token. Candidates are ranked by cumulative
/// log-prob with lexicographically smaller token sequences first on ties;
/// the beam shrinks by one for every finished hypothesis. The greedy path is
/// always part of the final pool, so the result never scores below it.
Hypothesis decode_beam(const CaptionModel& model, const ImageInput& input,
                       const DecodeOptions& options);

/// Log-probability of emitting `tokens` (then the end token when `ended`)
/// after the start token.
double sequence_log_prob(const CaptionModel& model, const ImageInput& input,
                         std::span<const std::size_t> tokens, bool ended);

/// Numerically stable log-softmax of a 1 x V logit row.
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace sgcap::model
