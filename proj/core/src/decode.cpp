#include "sgcap/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sgcap::model {
namespace {

/// One tape holding the encoded image; each step is recorded past `mark_`
/// and thrown away once its values have been copied out.
class Stepper {
 public:
  Stepper(const CaptionModel& model, const ImageInput& input)
      : model_(model), binder_(tape_, model.params()), enc_(model.encode(binder_, input)) {
    mark_ = tape_.size();
    const std::size_t h = model.config().hidden_dim;
    initial_ = {ad::Tensor(1, h), ad::Tensor(1, h), ad::Tensor(1, h), ad::Tensor(1, h)};
  }

  const DecoderState& initial() const { return initial_; }

  std::pair<DecoderState, std::vector<double>> advance(const DecoderState& s, std::size_t word) {
    tape_.truncate(mark_);
    const StateVars vars{tape_.constant_ref(s.h1), tape_.constant_ref(s.c1),
                         tape_.constant_ref(s.h2), tape_.constant_ref(s.c2)};
    const StepOutput out = model_.step(enc_, word, vars, nullptr);
    DecoderState next{out.state.h1.value(), out.state.c1.value(), out.state.h2.value(),
                      out.state.c2.value()};
    return {std::move(next), log_softmax(out.logits.value().data())};
  }

 private:
  const CaptionModel& model_;
  ad::Tape tape_;
  ad::ParamBinder binder_;
  EncodedImage enc_;
  std::size_t mark_ = 0;
  DecoderState initial_;
};

struct Beam {
  Hypothesis hyp;
  DecoderState state;
};

bool ranks_before(double la, const std::vector<std::size_t>& ta, double lb,
                  const std::vector<std::size_t>& tb) {
  if (la != lb) return la > lb;
  return ta < tb;
}

}  // namespace

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("log_softmax: empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double lz = m + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

Hypothesis decode_greedy(const CaptionModel& model, const ImageInput& input,
                         std::size_t max_length) {
  if (max_length == 0) throw std::invalid_argument("decode: max_length must be at least 1");
  Stepper stepper(model, input);
  Hypothesis hyp;
  DecoderState state = stepper.initial();
  std::size_t prev = token::kStart;
  while (hyp.length() < max_length) {
    auto [next, lp] = stepper.advance(state, prev);
    const auto best = std::size_t(std::max_element(lp.begin(), lp.end()) - lp.begin());
    hyp.log_prob += lp[best];
    if (best == token::kEnd) {
      hyp.ended = true;
      break;
    }
    hyp.tokens.push_back(best);
    state = std::move(next);
    prev = best;
  }
  return hyp;
}

Hypothesis decode_beam(const CaptionModel& model, const ImageInput& input,
                       const DecodeOptions& options) {
  if (options.beam_width == 0) throw std::invalid_argument("decode: beam width must be at least 1");
  if (options.max_length == 0) throw std::invalid_argument("decode: max_length must be at least 1");
  Stepper stepper(model, input);
  const std::size_t vocab = model.config().vocab_size;

  std::vector<Hypothesis> finished;
  std::vector<Beam> alive{{Hypothesis{}, stepper.initial()}};

  struct Candidate {
    std::size_t beam;
    std::size_t word;
    double log_prob;
    std::vector<std::size_t> seq;  // tokens plus word, for tie-breaking
  };

  while (!alive.empty()) {
    std::vector<Candidate> cands;
    std::vector<DecoderState> next_states;
    cands.reserve(alive.size() * vocab);
    for (std::size_t b = 0; b < alive.size(); ++b) {
      const std::size_t prev = alive[b].hyp.tokens.empty() ? token::kStart
                                                           : alive[b].hyp.tokens.back();
      auto [next, lp] = stepper.advance(alive[b].state, prev);
      next_states.push_back(std::move(next));
      for (std::size_t w = 0; w < vocab; ++w) {
        std::vector<std::size_t> seq = alive[b].hyp.tokens;
        seq.push_back(w);
        cands.push_back({b, w, alive[b].hyp.log_prob + lp[w], std::move(seq)});
      }
    }
    const std::size_t width = options.beam_width - finished.size();
    const std::size_t keep = std::min(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + std::ptrdiff_t(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        return ranks_before(a.log_prob, a.seq, b.log_prob, b.seq);
                      });
    std::vector<Beam> survivors;
    for (std::size_t i = 0; i < keep; ++i) {
      Candidate& c = cands[i];
      Hypothesis h;
      h.log_prob = c.log_prob;
      h.tokens = alive[c.beam].hyp.tokens;
      if (c.word == token::kEnd) {
        h.ended = true;
        finished.push_back(std::move(h));
        continue;
      }
      h.tokens.push_back(c.word);
      if (h.length() >= options.max_length) {
        finished.push_back(std::move(h));
      } else {
        survivors.push_back({std::move(h), next_states[c.beam]});
      }
    }
    alive = std::move(survivors);
  }

  finished.push_back(decode_greedy(model, input, options.max_length));
  auto score = [&](const Hypothesis& h) {
    return options.length_normalize ? h.normalized() : h.log_prob;
  };
  const Hypothesis* best = &finished.front();
  for (const Hypothesis& h : finished) {
    const double sh = score(h), sb = score(*best);
    if (sh > sb || (sh == sb && h.tokens < best->tokens)) best = &h;
  }
  return *best;
}

double sequence_log_prob(const CaptionModel& model, const ImageInput& input,
                         std::span<const std::size_t> tokens, bool ended) {
  Stepper stepper(model, input);
  DecoderState state = stepper.initial();
  std::size_t prev = token::kStart;
  double total = 0.0;
  for (std::size_t w : tokens) {
    auto [next, lp] = stepper.advance(state, prev);
    total += lp.at(w);
    state = std::move(next);
    prev = w;
  }
  if (ended) total += stepper.advance(state, prev).second.at(token::kEnd);
  return total;
}

}  // namespace sgcap::model
