#include "sgcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace sgcap::metrics {
namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[Ngram(s.begin() + std::ptrdiff_t(i), s.begin() + std::ptrdiff_t(i + n))];
  }
  return counts;
}

void check_corpus(std::span<const Sentence> candidates, std::span<const References> references,
                  const char* who) {
  if (candidates.empty()) throw std::invalid_argument(std::string(who) + ": empty candidate list");
  if (candidates.size() != references.size()) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(candidates.size()) +
                                " candidates for " + std::to_string(references.size()) +
                                " reference lists");
  }
  for (const auto& refs : references) {
    if (refs.empty()) throw std::invalid_argument(std::string(who) + ": empty reference list");
  }
}

template <typename T>
std::size_t multiset_matches(std::vector<T> a, std::vector<T> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t m = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++m;
      ++i;
      ++j;
    }
  }
  return m;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

BleuDetail bleu4_detail(std::span<const Sentence> candidates,
                        std::span<const References> references) {
  check_corpus(candidates, references, "bleu4");
  BleuDetail d;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Sentence& cand = candidates[i];
    const References& refs = references[i];
    d.candidate_length += cand.size();
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto diff = [&](std::size_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) {
        best = r.size();
      }
    }
    d.reference_length += best;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cc = ngram_counts(cand, n);
      std::map<Ngram, std::size_t> max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
      }
      for (const auto& [g, c] : cc) {
        const auto it = max_ref.find(g);
        d.matches[n - 1] += std::min(c, it == max_ref.end() ? 0 : it->second);
        d.totals[n - 1] += c;
      }
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    d.precision[n] = d.totals[n] == 0 ? 0.0 : double(d.matches[n]) / double(d.totals[n]);
    if (d.matches[n] == 0) {
      zero = true;
    } else {
      log_sum += std::log(d.precision[n]);
    }
  }
  if (d.candidate_length == 0) {
    d.brevity_penalty = 0.0;
  } else if (d.candidate_length > d.reference_length) {
    d.brevity_penalty = 1.0;
  } else {
    d.brevity_penalty =
        std::exp(1.0 - double(d.reference_length) / double(d.candidate_length));
  }
  d.score = zero ? 0.0 : d.brevity_penalty * std::exp(log_sum / 4.0);
  return d;
}

double bleu4(std::span<const Sentence> candidates, std::span<const References> references) {
  return bleu4_detail(candidates, references).score;
}

std::size_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_sentence(const Sentence& candidate, const References& references, double beta) {
  double best = 0.0;
  for (const auto& ref : references) {
    const std::size_t l = lcs_length(candidate, ref);
    if (l == 0) continue;
    const double p = double(l) / double(candidate.size());
    const double r = double(l) / double(ref.size());
    const double b2 = beta * beta;
    best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
  }
  return best;
}

double rouge_l(std::span<const Sentence> candidates, std::span<const References> references,
               double beta) {
  check_corpus(candidates, references, "rouge_l");
  double total = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    total += rouge_l_sentence(candidates[i], references[i], beta);
  }
  return total / double(candidates.size());
}

Prf Prf::from_counts(std::size_t matched, std::size_t candidate, std::size_t reference) {
  Prf out;
  out.precision = candidate == 0 ? 0.0 : double(matched) / double(candidate);
  out.recall = reference == 0 ? 0.0 : double(matched) / double(reference);
  const double s = out.precision + out.recall;
  out.f1 = s == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / s;
  return out;
}

SpiceBreakdown spice_breakdown(const CaptionTuples& candidate, const CaptionTuples& reference) {
  const std::size_t mo = multiset_matches(candidate.objects, reference.objects);
  const std::size_t mr = multiset_matches(candidate.relations, reference.relations);
  SpiceBreakdown s;
  s.object = Prf::from_counts(mo, candidate.objects.size(), reference.objects.size());
  s.relation = Prf::from_counts(mr, candidate.relations.size(), reference.relations.size());
  s.overall = Prf::from_counts(mo + mr, candidate.objects.size() + candidate.relations.size(),
                               reference.objects.size() + reference.relations.size());
  return s;
}

SpiceBreakdown mean_breakdown(std::span<const SpiceBreakdown> scores) {
  SpiceBreakdown m;
  if (scores.empty()) return m;
  auto acc = [](Prf& into, const Prf& p) {
    into.precision += p.precision;
    into.recall += p.recall;
    into.f1 += p.f1;
  };
  for (const auto& s : scores) {
    acc(m.overall, s.overall);
    acc(m.object, s.object);
    acc(m.relation, s.relation);
  }
  const double n = double(scores.size());
  for (Prf* p : {&m.overall, &m.object, &m.relation}) {
    p->precision /= n;
    p->recall /= n;
    p->f1 /= n;
  }
  return m;
}

double sgdet_recall_at_k(const sg::SceneGraph& predicted, const sg::SceneGraph& gold,
                         std::size_t k) {
  if (k == 0) throw std::invalid_argument("sgdet_recall_at_k: k must be at least 1");
  if (gold.num_relations() == 0) {
    throw std::invalid_argument("sgdet_recall_at_k: gold graph has no relations");
  }
  std::vector<sg::Triplet> remaining;
  for (const auto& t : sg::extract_triplets(gold)) remaining.push_back(t.triplet);
  const auto ranked = sg::extract_triplets(predicted);
  std::size_t matched = 0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    const auto it = std::find(remaining.begin(), remaining.end(), ranked[i].triplet);
    if (it != remaining.end()) {
      remaining.erase(it);
      ++matched;
    }
  }
  return double(matched) / double(gold.num_relations());
}

QualityBucket bucket(double recall) {
  if (recall < 1.0 / 3.0) return QualityBucket::kLow;
  if (recall < 2.0 / 3.0) return QualityBucket::kAverage;
  return QualityBucket::kHigh;
}

std::string_view bucket_name(QualityBucket b) {
  switch (b) {
    case QualityBucket::kLow: return "low";
    case QualityBucket::kAverage: return "average";
    case QualityBucket::kHigh: return "high";
  }
  return "?";
}

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{
      "model",       "graphs",      "bucket",       "B4",          "R-L",
      "SPICE-all-F1", "SPICE-obj-F1", "SPICE-obj-P", "SPICE-obj-R", "SPICE-rel-F1",
      "SPICE-rel-P", "SPICE-rel-R", "mean-SGDet-recall", "n-scenes", "config-hash"};
  return cols;
}

void write_report_csv(std::ostream& out, std::span<const ReportRow> rows) {
  const auto& cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    out << r.model << ',' << r.graphs << ',' << r.bucket;
    const std::vector<double> vals{r.bleu4,           r.rouge_l,
                                   r.spice.overall.f1, r.spice.object.f1,
                                   r.spice.object.precision, r.spice.object.recall,
                                   r.spice.relation.f1, r.spice.relation.precision,
                                   r.spice.relation.recall, r.mean_recall};
    for (double v : vals) out << ',' << (r.n_scenes == 0 ? std::string() : fmt(v));
    out << ',' << r.n_scenes << ',' << r.config_hash << '\n';
  }
}

}  // namespace sgcap::metrics
