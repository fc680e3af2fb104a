#pragma once

#include <array>
#include <string>
#include <vector>

namespace sgcap {

using LabelTriplet = std::array<std::string, 3>;  // subject, predicate, object

/// Semantic tuples of a caption or graph, as label strings.
struct CaptionTuples {
  std::vector<std::string> objects;
  std::vector<LabelTriplet> relations;

  friend bool operator==(const CaptionTuples&, const CaptionTuples&) = default;
};

}  // namespace sgcap
