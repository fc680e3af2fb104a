#include "sgcap/vocabulary.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sgcap {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("vocabulary token " + std::to_string(i) +
                                  " is empty or contains whitespace");
    }
    if (!index_.emplace(tokens_[i], i).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary: " + path.string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto found = find(token);
  if (!found) throw std::invalid_argument("unknown token: " + std::string(token));
  return *found;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a("");
  for (const auto& t : tokens_) {
    h = fnv1a(t, h);
    h = fnv1a("\n", h);
  }
  return h;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace sgcap
