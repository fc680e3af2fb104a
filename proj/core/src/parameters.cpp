#include "sgcap/parameters.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sgcap::ad {

void ParameterStore::add(const std::string& name, Tensor init) {
  if (slots_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  ParameterSlot s;
  s.first_moment = Tensor(init.rows(), init.cols());
  s.inf_norm = Tensor(init.rows(), init.cols());
  s.value = std::move(init);
  slots_.emplace(name, std::move(s));
}

const ParameterSlot& ParameterStore::slot(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

ParameterSlot& ParameterStore::slot(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(slots_.size());
  for (const auto& [name, _] : slots_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, s] : slots_) n += s.value.size();
  return n;
}

Var ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_.parameter(name, store_.value(name));
  bound_.emplace(name, v);
  return v;
}

GradientMap complete_gradients(const ParameterStore& store, const Gradients& grads) {
  GradientMap out;
  for (const auto& [name, slot] : store.slots()) {
    auto it = grads.by_name().find(name);
    if (it != grads.by_name().end()) {
      out.emplace(name, it->second);
    } else {
      out.emplace(name, Tensor(slot.value.rows(), slot.value.cols()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O. All integers are little-endian u64; doubles are their IEEE
// bit patterns as little-endian u64.

namespace {

constexpr char kMagic[8] = {'S', 'G', 'C', 'A', 'P', 'C', 'K', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& out, std::string_view s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  if (n > (std::uint64_t{1} << 32)) throw std::runtime_error("checkpoint corrupt: string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

void put_tensor_values(std::ostream& out, const Tensor& t) {
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

Tensor get_tensor_values(std::istream& in, std::size_t rows, std::size_t cols) {
  std::vector<double> values(rows * cols);
  for (double& v : values) v = std::bit_cast<double>(get_u64(in));
  return Tensor(rows, cols, std::move(values));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     std::string_view metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_string(out, metadata);
  put_u64(out, store.step_count());
  put_u64(out, store.slots().size());
  for (const auto& [name, slot] : store.slots()) {
    put_string(out, name);
    put_u64(out, slot.value.rows());
    put_u64(out, slot.value.cols());
    put_tensor_values(out, slot.value);
    put_tensor_values(out, slot.first_moment);
    put_tensor_values(out, slot.inf_norm);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  Checkpoint ck;
  ck.metadata = get_string(in);
  ck.params.set_step_count(get_u64(in));
  const std::uint64_t count = get_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(in);
    const std::size_t rows = get_u64(in);
    const std::size_t cols = get_u64(in);
    ck.params.add(name, get_tensor_values(in, rows, cols));
    auto& slot = ck.params.slot(name);
    slot.first_moment = get_tensor_values(in, rows, cols);
    slot.inf_norm = get_tensor_values(in, rows, cols);
  }
  return ck;
}

}  // namespace sgcap::ad
