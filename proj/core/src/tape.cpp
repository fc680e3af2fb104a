#include "sgcap/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

namespace sgcap::ad {
namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 17> kOpNames{{
    {OpKind::kParameter, "parameter"},
    {OpKind::kConstant, "constant"},
    {OpKind::kMatmul, "matmul"},
    {OpKind::kAdd, "add"},
    {OpKind::kConcatCols, "concat-cols"},
    {OpKind::kConcatRows, "concat-rows"},
    {OpKind::kReshape, "reshape"},
    {OpKind::kTanh, "tanh"},
    {OpKind::kSigmoid, "sigmoid"},
    {OpKind::kMul, "mul"},
    {OpKind::kScale, "scale"},
    {OpKind::kSum, "sum"},
    {OpKind::kMeanRows, "mean-rows"},
    {OpKind::kGather, "gather"},
    {OpKind::kDropout, "dropout"},
    {OpKind::kMaskedSoftmax, "masked-softmax"},
    {OpKind::kCrossEntropy, "cross-entropy"},
}};

Tape& same_tape(std::span<const Var> vars, const char* op) {
  if (vars.empty() || vars.front().tape() == nullptr) {
    throw std::invalid_argument(std::string(op) + ": invalid operand");
  }
  Tape* tape = vars.front().tape();
  for (const Var& v : vars) {
    if (v.tape() != tape) {
      throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
    }
  }
  return *tape;
}

Tape& same_tape(std::initializer_list<Var> vars, const char* op) {
  return same_tape(std::span<const Var>(vars.begin(), vars.size()), op);
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                   b.shape_string());
}

bool any_requires(const Tape& tape, std::span<const std::size_t> ids) {
  return std::any_of(ids.begin(), ids.end(),
                     [&](std::size_t id) { return tape.node(id).requires_grad; });
}

Tape::Node make_node(OpKind kind, std::vector<std::size_t> inputs, Tensor value) {
  Tape::Node n;
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  return n;
}

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<OpKind> parse_op_name(std::string_view name) {
  for (const auto& [k, n] : kOpNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("Var::value on an unbound handle");
  return tape_->value(*this);
}

Tensor Gradients::of(Var v) const {
  const auto [rows, cols] = shapes_.at(v.id());
  const auto& g = node_grads_.at(v.id());
  if (g.empty()) return Tensor(rows, cols);
  return Tensor(rows, cols, g);
}

Var Tape::parameter(std::string name, const Tensor& value) {
  Node n;
  n.kind = OpKind::kParameter;
  n.external = &value;
  n.requires_grad = true;
  n.name = std::move(name);
  return record(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  return record(std::move(n));
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.external = &value;
  return record(std::move(n));
}

void Tape::truncate(std::size_t size) {
  if (size < nodes_.size()) nodes_.resize(size);
}

Var Tape::record(Node node) {
  if (node.kind != OpKind::kParameter && node.kind != OpKind::kConstant) {
    node.requires_grad = any_requires(*this, node.inputs);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw std::invalid_argument("variable does not belong to this tape");
  }
}

Gradients Tape::backward(Var loss) const {
  check_owned(loss);
  const Tensor& lv = value(loss);
  if (!lv.is_scalar()) {
    throw ShapeError("backward: loss must be a scalar, got " + lv.shape_string());
  }

  Gradients out;
  auto& grads = out.node_grads_;
  grads.resize(loss.id() + 1);
  out.shapes_.reserve(nodes_.size());
  for (const Node& n : nodes_) out.shapes_.emplace_back(n.val().rows(), n.val().cols());

  auto acc = [&](std::size_t id) -> std::vector<double>& {
    auto& g = grads[id];
    if (g.empty()) g.assign(nodes_[id].val().size(), 0.0);
    return g;
  };
  auto wants = [&](std::size_t id) { return nodes_[id].requires_grad; };

  grads[loss.id()] = {1.0};

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (grads[id].empty() || !n.requires_grad) continue;
    if (n.kind == OpKind::kParameter || n.kind == OpKind::kConstant) continue;

    std::vector<double> g = grads[id];
    if (fault_ && *fault_ == n.kind) {
      for (double& x : g) x = -x;
    }
    const Tensor& y = n.val();

    switch (n.kind) {
      case OpKind::kMatmul: {
        const Tensor& a = nodes_[n.inputs[0]].val();
        const Tensor& b = nodes_[n.inputs[1]].val();
        const std::size_t m = a.rows(), k = a.cols(), cols = b.cols();
        if (wants(n.inputs[0])) {
          auto& ga = acc(n.inputs[0]);
          for (std::size_t i = 0; i < m; ++i) {
            const double* gi = &g[i * cols];
            for (std::size_t p = 0; p < k; ++p) {
              const double* bp = &b.data()[p * cols];
              double s = 0.0;
              for (std::size_t j = 0; j < cols; ++j) s += gi[j] * bp[j];
              ga[i * k + p] += s;
            }
          }
        }
        if (wants(n.inputs[1])) {
          auto& gb = acc(n.inputs[1]);
          for (std::size_t i = 0; i < m; ++i) {
            const double* gi = &g[i * cols];
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = a(i, p);
              if (aip == 0.0) continue;
              double* gbp = &gb[p * cols];
              for (std::size_t j = 0; j < cols; ++j) gbp[j] += aip * gi[j];
            }
          }
        }
        break;
      }
      case OpKind::kAdd: {
        for (std::size_t in : n.inputs) {
          if (!wants(in)) continue;
          auto& gi = acc(in);
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = nodes_[n.inputs[0]].val();
        const Tensor& b = nodes_[n.inputs[1]].val();
        if (wants(n.inputs[0])) {
          auto& ga = acc(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
        }
        if (wants(n.inputs[1])) {
          auto& gb = acc(n.inputs[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
        }
        break;
      }
      case OpKind::kScale: {
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.scalar;
        break;
      }
      case OpKind::kTanh: {
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case OpKind::kSigmoid: {
        auto& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case OpKind::kSum: {
        auto& ga = acc(n.inputs[0]);
        for (double& x : ga) x += g[0];
        break;
      }
      case OpKind::kConcatCols: {
        std::size_t offset = 0;
        const std::size_t rows = y.rows(), cols = y.cols();
        for (std::size_t in : n.inputs) {
          const std::size_t pc = nodes_[in].val().cols();
          if (wants(in)) {
            auto& gi = acc(in);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < pc; ++c) gi[r * pc + c] += g[r * cols + offset + c];
            }
          }
          offset += pc;
        }
        break;
      }
      case OpKind::kConcatRows: {
        std::size_t offset = 0;
        for (std::size_t in : n.inputs) {
          const std::size_t len = nodes_[in].val().size();
          if (wants(in) && len > 0) {
            auto& gi = acc(in);
            for (std::size_t i = 0; i < len; ++i) gi[i] += g[offset + i];
          }
          offset += len;
        }
        break;
      }
      case OpKind::kReshape:
      case OpKind::kDropout: {
        auto& ga = acc(n.inputs[0]);
        if (n.kind == OpKind::kReshape) {
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.aux[i];
        }
        break;
      }
      case OpKind::kMeanRows: {
        const Tensor& a = nodes_[n.inputs[0]].val();
        auto& ga = acc(n.inputs[0]);
        const std::size_t cols = a.cols();
        const double inv = n.scalar;
        for (std::size_t r = 0; r < a.rows(); ++r) {
          if (n.has_aux && n.aux[r] == 0.0) continue;
          for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[c] * inv;
        }
        break;
      }
      case OpKind::kGather: {
        auto& gt = acc(n.inputs[0]);
        const std::size_t cols = y.cols();
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          double* dst = &gt[n.indices[r] * cols];
          const double* src = &g[r * cols];
          for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
        }
        break;
      }
      case OpKind::kMaskedSoftmax: {
        auto& ga = acc(n.inputs[0]);
        const std::size_t cols = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += y(r, c) * g[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            if (n.has_aux && n.aux[i] == 0.0) continue;
            ga[i] += y[i] * (g[i] - dot);
          }
        }
        break;
      }
      case OpKind::kCrossEntropy: {
        const Tensor& z = nodes_[n.inputs[0]].val();
        auto& gz = acc(n.inputs[0]);
        const std::size_t rows = z.rows(), cols = z.cols();
        const double w = g[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          const auto zr = z.row_span(r);
          const double mx = *std::max_element(zr.begin(), zr.end());
          double denom = 0.0;
          for (double v : zr) denom += std::exp(v - mx);
          for (std::size_t c = 0; c < cols; ++c) {
            const double p = std::exp(zr[c] - mx) / denom;
            gz[r * cols + c] += w * (p - (c == n.indices[r] ? 1.0 : 0.0));
          }
        }
        break;
      }
      case OpKind::kParameter:
      case OpKind::kConstant:
        break;
    }
  }

  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.kind != OpKind::kParameter) continue;
    auto it = out.by_name_.find(n.name);
    if (it == out.by_name_.end()) {
      it = out.by_name_.emplace(n.name, Tensor(n.val().rows(), n.val().cols())).first;
    }
    if (id < grads.size() && !grads[id].empty()) {
      auto dst = it->second.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += grads[id][i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward primitives

Var matmul(Var a, Var b) {
  Tape& tape = same_tape({a, b}, "matmul");
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  if (x.cols() != w.rows()) shape_mismatch("matmul", x, w);
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* oi = &out.data()[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double xip = x(i, p);
      const double* wp = &w.data()[p * n];
      for (std::size_t j = 0; j < n; ++j) oi[j] += xip * wp[j];
    }
  }
  return tape.record(make_node(OpKind::kMatmul, {a.id(), b.id()}, std::move(out)));
}

namespace {

template <typename F>
Var elementwise_binary(OpKind kind, const char* name, Var a, Var b, F f) {
  Tape& tape = same_tape({a, b}, name);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rows() != y.rows() || x.cols() != y.cols()) shape_mismatch(name, x, y);
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return tape.record(make_node(kind, {a.id(), b.id()}, std::move(out)));
}

template <typename F>
Var elementwise_unary(OpKind kind, Var a, F f) {
  Tape& tape = same_tape({a}, op_name(kind).data());
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return tape.record(make_node(kind, {a.id()}, std::move(out)));
}

}  // namespace

Var add(Var a, Var b) {
  return elementwise_binary(OpKind::kAdd, "add", a, b, [](double x, double y) { return x + y; });
}

Var mul(Var a, Var b) {
  return elementwise_binary(OpKind::kMul, "mul", a, b, [](double x, double y) { return x * y; });
}

Var scale(Var a, double factor) {
  Tape& tape = same_tape({a}, "scale");
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  auto node = make_node(OpKind::kScale, {a.id()}, std::move(out));
  node.scalar = factor;
  return tape.record(std::move(node));
}

Var tanh(Var a) {
  return elementwise_unary(OpKind::kTanh, a, [](double x) { return std::tanh(x); });
}

Var sigmoid(Var a) {
  return elementwise_unary(OpKind::kSigmoid, a, [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

Var sum(Var a) {
  Tape& tape = same_tape({a}, "sum");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return tape.record(make_node(OpKind::kSum, {a.id()}, Tensor::scalar(s)));
}

Var concat_cols(std::span<const Var> parts) {
  Tape& tape = same_tape(parts, "concat_cols");
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) shape_mismatch("concat_cols", parts.front().value(), p.value());
    cols += p.value().cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&v.data()[r * v.cols()], v.cols(), &out.data()[r * cols + offset]);
    }
    offset += v.cols();
    ids.push_back(p.id());
  }
  return tape.record(make_node(OpKind::kConcatCols, std::move(ids), std::move(out)));
}

Var concat_rows(std::span<const Var> parts) {
  Tape& tape = same_tape(parts, "concat_rows");
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != cols) shape_mismatch("concat_rows", parts.front().value(), p.value());
    rows += p.value().rows();
  }
  std::vector<double> values;
  values.reserve(rows * cols);
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    const auto d = p.value().data();
    values.insert(values.end(), d.begin(), d.end());
    ids.push_back(p.id());
  }
  return tape.record(
      make_node(OpKind::kConcatRows, std::move(ids), Tensor(rows, cols, std::move(values))));
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& tape = same_tape({a}, "reshape");
  return tape.record(make_node(OpKind::kReshape, {a.id()}, a.value().reshaped(rows, cols)));
}

Var mean_rows(Var a, std::span<const double> row_mask) {
  Tape& tape = same_tape({a}, "mean_rows");
  const Tensor& x = a.value();
  if (!row_mask.empty() && row_mask.size() != x.rows()) {
    throw ShapeError("mean_rows: mask of length " + std::to_string(row_mask.size()) +
                     " for tensor " + x.shape_string());
  }
  std::size_t live = 0;
  Tensor out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (!row_mask.empty() && row_mask[r] == 0.0) continue;
    ++live;
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  }
  if (live == 0) throw ShapeError("mean_rows: no unmasked rows in " + x.shape_string());
  const double inv = 1.0 / static_cast<double>(live);
  for (double& v : out.data()) v *= inv;
  auto node = make_node(OpKind::kMeanRows, {a.id()}, std::move(out));
  node.scalar = inv;
  if (!row_mask.empty()) {
    node.aux = Tensor(x.rows(), 1, std::vector<double>(row_mask.begin(), row_mask.end()));
    node.has_aux = true;
  }
  return tape.record(std::move(node));
}

Var gather_rows(Var table, std::vector<std::size_t> indices) {
  Tape& tape = same_tape({table}, "gather_rows");
  const Tensor& t = table.value();
  const std::size_t cols = t.cols();
  Tensor out(indices.size(), cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= t.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[r]) +
                       " out of range for table " + t.shape_string());
    }
    std::copy_n(&t.data()[indices[r] * cols], cols, &out.data()[r * cols]);
  }
  auto node = make_node(OpKind::kGather, {table.id()}, std::move(out));
  node.indices = std::move(indices);
  return tape.record(std::move(node));
}

Var dropout(Var x, const Tensor& mask) {
  Tape& tape = same_tape({x}, "dropout");
  const Tensor& v = x.value();
  if (mask.rows() != v.rows() || mask.cols() != v.cols()) shape_mismatch("dropout", v, mask);
  Tensor out(v.rows(), v.cols());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * mask[i];
  auto node = make_node(OpKind::kDropout, {x.id()}, std::move(out));
  node.aux = mask;
  node.has_aux = true;
  return tape.record(std::move(node));
}

Var masked_softmax_rows(Var x, const Tensor* mask) {
  Tape& tape = same_tape({x}, "masked_softmax_rows");
  const Tensor& v = x.value();
  if (mask != nullptr && (mask->rows() != v.rows() || mask->cols() != v.cols())) {
    shape_mismatch("masked_softmax_rows", v, *mask);
  }
  const std::size_t cols = v.cols();
  Tensor out(v.rows(), cols);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto live = [&](std::size_t c) { return mask == nullptr || (*mask)(r, c) != 0.0; };
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!live(c)) continue;
      any = true;
      mx = std::max(mx, v(r, c));
    }
    if (!any) {
      throw std::invalid_argument("masked_softmax_rows: row " + std::to_string(r) +
                                  " has every entry masked");
    }
    double denom = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!live(c)) continue;
      out(r, c) = std::exp(v(r, c) - mx);
      denom += out(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= denom;
  }
  auto node = make_node(OpKind::kMaskedSoftmax, {x.id()}, std::move(out));
  if (mask != nullptr) {
    node.aux = *mask;
    node.has_aux = true;
  }
  return tape.record(std::move(node));
}

Var cross_entropy(Var logits, std::vector<std::size_t> targets) {
  Tape& tape = same_tape({logits}, "cross_entropy");
  const Tensor& z = logits.value();
  if (targets.size() != z.rows() || z.rows() == 0) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for logits " + z.shape_string());
  }
  double total = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (targets[r] >= z.cols()) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[r]) +
                       " out of range for logits " + z.shape_string());
    }
    const auto zr = z.row_span(r);
    const double mx = *std::max_element(zr.begin(), zr.end());
    double denom = 0.0;
    for (double v : zr) denom += std::exp(v - mx);
    total += std::log(denom) + mx - zr[targets[r]];
  }
  auto node = make_node(OpKind::kCrossEntropy, {logits.id()},
                        Tensor::scalar(total / static_cast<double>(z.rows())));
  node.indices = std::move(targets);
  return tape.record(std::move(node));
}

}  // namespace sgcap::ad
