#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sgcap/gradcheck.hpp"
#include "sgcap/parameters.hpp"
#include "sgcap/tape.hpp"
#include "test_util.hpp"

using namespace sgcap::ad;
using testutil::random_tensor;

TEST(Tensor, ShapeAndIndexing) {
  Tensor t(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_EQ(t.reshaped(3, 2)(2, 1), 6.0);
  EXPECT_THROW(Tensor(2, 2, std::vector<double>{1.0}), ShapeError);
  EXPECT_THROW(t.reshaped(4, 2), ShapeError);
  EXPECT_EQ(Tensor(0, 4).size(), 0u);
}

TEST(MaskedSoftmax, WorkedRows) {
  Tape tape;
  auto y = masked_softmax_rows(tape.constant(Tensor::row({0.0, 0.0})));
  EXPECT_DOUBLE_EQ(y.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(y.value()[1], 0.5);

  y = masked_softmax_rows(tape.constant(Tensor::row({std::log(2.0), 0.0})));
  EXPECT_NEAR(y.value()[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.value()[1], 1.0 / 3.0, 1e-15);

  const Tensor mask = Tensor::row({1.0, 0.0});
  y = masked_softmax_rows(tape.constant(Tensor::row({5.0, 3.0})), &mask);
  EXPECT_EQ(y.value()[0], 1.0);
  EXPECT_EQ(y.value()[1], 0.0);
}

TEST(MaskedSoftmax, AllMaskedRowIsNamed) {
  Tape tape;
  const Tensor mask(2, 2, {1, 1, 0, 0});
  try {
    masked_softmax_rows(tape.constant(Tensor(2, 2)), &mask);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(MaskedSoftmax, RandomRowsSumToOne) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution live(0.6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + trial % 9;
    Tensor mask(1, n);
    for (double& m : mask.data()) m = live(rng) ? 1.0 : 0.0;
    mask[trial % n] = 1.0;
    Tape tape;
    const auto y = masked_softmax_rows(tape.constant(random_tensor(1, n, rng, 20.0)), &mask).value();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i] == 0.0) EXPECT_EQ(y[i], 0.0);
      EXPECT_GE(y[i], 0.0);
      s += y[i];
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Primitives, ShapeErrorsMentionBothShapes) {
  Tape tape;
  try {
    matmul(tape.constant(Tensor(2, 3)), tape.constant(Tensor(2, 3)));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(tape.constant(Tensor(1, 2)), tape.constant(Tensor(2, 1))), ShapeError);
  EXPECT_THROW(cross_entropy(tape.constant(Tensor(2, 3)), {0}), std::invalid_argument);
  EXPECT_THROW(cross_entropy(tape.constant(Tensor(1, 3)), {3}), std::invalid_argument);
  EXPECT_THROW(gather_rows(tape.constant(Tensor(2, 3)), {2}), std::invalid_argument);
}

TEST(Backward, SquaredNormGradient) {
  Tape tape;
  const Tensor x = Tensor::row({1.0, 2.0});
  const Var v = tape.parameter("x", x);
  const Var loss = sum(mul(v, v));
  const auto g = tape.backward(loss);
  EXPECT_EQ(g.by_name().at("x"), Tensor::row({2.0, 4.0}));
}

TEST(Backward, UnreachedParameterIsZero) {
  Tape tape;
  const Tensor x = Tensor::row({1.0, 2.0});
  const Tensor p(2, 2, 3.0);
  const Var v = tape.parameter("x", x);
  tape.parameter("p", p);
  const auto g = tape.backward(sum(v));
  EXPECT_EQ(g.by_name().at("p"), Tensor(2, 2));
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape tape;
  const Tensor x(1, 2, 1.0);
  EXPECT_THROW(tape.backward(tape.parameter("x", x)), ShapeError);
}

TEST(Backward, GatherScatterAddsDuplicates) {
  Tape tape;
  const Tensor table(3, 2, 1.0);
  const auto g = tape.backward(sum(gather_rows(tape.parameter("t", table), {1, 1, 2})));
  EXPECT_EQ(g.by_name().at("t"), Tensor(3, 2, {0, 0, 2, 2, 1, 1}));
}

TEST(Backward, IsLinearInTheLoss) {
  std::mt19937_64 rng(9);
  const Tensor a = random_tensor(3, 4, rng), b = random_tensor(4, 2, rng);
  auto build = [&](Tape& tape) {
    const Var pa = tape.parameter("a", a), pb = tape.parameter("b", b);
    const Var l1 = sum(tanh(matmul(pa, pb)));
    const Var l2 = cross_entropy(matmul(pa, pb), {1, 0, 1});
    return std::pair{l1, l2};
  };
  const double alpha = 0.7, beta = -1.3;
  Tape t1, t2, t3;
  const auto [l1, unused1] = build(t1);
  const auto [unused2, l2] = build(t2);
  const auto [m1, m2] = build(t3);
  const auto g1 = t1.backward(l1), g2 = t2.backward(l2);
  const auto g = t3.backward(add(scale(m1, alpha), scale(m2, beta)));
  for (const char* name : {"a", "b"}) {
    const Tensor& x = g.by_name().at(name);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_NEAR(x[i], alpha * g1.by_name().at(name)[i] + beta * g2.by_name().at(name)[i], 1e-9);
    }
  }
}

TEST(Backward, ReplayIsBitIdentical) {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor(4, 4, rng);
  Tape tape;
  const Var pa = tape.parameter("a", a);
  const Var loss = sum(sigmoid(matmul(pa, tanh(pa))));
  EXPECT_EQ(tape.backward(loss).by_name(), tape.backward(loss).by_name());
}

TEST(Tape, TruncateDropsLaterNodes) {
  Tape tape;
  tape.constant(Tensor(1, 1));
  const std::size_t mark = tape.size();
  tape.constant(Tensor(1, 1));
  tape.truncate(mark);
  EXPECT_EQ(tape.size(), mark);
}

TEST(GradCheck, QuadraticIsExactToRoundoff) {
  ParameterStore store;
  store.add("x", Tensor::row({0.3, -1.2, 2.0}));
  const auto report = grad_check([](ParamBinder& p) { return sum(mul(p("x"), p("x"))); }, store,
                                 1e-10);
  EXPECT_TRUE(report.passed) << report.max_error();
  EXPECT_LE(report.max_error(), 1e-10);
}

TEST(GradCheck, TanhChainOfDepthThree) {
  std::mt19937_64 rng(4);
  ParameterStore store;
  store.add("x", random_tensor(2, 3, rng));
  const auto report =
      grad_check([](ParamBinder& p) { return sum(tanh(tanh(tanh(p("x"))))); }, store, 1e-6);
  EXPECT_TRUE(report.passed);
  EXPECT_LE(report.max_error(), 1e-6);
}

TEST(GradCheck, ResampledDropoutIsRejected) {
  ParameterStore store;
  store.add("x", Tensor(1, 6, 1.0));
  std::mt19937_64 rng(1);
  auto closure = [&rng](ParamBinder& p) {
    std::bernoulli_distribution keep(0.5);
    Tensor mask(1, 6);
    for (double& m : mask.data()) m = keep(rng) ? 2.0 : 0.0;
    return sum(dropout(p("x"), mask));
  };
  EXPECT_THROW(grad_check(closure, store, 1e-4), NondeterministicClosure);
}

TEST(GradCheck, RestoresParameters) {
  std::mt19937_64 rng(4);
  ParameterStore store;
  store.add("x", random_tensor(2, 2, rng));
  const ParameterStore before = store;
  grad_check([](ParamBinder& p) { return sum(sigmoid(p("x"))); }, store, 1e-4);
  EXPECT_EQ(store, before);
}

TEST(GradCheck, InjectedFaultFails) {
  std::mt19937_64 rng(4);
  ParameterStore store;
  store.add("x", random_tensor(2, 2, rng));
  GradCheckOptions opts;
  opts.fault = OpKind::kSigmoid;
  const auto report =
      grad_check([](ParamBinder& p) { return sum(sigmoid(p("x"))); }, store, 1e-4, opts);
  EXPECT_FALSE(report.passed);
}

TEST(Parameters, DuplicateNameRejected) {
  ParameterStore s;
  s.add("w", Tensor(1, 1));
  EXPECT_THROW(s.add("w", Tensor(1, 1)), std::invalid_argument);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  std::mt19937_64 rng(8);
  ParameterStore s;
  s.add("b", random_tensor(1, 3, rng));
  s.add("a", random_tensor(2, 2, rng));
  s.slot("a").first_moment = random_tensor(2, 2, rng);
  s.slot("a").inf_norm = random_tensor(2, 2, rng);
  s.slot("b").value[0] = -0.0;
  s.set_step_count(17);
  const auto path = std::filesystem::temp_directory_path() / "sgcap_ckpt_test.bin";
  save_checkpoint(path, s, "{\"k\":1}");
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.params, s);
  EXPECT_EQ(ck.metadata, "{\"k\":1}");
  EXPECT_TRUE(std::signbit(ck.params.value("b")[0]));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "sgcap_ckpt_garbage.bin";
  {
    std::ofstream out(path);
    out << "not a checkpoint";
  }
  EXPECT_ANY_THROW(load_checkpoint(path));
  std::filesystem::remove(path);
}
