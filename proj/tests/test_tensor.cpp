#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grad_check.hpp"
#include "uaopose/errors.hpp"
#include "uaopose/tensor.hpp"

using namespace uaopose;
using namespace uaopose::ad;
using uaopose::fd::grad_check;
using uaopose::fd::random_tensor;

namespace {

Tensor values(Var v) { return v.value(); }

// sum(y * r) for a fixed random r, so every output element gets a distinct weight.
Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Tape tape;
  Var i2 = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var b = tape.constant(Tensor::matrix({{3, 4}, {5, 6}}));
  EXPECT_EQ(values(matmul(i2, b)), Tensor::matrix({{3, 4}, {5, 6}}));
}

TEST(Matmul, HandExample) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = tape.constant(Tensor::matrix({{0, 1}, {1, 0}}));
  EXPECT_EQ(values(matmul(a, b)), Tensor::matrix({{2, 1}, {4, 3}}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3] and [2,3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSumIsRowSumsOfRightOperand) {
  std::mt19937_64 rng(7);
  const Tensor a = random_tensor({3, 4}, rng);
  const Tensor b = random_tensor({4, 5}, rng);
  Tape tape;
  Var av = tape.leaf(a);
  tape.backward(sum(matmul(av, tape.constant(b))));
  const Tensor& g = *tape.grad(av);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double row = 0.0;
      for (std::size_t n = 0; n < 5; ++n) row += b.at(j, n);
      EXPECT_NEAR(g.at(i, j), row, 1e-12);
    }
  auto check = grad_check([&](Tape& t, const std::vector<Var>& in) { return sum(matmul(in[0], t.constant(b))); },
                          {a}, 1e-6);
  EXPECT_LT(check.max_rel_err, 1e-5);
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  Tape tape;
  Var x = tape.constant(Tensor({1, 4}, {5, 5, 5, 5}));
  Var y = layer_norm(x, tape.constant(Tensor::filled({4}, 1.0)), tape.constant(Tensor({4})));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, UnitRowIsFixedPointWithoutEps) {
  Tape tape;
  Var x = tape.constant(Tensor({1, 2}, {1, -1}));
  Var y = layer_norm(x, tape.constant(Tensor::filled({2}, 1.0)), tape.constant(Tensor({2})), 0.0);
  EXPECT_EQ(y.value(), Tensor({1, 2}, {1, -1}));
}

TEST(LayerNorm, ZeroVarianceWithoutEpsIsNumericError) {
  Tape tape;
  Var x = tape.constant(Tensor({1, 3}, {2, 2, 2}));
  EXPECT_THROW(layer_norm(x, tape.constant(Tensor::filled({3}, 1.0)), tape.constant(Tensor({3})), 0.0),
               NumericError);
}

TEST(LayerNorm, GainShapeMustMatchFeatureAxis) {
  Tape tape;
  Var x = tape.constant(Tensor({2, 3}));
  EXPECT_THROW(layer_norm(x, tape.constant(Tensor({4})), tape.constant(Tensor({4}))), ShapeError);
}

TEST(LayerNorm, GradientCheck) {
  std::mt19937_64 rng(11);
  const std::vector<Tensor> in = {random_tensor({4, 8}, rng), random_tensor({8}, rng, 0.5, 1.5),
                                  random_tensor({8}, rng)};
  auto r = grad_check(
      [](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, layer_norm(v[0], v[1], v[2]), 3); }, in);
  EXPECT_LT(r.max_rel_err, 1e-4);
  EXPECT_EQ(r.checked, 48u);
}

TEST(Gelu, KnownValues) {
  EXPECT_EQ(gelu_value(0.0), 0.0);
  EXPECT_NEAR(gelu_value(10.0), 10.0, 1e-6);
  const double oracle = 1.0 * 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  EXPECT_NEAR(gelu_value(1.0), oracle, 1e-15);
  EXPECT_NEAR(gelu_value(1.0), 0.841345, 1e-6);
}

TEST(Relu, DefinitionAndIdempotence) {
  Tape tape;
  Var x = tape.constant(Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(relu(x).value(), Tensor({3}, {0, 0, 2}));
  std::mt19937_64 rng(5);
  Var r = tape.constant(random_tensor({50}, rng));
  EXPECT_EQ(relu(relu(r)).value(), relu(r).value());
}

TEST(Relu, GradientIsMaskOfPositives) {
  std::mt19937_64 rng(9);
  Tensor x = random_tensor({40}, rng);
  for (auto& v : x.data())
    if (std::abs(v) < 1e-3) v = 0.5;
  Tape tape;
  Var xv = tape.leaf(x);
  tape.backward(sum(relu(xv)));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ((*tape.grad(xv))[i], x[i] > 0 ? 1.0 : 0.0);
  auto r = grad_check([](Tape&, const std::vector<Var>& v) { return sum(relu(v[0])); }, {x});
  EXPECT_EQ(r.skipped, 0u);
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(Relu, SubgradientAtZeroIsZero) {
  Tape tape;
  Var x = tape.leaf(Tensor({1}, {0.0}));
  tape.backward(sum(relu(x)));
  EXPECT_EQ((*tape.grad(x))[0], 0.0);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  tape.backward(sum(x));
  EXPECT_EQ(*tape.grad(x), Tensor::filled({2, 3}, 1.0));
}

TEST(Backward, SquareGivesTwoX) {
  std::mt19937_64 rng(3);
  const Tensor x0 = random_tensor({5}, rng);
  Tape tape;
  Var x = tape.leaf(x0);
  tape.backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ((*tape.grad(x))[i], 2 * x0[i]);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape tape;
  Var x = tape.leaf(Tensor({3}));
  EXPECT_THROW(tape.backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, RepeatedCallsAccumulateUntilZeroGrad) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1, 2}));
  Var loss = sum(scale(x, 3.0));
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_EQ(*tape.grad(x), Tensor::filled({2}, 6.0));
  tape.zero_grad();
  EXPECT_EQ(tape.grad(x), nullptr);
  tape.backward(loss);
  EXPECT_EQ(*tape.grad(x), Tensor::filled({2}, 3.0));
}

TEST(Backward, OneRuleInvocationPerNode) {
  std::mt19937_64 rng(1);
  Tape tape;
  Var a = tape.leaf(random_tensor({3, 4}, rng));
  Var b = tape.leaf(random_tensor({4, 2}, rng));
  Var g = tape.leaf(Tensor::filled({2}, 1.0));
  Var beta = tape.leaf(Tensor({2}));
  Var h = gelu(layer_norm(matmul(a, b), g, beta));
  Var loss = mean(exp(scale(h, 0.1)));
  tape.backward(loss);
  EXPECT_EQ(tape.backward_invocations(), tape.op_count());
  EXPECT_EQ(tape.op_count(), 6u);
}

TEST(Backward, ConstantsReceiveNoGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1, 2}));
  Var c = tape.constant(Tensor({2}, {3, 4}));
  tape.backward(sum(mul(x, c)));
  EXPECT_EQ(tape.grad(c), nullptr);
  EXPECT_EQ(*tape.grad(x), Tensor({2}, {3, 4}));
}

TEST(Detach, CutsTheGradientPath) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1, 2}));
  Var y = detach(scale(x, 5.0));
  EXPECT_FALSE(tape.requires_grad(y));
  tape.backward(sum(add(mul(x, x), y)));
  EXPECT_EQ(*tape.grad(x), Tensor({2}, {2, 4}));
}

TEST(Numeric, NonFiniteResultThrows) {
  Tape tape;
  Var x = tape.constant(Tensor({1}, {1000.0}));
  EXPECT_THROW(exp(x), NumericError);
  EXPECT_THROW(tape.leaf(Tensor({1}, {std::nan("")})), NumericError);
}

TEST(Broadcast, BiasAgainstRows) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var b = tape.leaf(Tensor({3}, {10, 20, 30}));
  Var y = add(x, b);
  EXPECT_EQ(y.value(), Tensor({2, 3}, {11, 22, 33, 14, 25, 36}));
  tape.backward(sum(y));
  EXPECT_EQ(*tape.grad(b), Tensor::filled({3}, 2.0));
  EXPECT_THROW(add(b, x), ShapeError);
}

TEST(Shape, TransposeSliceConcatReshape) {
  Tape tape;
  Var x = tape.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(transpose(x).value(), Tensor({3, 2}, {1, 4, 2, 5, 3, 6}));
  EXPECT_EQ(slice(x, 1, 1, 3).value(), Tensor({2, 2}, {2, 3, 5, 6}));
  EXPECT_EQ(concat({x, x}, 0).value().shape(), (Shape{4, 3}));
  EXPECT_EQ(concat({slice(x, 1, 0, 1), slice(x, 1, 1, 3)}, 1).value(), x.value());
  EXPECT_EQ(reshape(x, {3, 2}).value().vec(), x.value().vec());
  EXPECT_THROW(reshape(x, {4, 2}), ShapeError);
  Var y = tape.constant(Tensor({2, 3, 4}));
  EXPECT_EQ(transpose(y, 0, 2).value().shape(), (Shape{4, 3, 2}));
}

TEST(Clamp, ValuesAndGradientMask) {
  Tape tape;
  Var x = tape.leaf(Tensor({4}, {-20, -1, 3, 15}));
  Var y = clamp(x, -10, 10);
  EXPECT_EQ(y.value(), Tensor({4}, {-10, -1, 3, 10}));
  tape.backward(sum(y));
  EXPECT_EQ(*tape.grad(x), Tensor({4}, {0, 1, 1, 0}));
}

TEST(Tape, RewindDropsLaterNodes) {
  Tape tape;
  Var a = tape.leaf(Tensor({2}, {1, 2}));
  const std::size_t mark = tape.node_count();
  sum(scale(a, 2.0));
  EXPECT_EQ(tape.op_count(), 2u);
  tape.rewind(mark);
  EXPECT_EQ(tape.node_count(), mark);
  EXPECT_EQ(tape.op_count(), 0u);
  Var loss = sum(mul(a, a));
  tape.backward(loss);
  EXPECT_EQ(*tape.grad(a), Tensor({2}, {2, 4}));
  EXPECT_THROW(tape.rewind(100), ContractError);
}

TEST(Tape, OperandsFromAnotherTapeRejected) {
  Tape t1, t2;
  Var a = t1.leaf(Tensor({2}));
  Var b = t2.leaf(Tensor({2}));
  EXPECT_THROW(add(a, b), ContractError);
}

TEST(Determinism, SameInputsSameBits) {
  auto run = [] {
    std::mt19937_64 rng(42);
    Tape tape;
    Var a = tape.leaf(random_tensor({8, 16}, rng));
    Var w = tape.leaf(random_tensor({16, 16}, rng));
    Var y = gelu(layer_norm(matmul(a, w), tape.constant(Tensor::filled({16}, 1.0)), tape.constant(Tensor({16}))));
    Var loss = mean(mul(y, y));
    tape.backward(loss);
    return std::make_pair(y.value(), *tape.grad(w));
  };
  EXPECT_EQ(run(), run());
}

// Every differentiable operator against central differences, 50 seeds each.
class OperatorGradients : public ::testing::TestWithParam<int> {};

TEST_P(OperatorGradients, MatchFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  std::mt19937_64 rng(seed);
  struct Case {
    const char* name;
    std::vector<Tensor> inputs;
    fd::ScalarFn fn;
  };
  const std::vector<Case> cases = {
      {"matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, matmul(v[0], v[1]), seed); }},
      {"add_broadcast", {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, add(v[0], v[1]), seed); }},
      {"sub", {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, sub(v[0], v[1]), seed); }},
      {"mul_broadcast", {random_tensor({2, 3, 4}, rng), random_tensor({3, 4}, rng)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, mul(v[0], v[1]), seed); }},
      {"scale_shift", {random_tensor({5}, rng)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, shift(scale(v[0], -1.7), 0.3), seed); }},
      {"layer_norm", {random_tensor({3, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, layer_norm(v[0], v[1], v[2]), seed); }},
      {"gelu", {random_tensor({10}, rng, -3, 3)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, gelu(v[0]), seed); }},
      {"relu", {random_tensor({10}, rng)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, relu(v[0]), seed); }},
      {"exp", {random_tensor({6}, rng)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, exp(v[0]), seed); }},
      {"sqrt", {random_tensor({6}, rng, 0.2, 2.0)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, sqrt(v[0]), seed); }},
      {"mean_sum_last", {random_tensor({3, 4}, rng)},
       [&](Tape& t, const std::vector<Var>& v) {
         return add(mean(mul(v[0], v[0])), weighted_sum(t, sum_last(v[0]), seed));
       }},
      {"reshape_transpose", {random_tensor({2, 3, 4}, rng)},
       [&](Tape& t, const std::vector<Var>& v) {
         return weighted_sum(t, reshape(transpose(v[0], 0, 2), {4, 6}), seed);
       }},
      {"slice_concat", {random_tensor({4, 3}, rng), random_tensor({2, 3}, rng)},
       [&](Tape& t, const std::vector<Var>& v) {
         return weighted_sum(t, concat({slice(v[0], 0, 1, 3), v[1]}, 0), seed);
       }},
      {"clamp", {random_tensor({8}, rng, -3, 3)},
       [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, clamp(v[0], -1.0, 1.0), seed); }},
  };
  for (const auto& c : cases) {
    auto r = grad_check(c.fn, c.inputs);
    EXPECT_LT(r.max_rel_err, 1e-4) << c.name;
    EXPECT_GT(r.checked, 0u) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OperatorGradients, ::testing::Range(0, 50));
