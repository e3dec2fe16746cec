#include <gtest/gtest.h>

#include <cmath>

#include "lcr/grad_check.hpp"
#include "lcr/lcr_cell.hpp"
#include "lcr/ops.hpp"
#include "test_util.hpp"

using namespace lcr;
using testutil::max_abs_diff;
using testutil::rand_tensor;

namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST(CellStep, ElementwiseClosedForm) {
  Rng rng(1);
  const Tensor a = rand_tensor(rng, {5, 8}, -3, 3), e = rand_tensor(rng, {5, 8}, -1, 1);
  RecurrentState s = RecurrentState::zeros({5, 8});
  s.cell = rand_tensor(rng, {5, 8}, -2, 2);
  const CellOutput out = cell_step(a, e, s);
  for (std::size_t i = 0; i < 40; ++i) {
    const double c = e.at(i) * (std::tanh(a.at(i)) + s.cell.at(i)) + s.cell.at(i);
    EXPECT_NEAR(out.state.cell.at(i), c, 1e-15);
    EXPECT_NEAR(out.state.hidden.at(i), std::tanh(c) * sig(a.at(i)), 1e-15);
  }
  EXPECT_EQ(testutil::to_vec(out.output), testutil::to_vec(out.state.hidden));
}

TEST(CellStep, HandWorkedScalar) {
  // A = 0, E = 1, C_prev = 0.5: C = tanh(0) + 0.5 + 0.5 = 1, H = tanh(1) / 2
  RecurrentState s = RecurrentState::zeros({1});
  s.cell = Tensor::full({1}, 0.5);
  const CellOutput out = cell_step(Tensor::full({1}, 0.0), Tensor::full({1}, 1.0), s);
  EXPECT_DOUBLE_EQ(out.state.cell.item(), 1.0);
  EXPECT_DOUBLE_EQ(out.state.hidden.item(), std::tanh(1.0) * 0.5);
}

TEST(CellStep, ZeroEdgeFreezesTheCell) {
  Rng rng(2);
  RecurrentState s = RecurrentState::zeros({4, 6});
  s.cell = rand_tensor(rng, {4, 6}, -2, 2);
  const std::vector<double> start = testutil::to_vec(s.cell);
  for (int t = 0; t < 20; ++t) {
    s = cell_step(rand_tensor(rng, {4, 6}, -5, 5), Tensor::zeros({4, 6}), s).state;
    EXPECT_EQ(testutil::to_vec(s.cell), start) << "frame " << t;
  }
  EXPECT_EQ(s.frame, 20u);
}

TEST(CellStep, ZeroStateAndZeroEdgeGiveZeroOutput) {
  Rng rng(3);
  const CellOutput out =
      cell_step(rand_tensor(rng, {3, 4}), Tensor::zeros({3, 4}), RecurrentState::zeros({3, 4}));
  for (double v : out.output.data()) EXPECT_EQ(v, 0.0);
}

TEST(CellStep, UnclampedCellGrowsClampedStaysBounded) {
  const Tensor a = Tensor::full({2, 2}, 1.0), e = Tensor::full({2, 2}, 1.0);
  RecurrentState free = RecurrentState::zeros({2, 2}), bounded = free;
  const CellOptions clamp{true, 3.0};
  for (int t = 0; t < 12; ++t) {
    free = cell_step(a, e, free).state;
    bounded = cell_step(a, e, bounded, clamp).state;
  }
  // with E = 1 the cell doubles each frame: C_t = tanh(1) (2^t - 1)
  EXPECT_NEAR(free.cell.at(0), std::tanh(1.0) * (std::pow(2.0, 12) - 1), 1e-9);
  for (double v : bounded.cell.data()) EXPECT_EQ(v, 3.0);
}

TEST(CellStep, ShapeMismatchThrows) {
  EXPECT_THROW(cell_step(Tensor({2, 3}), Tensor({3, 2}), RecurrentState::zeros({2, 3})), DimensionError);
  EXPECT_THROW(cell_step(Tensor({2, 3}), Tensor({2, 3}), RecurrentState::zeros({2, 4})), DimensionError);
}

TEST(RecurrentStateTest, BytesCountBothTensors) {
  EXPECT_EQ(RecurrentState::zeros({17, 64}).bytes(), 2u * 17 * 64 * sizeof(double));
}

TEST(CellStep, Gradients) {
  Rng rng(5);
  const Tensor a = rand_tensor(rng, {3, 4}, -2, 2, true), e = rand_tensor(rng, {3, 4}, -1, 1, true);
  const Tensor c0 = rand_tensor(rng, {3, 4}, -1, 1, true), w = rand_tensor(rng, {3, 4});
  const auto report = grad_check(
      [&] {
        RecurrentState s = RecurrentState::zeros({3, 4});
        s.cell = c0;
        const CellOutput one = cell_step(a, e, s);
        const CellOutput two = cell_step(a, e, one.state);
        return sum(two.output * w) + sum(two.state.cell);
      },
      {{"gate", a}, {"edge", e}, {"cell0", c0}});
  EXPECT_LT(report.max_rel_error, 1e-7) << report.describe();
}

TEST(CellStep, EightStepUnrolledGradients) {
  Rng rng(9);
  std::vector<Tensor> gates, edges;
  std::vector<NamedParam> params;
  for (int t = 0; t < 8; ++t) {
    gates.push_back(rand_tensor(rng, {2, 3}, -2, 2, true));
    edges.push_back(rand_tensor(rng, {2, 3}, -0.6, 0.6, true));
    params.push_back({"gate" + std::to_string(t), gates.back()});
    params.push_back({"edge" + std::to_string(t), edges.back()});
  }
  const Tensor w = rand_tensor(rng, {2, 3});
  for (bool clamp : {false, true}) {
    const auto report = grad_check(
        [&] {
          RecurrentState s = RecurrentState::zeros({2, 3});
          Tensor loss = Tensor::scalar(0.0);
          for (int t = 0; t < 8; ++t) {
            const CellOutput out = cell_step(gates[t], edges[t], s, {clamp, 0.8});
            loss = loss + sum(out.output * w);
            s = out.state;
          }
          return loss;
        },
        params);
    EXPECT_LT(report.max_rel_error, 1e-6) << report.describe();
  }
}

TEST(Classifier, UsesClsFeaturesOfOutputAndCell) {
  Rng rng(6);
  const ClassifierHead head = ClassifierHead::create(4, 3, rng);
  testutil::randomize(head.ln_gain, rng, 0.5, 1.5);
  testutil::randomize(head.ln_bias, rng, -0.5, 0.5);
  const Tensor o = rand_tensor(rng, {5, 4}), c = rand_tensor(rng, {5, 4});
  const Tensor logits = classify(o, c, head, {2, 2, true});
  ASSERT_EQ(logits.shape(), (Shape{3}));

  std::vector<double> f(8);
  for (std::size_t i = 0; i < 4; ++i) {
    f[i] = o.at(16 + i);
    f[4 + i] = c.at(16 + i);
  }
  double mu = 0, var = 0;
  for (double v : f) mu += v / 8;
  for (double v : f) var += (v - mu) * (v - mu) / 8;
  for (std::size_t i = 0; i < 8; ++i) f[i] = (f[i] - mu) / std::sqrt(var + 1e-5) * head.ln_gain.at(i) + head.ln_bias.at(i);
  for (std::size_t k = 0; k < 3; ++k) {
    double z = 0;
    for (std::size_t i = 0; i < 8; ++i) z += f[i] * head.weight.at(i * 3 + k);
    EXPECT_NEAR(logits.at(k), z, 1e-13);
  }

  // patch tokens do not matter
  Tensor o2 = o.clone();
  o2.mutable_data()[0] += 5.0;
  EXPECT_EQ(testutil::to_vec(classify(o2, c, head, {2, 2, true})), testutil::to_vec(logits));
}

TEST(Classifier, BatchedAndErrors) {
  Rng rng(7);
  const ClassifierHead head = ClassifierHead::create(4, 3, rng);
  const Tensor o = rand_tensor(rng, {2, 5, 4}), c = rand_tensor(rng, {2, 5, 4});
  const Tensor logits = classify(o, c, head, {2, 2, true});
  ASSERT_EQ(logits.shape(), (Shape{2, 3}));
  for (std::size_t b = 0; b < 2; ++b) {
    auto row = [&](const Tensor& t) { return reshape(slice(t, 0, b, b + 1), {5, 4}); };
    EXPECT_LT(max_abs_diff(slice(logits, 0, b, b + 1).data(), classify(row(o), row(c), head, {2, 2, true}).data()),
              1e-14);
  }
  EXPECT_THROW(classify(Tensor({4, 4}), Tensor({4, 4}), head, {2, 2, false}), ConfigError);
  EXPECT_THROW(classify(Tensor({6, 4}), Tensor({6, 4}), head, {2, 2, true}), DimensionError);
}

TEST(Classifier, Gradients) {
  Rng rng(8);
  const ClassifierHead head = ClassifierHead::create(4, 3, rng);
  const Tensor o = rand_tensor(rng, {2, 5, 4}, -1, 1, true), c = rand_tensor(rng, {2, 5, 4}, -1, 1, true);
  const Tensor w = rand_tensor(rng, {2, 3});
  auto params = head.parameters("head.");
  params.push_back({"output", o});
  params.push_back({"cell", c});
  const auto report = grad_check([&] { return sum(classify(o, c, head, {2, 2, true}) * w); }, params);
  EXPECT_LT(report.max_rel_error, 1e-7) << report.describe();
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  const std::vector<double> logits{0.1, 0.7, 0.7, -1.0};
  EXPECT_EQ(predict(logits), 1u);
  EXPECT_EQ(predict_batch(Tensor({2, 3}, {3, 1, 2, 0, 0, 5})), (std::vector<std::size_t>{0, 2}));
}
