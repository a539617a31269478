#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "narrative_infill/nn/checkpoint.hpp"
#include "narrative_infill/nn/gradcheck.hpp"
#include "narrative_infill/nn/graph.hpp"
#include "narrative_infill/nn/gru.hpp"
#include "narrative_infill/nn/optim.hpp"
#include "narrative_infill/model/infill_model.hpp"
#include "narrative_infill/run/gradcheck_suite.hpp"
#include "test_util.hpp"

using namespace narrative_infill;
using namespace narrative_infill::nn;

namespace {

Matrix<double> random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix<double> m(r, c);
  for (auto& v : m.data) v = rng.uniform(-scale, scale);
  return m;
}

struct GruFixture {
  ParameterSet<double> params;
  std::size_t first = 0;
  GruFixture(std::size_t input, std::size_t hidden, Rng* rng = nullptr, double scale = 0.5) {
    first = add_gru_parameters(params, "cell", input, hidden);
    if (rng) {
      for (auto& p : params) {
        for (auto& v : p.value) v = rng->uniform(-scale, scale);
      }
    }
  }
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Independent scalar evaluation of one GRU step.
std::vector<double> gru_oracle(const ParameterSet<double>& p, const std::vector<double>& x,
                               const std::vector<double>& h) {
  const auto& wz = p[0].value; const auto& wr = p[1].value; const auto& wh = p[2].value;
  const auto& uz = p[3].value; const auto& ur = p[4].value; const auto& uh = p[5].value;
  const auto& bz = p[6].value; const auto& br = p[7].value; const auto& bh = p[8].value;
  const std::size_t H = h.size(), X = x.size();
  std::vector<double> z(H), r(H), out(H);
  for (std::size_t i = 0; i < H; ++i) {
    double az = bz[i], ar = br[i];
    for (std::size_t j = 0; j < X; ++j) { az += wz[i * X + j] * x[j]; ar += wr[i * X + j] * x[j]; }
    for (std::size_t j = 0; j < H; ++j) { az += uz[i * H + j] * h[j]; ar += ur[i * H + j] * h[j]; }
    z[i] = sigmoid(az);
    r[i] = sigmoid(ar);
  }
  for (std::size_t i = 0; i < H; ++i) {
    double ah = bh[i];
    for (std::size_t j = 0; j < X; ++j) ah += wh[i * X + j] * x[j];
    for (std::size_t j = 0; j < H; ++j) ah += uh[i * H + j] * r[j] * h[j];
    out[i] = (1.0 - z[i]) * h[i] + z[i] * std::tanh(ah);
  }
  return out;
}

}  // namespace

TEST(Ops, SoftmaxOfZerosIsUniform) {
  Graph<double> g;
  const auto y = g.softmax(g.constant(1, 2, {0.0, 0.0}));
  EXPECT_EQ(g.values(y)[0], 0.5);
  EXPECT_EQ(g.values(y)[1], 0.5);
}

TEST(Ops, SoftmaxRowsSumToOneAndArePositive) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Graph<double> g(false);
    const auto x = random_matrix(rng, 3, 1 + rng.uniform_int(20), 30.0);
    const auto y = g.softmax(g.constant(x));
    for (std::size_t i = 0; i < x.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) {
        const double v = g.data(y)[i * x.cols + j];
        EXPECT_GT(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Ops, IdentityMatmul) {
  Rng rng(2);
  Graph<double> g;
  const auto a = random_matrix(rng, 2, 5);
  const auto y = g.matmul(g.constant(2, 2, {1, 0, 0, 1}), g.constant(a));
  EXPECT_EQ(g.matrix(y), a);
}

TEST(Ops, DropoutEvalIsIdentity) {
  Rng rng(3);
  Graph<double> g;
  const auto x = g.constant(random_matrix(rng, 4, 4));
  const auto y = g.dropout(x, 0.2, rng, false);
  EXPECT_EQ(g.matrix(y), g.matrix(x));
}

TEST(Ops, DropoutTrainUsesInvertedScaling) {
  Rng rng(4);
  Graph<double> g;
  const std::size_t n = 20000;
  const auto y = g.dropout(g.constant(1, n, std::vector<double>(n, 1.0)), 0.2, rng, true);
  std::size_t zeros = 0;
  for (double v : g.values(y)) {
    if (v == 0.0) ++zeros;
    else EXPECT_DOUBLE_EQ(v, 1.25);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.2, 0.01);
}

TEST(Ops, ShapeErrorsNameOpAndShapes) {
  Graph<double> g;
  const auto a = g.constant(2, 3, std::vector<double>(6));
  const auto b = g.constant(2, 2, std::vector<double>(4));
  try {
    g.matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("matmul"), std::string::npos);
    EXPECT_NE(what.find("(2x3)"), std::string::npos);
    EXPECT_NE(what.find("(2x2)"), std::string::npos);
  }
  EXPECT_THROW(g.add(a, b), ShapeError);
  EXPECT_THROW(g.mul(a, b), ShapeError);
  EXPECT_THROW(g.concat_rows({a, b}), ShapeError);
}

TEST(Gru, ZeroParametersHalveTheState) {
  GruFixture f(3, 2);
  Graph<double> g;
  const auto cell = bind_gru(g, f.params, f.first);
  const auto h = gru_cell(g, g.constant(1, 3, {1, 2, 3}), g.constant(1, 2, {0.8, -0.4}), cell);
  EXPECT_EQ(g.values(h)[0], 0.4);
  EXPECT_EQ(g.values(h)[1], -0.2);
  const auto h0 = gru_cell(g, g.constant(1, 3, {1, 2, 3}), g.constant(1, 2, {0, 0}), cell);
  EXPECT_EQ(g.values(h0)[0], 0.0);
  EXPECT_EQ(g.values(h0)[1], 0.0);
}

TEST(Gru, MatchesScalarOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    GruFixture f(2, 2, &rng, 1.0);
    const std::vector<double> x = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const std::vector<double> h = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Graph<double> g;
    const auto out = gru_cell(g, g.constant(1, 2, x), g.constant(1, 2, h), bind_gru(g, f.params, f.first));
    const auto expected = gru_oracle(f.params, x, h);
    EXPECT_NEAR(g.values(out)[0], expected[0], 1e-14);
    EXPECT_NEAR(g.values(out)[1], expected[1], 1e-14);
  }
}

TEST(Gru, DimensionMismatch) {
  GruFixture f(3, 2);
  Graph<double> g;
  EXPECT_THROW(gru_cell(g, g.constant(1, 2, {1, 2}), g.constant(1, 2, {0, 0}), bind_gru(g, f.params, f.first)),
               ShapeError);
}

TEST(BiGru, SingleStep) {
  Rng rng(6);
  ParameterSet<double> p;
  const auto fwd = add_gru_parameters(p, "f", 3, 2);
  const auto bwd = add_gru_parameters(p, "b", 3, 2);
  for (auto& q : p) for (auto& v : q.value) v = rng.uniform(-0.5, 0.5);
  Graph<double> g;
  const auto x = g.constant(1, 3, {0.3, -0.2, 0.9});
  const auto out = bigru(g, x, bind_gru(g, p, fwd), bind_gru(g, p, bwd));
  const auto zero = g.constant(1, 2, {0, 0});
  const auto f = gru_cell(g, x, zero, bind_gru(g, p, fwd));
  const auto b = gru_cell(g, x, zero, bind_gru(g, p, bwd));
  EXPECT_EQ(g.rows(out), 1u);
  EXPECT_EQ(g.cols(out), 4u);
  EXPECT_EQ(g.values(out)[0], g.values(f)[0]);
  EXPECT_EQ(g.values(out)[1], g.values(f)[1]);
  EXPECT_EQ(g.values(out)[2], g.values(b)[0]);
  EXPECT_EQ(g.values(out)[3], g.values(b)[1]);
}

// Reversing the input and swapping the direction parameters reverses the
// rows and swaps the two halves.
TEST(BiGru, ReversalSwapsHalves) {
  Rng rng(7);
  ParameterSet<double> p;
  const auto fwd = add_gru_parameters(p, "f", 3, 2);
  const auto bwd = add_gru_parameters(p, "b", 3, 2);
  for (auto& q : p) for (auto& v : q.value) v = rng.uniform(-0.5, 0.5);
  const auto seq = random_matrix(rng, 5, 3);
  Matrix<double> rev(5, 3);
  for (std::size_t k = 0; k < 5; ++k) std::copy(seq.row(4 - k).begin(), seq.row(4 - k).end(), rev.row(k).begin());
  Graph<double> g;
  const auto a = g.matrix(bigru(g, g.constant(seq), bind_gru(g, p, fwd), bind_gru(g, p, bwd)));
  const auto b = g.matrix(bigru(g, g.constant(rev), bind_gru(g, p, bwd), bind_gru(g, p, fwd)));
  for (std::size_t k = 0; k < 5; ++k) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(a(k, j), b(4 - k, 2 + j));
      EXPECT_EQ(a(k, 2 + j), b(4 - k, j));
    }
  }
}

TEST(BiGru, ZeroParametersGiveZeroOutput) {
  ParameterSet<double> p;
  const auto fwd = add_gru_parameters(p, "f", 3, 2);
  const auto bwd = add_gru_parameters(p, "b", 3, 2);
  Rng rng(8);
  Graph<double> g;
  const auto out = bigru(g, g.constant(random_matrix(rng, 4, 3)), bind_gru(g, p, fwd), bind_gru(g, p, bwd));
  for (double v : g.values(out)) EXPECT_EQ(v, 0.0);
}

TEST(CrossEntropy, UniformLogits) {
  Graph<double> g;
  const corpus::TokenId t[] = {2};
  const auto loss = g.cross_entropy(g.constant(1, 4, {0, 0, 0, 0}), std::span<const corpus::TokenId>(t), corpus::kPad);
  EXPECT_NEAR(g.scalar(loss), std::log(4.0), 1e-15);
  EXPECT_NEAR(g.scalar(loss), 1.386294, 1e-6);
}

TEST(CrossEntropy, PerfectPredictionLimit) {
  Graph<double> g;
  const corpus::TokenId t[] = {1};
  const auto loss = g.cross_entropy(g.constant(1, 3, {0, 60, 0}), std::span<const corpus::TokenId>(t), corpus::kPad);
  EXPECT_LT(g.scalar(loss), 1e-25);
}

TEST(CrossEntropy, PaddedPositionIsIgnored) {
  Graph<double> g;
  const corpus::TokenId both[] = {2, corpus::kPad};
  const corpus::TokenId one[] = {2};
  const auto two_rows = g.constant(2, 3, {0.5, -1.0, 2.0, 9.0, 9.0, -9.0});
  const auto a = g.cross_entropy(two_rows, std::span<const corpus::TokenId>(both), corpus::kPad);
  const auto b = g.cross_entropy(g.constant(1, 3, {0.5, -1.0, 2.0}), std::span<const corpus::TokenId>(one), corpus::kPad);
  // Hand value: log(e^0.5 + e^-1 + e^2) - 2.
  const double expected = std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(2.0)) - 2.0;
  EXPECT_NEAR(g.scalar(a), expected, 1e-15);
  EXPECT_EQ(g.scalar(a), g.scalar(b));
}

TEST(CrossEntropy, AllIgnoredIsEmptyLoss) {
  Graph<double> g;
  const corpus::TokenId t[] = {corpus::kPad};
  EXPECT_THROW(g.cross_entropy(g.constant(1, 3, {0, 0, 0}), std::span<const corpus::TokenId>(t), corpus::kPad),
               NumericError);
}

TEST(Backward, SumGivesOnes) {
  Graph<double> g;
  const auto x = g.variable(2, 3, {1, 2, 3, 4, 5, 6});
  g.backward(g.sum(x));
  for (double v : g.grad(x).data) EXPECT_EQ(v, 1.0);
}

TEST(Backward, ProductRule) {
  Graph<double> g;
  const auto x = g.variable(1, 1, {3.0});
  const auto y = g.variable(1, 1, {-2.0});
  g.backward(g.mul(x, y));
  EXPECT_EQ(g.grad(x).data[0], -2.0);
  EXPECT_EQ(g.grad(y).data[0], 3.0);
}

TEST(Backward, NonScalarLossIsAnError) {
  Graph<double> g;
  const auto x = g.variable(1, 2, {1, 2});
  EXPECT_THROW(g.backward(x), ShapeError);
}

TEST(Backward, UnusedParametersGetZeroGradient) {
  ParameterSet<double> p;
  p.add("used", {2});
  p.add("unused", {3});
  p[0].value = {1.0, 2.0};
  Graph<double> g;
  const auto used = g.parameter(p, 0);
  g.parameter(p, 1);
  g.backward(g.sum(g.mul(used, used)));
  g.accumulate_parameter_grads(p);
  EXPECT_EQ(p[0].grad, (std::vector<double>{2.0, 4.0}));
  EXPECT_EQ(p[1].grad, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(Clip, ScalesAboveThreshold) {
  ParameterSet<double> p;
  p.add("a", {2});
  p[0].grad = {12.0, 16.0};  // norm 20
  EXPECT_EQ(clip_gradients(p, 10.0), 20.0);
  EXPECT_EQ(p[0].grad, (std::vector<double>{6.0, 8.0}));
  p[0].grad = {3.0, 4.0};  // norm 5
  EXPECT_EQ(clip_gradients(p, 10.0), 5.0);
  EXPECT_EQ(p[0].grad, (std::vector<double>{3.0, 4.0}));
}

TEST(Clip, PostNormAndIdempotence) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    ParameterSet<double> p;
    p.add("a", {3, 4});
    p.add("b", {5});
    const double scale = rng.uniform(0.0, 20.0);
    for (auto& q : p) for (auto& v : q.grad) v = rng.uniform(-scale, scale);
    const double before = clip_gradients(p, 10.0);
    EXPECT_NEAR(global_grad_norm(p), std::min(before, 10.0), 1e-9);
    auto once = p;
    clip_gradients(p, 10.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = 0; j < p[i].grad.size(); ++j) EXPECT_NEAR(p[i].grad[j], once[i].grad[j], 1e-12);
    }
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double grad : {0.3, -5.0, 1e-3}) {
    ParameterSet<double> p;
    p.add("w", {1});
    p[0].value = {1.0};
    p[0].grad = {grad};
    auto state = OptimizerState<double>::for_parameters(p);
    adam_step(p, state);
    const double expected = 1.0 - 4e-4 * grad / (std::abs(grad) + 1e-8);
    EXPECT_NEAR(p[0].value[0], expected, 1e-15);
    EXPECT_NEAR(p[0].value[0], 1.0 - 4e-4 * (grad > 0 ? 1 : -1), 1e-8);
    EXPECT_EQ(state.step, 1u);
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet<double> p;
  p.add("w", {3});
  p[0].value = {1.0, -2.0, 0.5};
  auto state = OptimizerState<double>::for_parameters(p);
  for (int i = 0; i < 100; ++i) adam_step(p, state);
  EXPECT_EQ(p[0].value, (std::vector<double>{1.0, -2.0, 0.5}));
  EXPECT_EQ(state.step, 100u);
}

TEST(Adam, MinimizesQuadratic) {
  ParameterSet<double> p;
  p.add("w", {1});
  p[0].value = {1.0};
  auto state = OptimizerState<double>::for_parameters(p);
  for (int i = 0; i < 5000; ++i) {
    p[0].grad = {2.0 * p[0].value[0]};
    adam_step(p, state);
  }
  EXPECT_LT(std::abs(p[0].value[0]), 1e-2);
}

TEST(GradientCheck, SumOfSquaresIsExact) {
  Rng rng(10);
  const auto r = gradient_check(
      [](Graph<double>& g, std::span<const Var> v) { return g.sum(g.mul(v[0], v[0])); },
      {random_matrix(rng, 3, 4)}, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.n_checked, 12u);
}

TEST(GradientCheck, DetectsNondeterministicFunctions) {
  int calls = 0;
  EXPECT_THROW(gradient_check(
                   [&calls](Graph<double>& g, std::span<const Var> v) {
                     return g.scale(g.sum(v[0]), 1.0 + 1e-3 * ++calls);
                   },
                   {Matrix<double>(1, 2, 1.0)}),
               NumericError);
}

TEST(GradientCheck, FullSuitePasses) {
  for (const auto& c : run::run_gradient_suite()) {
    EXPECT_TRUE(c.passed()) << c.name << ": " << c.max_relative_error << " >= " << c.tolerance;
    EXPECT_GT(c.n_checked, 0u);
  }
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Rng rng(12);
  ParameterSet<float> p;
  p.add("layer.w", {3, 2});
  p.add("layer.b", {3});
  for (auto& q : p) for (auto& v : q.value) v = static_cast<float>(rng.normal());
  auto opt = OptimizerState<float>::for_parameters(p, 1e-3);
  for (auto& q : p) for (auto& g : q.grad) g = static_cast<float>(rng.normal());
  adam_step(p, opt);

  std::stringstream first;
  write_checkpoint(first, p, opt);
  const auto bytes = first.str();
  EXPECT_EQ(bytes.substr(0, 4), "NICK");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));

  std::stringstream in(bytes);
  const auto ck = read_checkpoint<float>(in);
  EXPECT_TRUE(ck.params.same_values(p));
  EXPECT_EQ(ck.params[0].shape, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(ck.optimizer.step, 1u);
  EXPECT_EQ(ck.optimizer.first_moment, opt.first_moment);
  EXPECT_EQ(ck.optimizer.second_moment, opt.second_moment);
  std::stringstream second;
  write_checkpoint(second, ck.params, ck.optimizer);
  EXPECT_EQ(second.str(), bytes);
}

TEST(Checkpoint, AtomicSaveAndErrors) {
  narrative_infill::testing::TempDir dir;
  ParameterSet<float> p;
  p.add("w", {2});
  const auto opt = OptimizerState<float>::for_parameters(p);
  save_checkpoint(dir / "c.nick", p, opt);
  EXPECT_FALSE(std::filesystem::exists(dir / "c.nick.tmp"));
  EXPECT_TRUE(load_checkpoint<float>(dir / "c.nick").params.same_values(p));

  const auto bad = dir.write("bad.nick", "NOPE");
  EXPECT_THROW(load_checkpoint<float>(bad), InputError);
  const auto bytes = narrative_infill::testing::read_file(dir / "c.nick");
  const auto truncated = dir.write("trunc.nick", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint<float>(truncated), InputError);
}

// Across many random models, analytic and numeric gradients agree up to a
// small absolute floor that covers finite-difference roundoff.
TEST(GradientCheck, FullModelAgreesAcrossSeeds) {
  const model::ModelDims dims{4, 3, 4, 3, 7};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const auto params = model::make_parameters<double>(dims);
    const auto enc = run::detail::toy_narrative(3, dims.d_img, rng);
    std::vector<Matrix<double>> inputs = {model::feature_matrix<double>(enc)};
    for (const auto& q : params) inputs.push_back(random_matrix(rng, q.rows, q.cols, 0.8));
    const auto plan = model::MaskPlan::of({seed % 3});
    auto fn = [&](Graph<double>& g, std::span<const Var> v) {
      return model::narrative_loss(g, model::ModelVars::from(v.subspan(1)), v[0], enc, plan).loss;
    };
    std::vector<Matrix<double>> analytic;
    {
      Graph<double> g;
      std::vector<Var> vars;
      for (const auto& m : inputs) vars.push_back(g.variable(m));
      g.backward(fn(g, vars));
      for (auto v : vars) analytic.push_back(g.grad(v));
    }
    auto eval = [&] {
      Graph<double> g(false);
      std::vector<Var> vars;
      for (const auto& m : inputs) vars.push_back(g.variable(m));
      return g.scalar(fn(g, vars));
    };
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (std::size_t j = 0; j < inputs[i].size(); ++j) {
        const double saved = inputs[i].data[j];
        inputs[i].data[j] = saved + 1e-5;
        const double plus = eval();
        inputs[i].data[j] = saved - 1e-5;
        const double minus = eval();
        inputs[i].data[j] = saved;
        const double numeric = (plus - minus) / 2e-5;
        const double a = analytic[i].data[j];
        EXPECT_LE(std::abs(a - numeric), 1e-4 * std::max(std::abs(a), std::abs(numeric)) + 1e-9)
            << "seed " << seed << " input " << i << " coord " << j;
      }
    }
  }
}
