#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <numbers>

#include "test_support.hpp"
#include "unifex/error.hpp"
#include "unifex/losses.hpp"
#include "unifex/random.hpp"

namespace unifex {
namespace {

constexpr double kPi = std::numbers::pi;

MatrixD cos_matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return MatrixD(rows, cols, std::vector<double>(values));
}

ClassifierWeights unit_axes(std::size_t classes, std::size_t dim) {
  ClassifierWeights w(classes, 1, dim);
  for (std::size_t c = 0; c < classes; ++c) w.rows()(c, c) = 1.0;
  return w;
}

TEST(CosineLogitsTest, SelfSimilarityAndOrthogonality) {
  MatrixD x(1, 4);
  x(0, 0) = 1.0;
  const auto out = cosine_logits(x, unit_axes(3, 4));
  EXPECT_EQ(out.cos(0, 0), 1.0);
  EXPECT_EQ(out.cos(0, 1), 0.0);
  EXPECT_TRUE(out.best_subcenter.empty());
}

TEST(CosineLogitsTest, SubCenterMaxPooling) {
  // Sub-center cosines {0.2, 0.9, -0.5} against x = e0.
  MatrixD rows(3, 2);
  for (std::size_t k = 0; k < 3; ++k) {
    const double c = std::array{0.2, 0.9, -0.5}[k];
    rows(k, 0) = c;
    rows(k, 1) = std::sqrt(1.0 - c * c);
  }
  MatrixD x(1, 2);
  x(0, 0) = 1.0;
  const auto out = cosine_logits(x, ClassifierWeights(1, 3, rows));
  EXPECT_DOUBLE_EQ(out.cos(0, 0), 0.9);
  EXPECT_EQ(out.best_subcenter[0], 1u);
}

TEST(CosineLogitsTest, TiesPickLowestSubCenterAndValuesAreClamped) {
  MatrixD rows(2, 2);
  rows(0, 0) = rows(1, 0) = 1.0;
  MatrixD x(1, 2);
  x(0, 0) = 1.0 + 1e-15;  // rounding beyond the unit sphere
  const auto out = cosine_logits(x, ClassifierWeights(1, 2, rows));
  EXPECT_EQ(out.best_subcenter[0], 0u);
  EXPECT_LE(out.cos(0, 0), 1.0);
}

TEST(CosineLogitsTest, ClampHoldsForRandomInputs) {
  const auto x = testing::random_matrix(40, 32, 5);
  MatrixD xu = x;
  l2_normalize_rows_inplace(xu);
  const auto w = ClassifierWeights::random(30, 2, 32, 6);
  // Duplicate some x rows into the classifier so cosines sit at the boundary.
  ClassifierWeights w2 = w;
  for (std::size_t c = 0; c < 10; ++c) std::copy(xu.row(c).begin(), xu.row(c).end(), w2.rows().row(2 * c).begin());
  for (const ClassifierWeights* weights : std::array<const ClassifierWeights*, 2>{&w, &w2}) {
    const auto out = cosine_logits(xu, weights->normalized());
    for (const double v : out.cos.values()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(CosineLogitsTest, DimensionMismatchIsShapeError) {
  EXPECT_THROW(cosine_logits(MatrixD(2, 3), unit_axes(2, 4)), ShapeError);
}

TEST(ArcFaceTransformTest, ZeroMarginIsPlainScaledCosine) {
  const auto cos = cos_matrix(2, 3, {0.3, -0.99, 1.0, -1.0, 0.0, 0.5});
  const ClassId targets[] = {2, 0};
  const auto out = arcface_transform(cos, targets, 0.0, 7.0);
  for (std::size_t i = 0; i < cos.size(); ++i) EXPECT_EQ(out.logits.values()[i], 7.0 * cos.values()[i]);
}

TEST(ArcFaceTransformTest, UnitCosineGivesScaledCosMargin) {
  const auto cos = cos_matrix(1, 2, {1.0, 0.25});
  const ClassId targets[] = {0};
  const auto out = arcface_transform(cos, targets, 0.5, 30.0);
  EXPECT_DOUBLE_EQ(out.logits(0, 0), 26.327476856711183);
  EXPECT_EQ(out.logits(0, 1), 30.0 * 0.25);
}

TEST(ArcFaceTransformTest, FallbackBeyondPi) {
  const double m = 0.5;
  const double c = std::cos(kPi - m) - 0.01;  // theta + m > pi
  const auto cos = cos_matrix(1, 2, {c, 0.1});
  const ClassId targets[] = {0};
  const auto out = arcface_transform(cos, targets, m, 2.0);
  EXPECT_DOUBLE_EQ(out.logits(0, 0), 2.0 * (c - m * std::sin(m)));
  EXPECT_EQ(out.dlogit_dcos(0, 0), 2.0);
}

TEST(ArcFaceTransformTest, MarginStrictlyLowersTargetLogit) {
  for (const double m : {0.1, 0.5, 1.0, 2.0}) {
    for (int g = 0; g <= 400; ++g) {
      const double c = -std::cos(m) + (1.0 + std::cos(m)) * g / 400.0;
      if (c <= -std::cos(m)) continue;
      const auto cos = cos_matrix(1, 1, {c});
      const ClassId targets[] = {0};
      EXPECT_LT(arcface_transform(cos, targets, m, 1.0).logits(0, 0), c) << "m=" << m << " c=" << c;
    }
  }
}

TEST(ArcFaceTransformTest, MarginOutOfRangeIsConfigError) {
  const auto cos = cos_matrix(1, 1, {0.0});
  const ClassId targets[] = {0};
  EXPECT_THROW(arcface_transform(cos, targets, -0.1, 1.0), ConfigError);
  EXPECT_THROW(arcface_transform(cos, targets, kPi, 1.0), ConfigError);
}

TEST(LiArcFaceTransformTest, Endpoints) {
  const ClassId targets[] = {0};
  EXPECT_DOUBLE_EQ(li_arcface_transform(cos_matrix(1, 1, {1.0}), targets, 0.0, 5.0).logits(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(li_arcface_transform(cos_matrix(1, 1, {-1.0}), targets, 0.0, 5.0).logits(0, 0), -5.0);
}

TEST(LiArcFaceTransformTest, TargetLogitDecreasesInAngle) {
  const ClassId targets[] = {0};
  double previous = INFINITY;
  for (int g = 0; g <= 10000; ++g) {
    const double theta = kPi * g / 10000.0;
    const double logit = li_arcface_transform(cos_matrix(1, 1, {std::cos(theta)}), targets, 0.5, 30.0).logits(0, 0);
    EXPECT_LT(logit, previous);
    previous = logit;
  }
}

TEST(AdaCosTest, InitialScale) {
  LossConfig cfg;
  cfg.variant = LossVariant::AdaCos;
  EXPECT_DOUBLE_EQ(LossState::initial(cfg, 10).adacos_s, 3.1073447968483734);
  EXPECT_THROW(LossState::initial(cfg, 1), ConfigError);
}

TEST(AdaCosTest, LargeMedianAngleClampsToQuarterPi) {
  // Every target cosine is 0.1 (angle ~84 deg > 45 deg).
  const auto cos = cos_matrix(2, 3, {0.1, 0.2, -0.3, 0.4, 0.1, 0.0});
  const ClassId targets[] = {0, 1};
  LossState state;
  state.adacos_s = 2.0;
  const double b_avg = (std::exp(2.0 * 0.2) + std::exp(2.0 * -0.3) + std::exp(2.0 * 0.4) + std::exp(0.0)) / 2.0;
  EXPECT_DOUBLE_EQ(adacos_update_scale(state, cos, targets), std::log(b_avg) / std::cos(kPi / 4.0));
}

TEST(AdaCosTest, MatchesBruteForceRecomputation) {
  CounterRng rng(4);
  const std::size_t n = 9, c = 6;
  MatrixD cos(n, c);
  std::vector<ClassId> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    targets[i] = static_cast<ClassId>(rng.uniform_index(c));
    for (std::size_t j = 0; j < c; ++j) cos(i, j) = 2.0 * rng.uniform() - 1.0;
    cos(i, targets[i]) = 0.75 + 0.25 * rng.uniform();  // median angle < pi/4
  }
  LossState state;
  state.adacos_s = 3.0;

  // Oracle: explicit double loop and a fully sorted median.
  double b = 0.0;
  std::vector<double> angles;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) b += j == targets[i] ? 0.0 : std::exp(3.0 * cos(i, j));
    angles.push_back(std::acos(cos(i, targets[i])));
  }
  std::sort(angles.begin(), angles.end());
  const double expected = std::log(b / n) / std::cos(angles[(n - 1) / 2]);
  EXPECT_NEAR(adacos_update_scale(state, cos, targets), expected, 1e-12);
}

TEST(AdaCosTest, FixedModeKeepsInitialScale) {
  auto inst = testing::make_loss_instance(LossVariant::AdaCos, 9, 8, 5, 16, 1);
  inst.config.adacos_dynamic = false;
  const auto out = loss_and_grad(inst.config, inst.x, inst.weights, inst.targets, inst.state);
  EXPECT_EQ(out.state.adacos_s, LossState::initial(inst.config, 5).adacos_s);
  inst.config.adacos_dynamic = true;
  EXPECT_NE(loss_and_grad(inst.config, inst.x, inst.weights, inst.targets, inst.state).state.adacos_s,
            out.state.adacos_s);
}

TEST(AdaCosTest, SingleClassIsConfigError) {
  const ClassId targets[] = {0};
  EXPECT_THROW(adacos_update_scale(LossState{}, cos_matrix(1, 1, {0.5}), targets), ConfigError);
}

TEST(CurricularFaceTest, ZeroTAndEasyNegativesMatchArcFace) {
  const auto cos = cos_matrix(2, 3, {0.9, 0.1, -0.2, 0.0, 0.8, 0.3});
  const ClassId targets[] = {0, 1};
  LossState state;
  const auto curr = curricular_transform(cos, targets, 0.5, 30.0, 0.01, state);
  const auto arc = arcface_transform(cos, targets, 0.5, 30.0);
  EXPECT_EQ(curr.scaled.logits, arc.logits);
  EXPECT_EQ(curr.scaled.dlogit_dcos, arc.dlogit_dcos);
}

TEST(CurricularFaceTest, HardNegativeIsModulated) {
  const double m = 0.5;
  const double target_cos = std::cos(kPi / 3.0 - m);  // cos(theta + m) = 0.5
  const auto cos = cos_matrix(1, 2, {target_cos, 0.8});
  const ClassId targets[] = {0};
  LossState state;
  state.curricular_t = 0.3;
  const auto out = curricular_transform(cos, targets, m, 30.0, 0.01, state);
  EXPECT_NEAR(out.scaled.logits(0, 1), 30.0 * 0.88, 1e-12);
  EXPECT_NEAR(out.scaled.logits(0, 0), 30.0 * 0.5, 1e-12);
}

TEST(CurricularFaceTest, EmaStep) {
  const auto cos = cos_matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  const ClassId targets[] = {0, 1};
  const auto out = curricular_transform(cos, targets, 0.5, 30.0, 0.01, LossState{});
  EXPECT_DOUBLE_EQ(out.state.curricular_t, 0.01);
}

TEST(AdaFaceTest, MidQualityReducesToAdditiveMargin) {
  const auto cos = cos_matrix(2, 2, {0.6, 0.2, -0.1, 0.3});
  const ClassId targets[] = {0, 1};
  LossState state;
  state.adaface_mu = 5.0;
  const double norms[] = {5.0, 5.0};
  const AdaFaceParams p{0.4, 30.0, 0.333, 0.01, 1e-3};
  const auto out = adaface_transform(cos, targets, norms, p, state);
  EXPECT_NEAR(out.scaled.logits(0, 0), 30.0 * (0.6 - 0.4), 1e-12);
  EXPECT_NEAR(out.scaled.logits(1, 1), 30.0 * (0.3 - 0.4), 1e-12);
  EXPECT_EQ(out.scaled.logits(0, 1), 30.0 * 0.2);
  EXPECT_EQ(out.scaled.logits(1, 0), 30.0 * -0.1);
}

TEST(AdaFaceTest, HighQualityAppliesBothMarginTerms) {
  const auto cos = cos_matrix(1, 2, {0.6, 0.2});
  const ClassId targets[] = {0};
  LossState state;
  state.adaface_mu = 1.0;
  state.adaface_sigma = 1.0;
  const double norms[] = {100.0};  // norm_hat clamps to 1
  const AdaFaceParams p{0.4, 30.0, 0.333, 0.01, 1e-3};
  const auto out = adaface_transform(cos, targets, norms, p, state);
  // s * (cos(theta - m) - 2m), evaluated independently.
  EXPECT_NEAR(out.scaled.logits(0, 0), 1.9251381074595397, 1e-12);
  EXPECT_EQ(out.scaled.logits(0, 1), 30.0 * 0.2);
}

TEST(AdaFaceTest, StatisticsUpdateAndDegenerateBatch) {
  const auto cos = cos_matrix(3, 2, {0.6, 0.2, 0.1, 0.5, 0.3, 0.3});
  const ClassId targets[] = {0, 1, 0};
  LossState state;
  const double norms[] = {2.0, 4.0, 6.0};
  const AdaFaceParams p{0.4, 30.0, 0.333, 0.5, 1e-3};
  const auto out = adaface_transform(cos, targets, norms, p, state);
  EXPECT_DOUBLE_EQ(out.state.adaface_mu, 0.5 * 4.0 + 0.5 * 20.0);
  EXPECT_DOUBLE_EQ(out.state.adaface_sigma, 0.5 * 2.0 + 0.5 * 100.0);

  const ClassId one_target[] = {0};
  const double one_norm[] = {3.0};
  const auto single = adaface_transform(cos_matrix(1, 2, {0.6, 0.2}), one_target, one_norm, p, state);
  EXPECT_EQ(single.state.adaface_mu, state.adaface_mu);
  EXPECT_EQ(single.state.adaface_sigma, state.adaface_sigma);
}

TEST(DynamicMarginTest, EndpointsAndMidpoint) {
  const auto stats = ClassStats::from_counts({3, 100, 51});
  EXPECT_DOUBLE_EQ(dynamic_margin(3, stats, 0.2, 0.6), 0.6);
  EXPECT_DOUBLE_EQ(dynamic_margin(100, stats, 0.2, 0.6), 0.2);
  const auto mid = ClassStats::from_counts({10, 30});
  EXPECT_NEAR(dynamic_margin(20, mid, 0.2, 0.6), 0.4, 1e-12);
  const auto flat = ClassStats::from_counts({7, 7});
  EXPECT_DOUBLE_EQ(dynamic_margin(7, flat, 0.2, 0.6), 0.4);
}

TEST(DynamicMarginTest, BoundedAndNonIncreasing) {
  const auto stats = ClassStats::from_counts({3, 1000});
  double previous = INFINITY;
  for (std::size_t n = 3; n <= 1000; ++n) {
    const double f = dynamic_margin(n, stats, 0.2, 0.6);
    EXPECT_GE(f, 0.2);
    EXPECT_LE(f, 0.6);
    EXPECT_LE(f, previous);
    previous = f;
  }
}

TEST(CrossEntropyTest, UniformLogits) {
  const ClassId targets[] = {2};
  EXPECT_NEAR(cross_entropy_from_logits(cos_matrix(1, 4, {0.7, 0.7, 0.7, 0.7}), targets).loss, std::log(4.0), 1e-15);
}

TEST(CrossEntropyTest, SaturatesToZeroWithoutOverflow) {
  const ClassId targets[] = {0};
  const auto out = cross_entropy_from_logits(cos_matrix(1, 3, {1000.0, 0.0, -5.0}), targets);
  EXPECT_EQ(out.loss, 0.0);
  EXPECT_TRUE(std::isfinite(out.grad(0, 0)));
}

TEST(CrossEntropyTest, GradientMatchesFiniteDifferences) {
  auto logits = testing::random_matrix(8, 5, 31, 2.0);
  CounterRng rng(32);
  std::vector<ClassId> targets(8);
  for (auto& y : targets) y = static_cast<ClassId>(rng.uniform_index(5));
  const auto analytic = cross_entropy_from_logits(logits, targets);
  const auto fd = testing::central_difference([&] { return cross_entropy_from_logits(logits, targets).loss; },
                                              logits.values(), 1e-5);
  EXPECT_LT(testing::relative_error(analytic.grad.values(), fd), 1e-6);
}

TEST(LossAndGradTest, MarginFreeArcFaceIsNormalizedSoftmax) {
  const auto x = testing::random_matrix(6, 10, 41);
  const auto w = ClassifierWeights(4, 1, testing::random_matrix(4, 10, 42));
  const std::vector<ClassId> targets = {0, 3, 1, 1, 2, 0};
  LossConfig cfg;
  cfg.m = 0.0;
  cfg.s = 1.0;
  const double got = loss_value(cfg, x, w, targets, LossState{});

  // Oracle: cosine via explicit norms, then log-softmax.
  double expected = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    std::vector<double> z(4);
    for (std::size_t c = 0; c < 4; ++c) {
      double xy = 0, xx = 0, yy = 0;
      for (std::size_t e = 0; e < 10; ++e) {
        xy += x(i, e) * w.rows()(c, e);
        xx += x(i, e) * x(i, e);
        yy += w.rows()(c, e) * w.rows()(c, e);
      }
      z[c] = xy / std::sqrt(xx * yy);
    }
    double denom = 0;
    for (const double v : z) denom += std::exp(v);
    expected -= std::log(std::exp(z[targets[i]]) / denom) / 6.0;
  }
  EXPECT_NEAR(got, expected, 1e-12);
}

TEST(LossAndGradTest, SubCenterWithOneCenterIsArcFaceBitForBit) {
  auto inst = testing::make_loss_instance(LossVariant::ArcFace, 3, 8, 5, 16, 1);
  const auto arc = loss_and_grad(inst.config, inst.x, inst.weights, inst.targets, inst.state);
  inst.config.variant = LossVariant::SubCenterArcFace;
  const auto sub = loss_and_grad(inst.config, inst.x, inst.weights, inst.targets, inst.state);
  EXPECT_EQ(std::memcmp(&arc.loss, &sub.loss, sizeof(double)), 0);
  EXPECT_EQ(arc.d_x, sub.d_x);
  EXPECT_EQ(arc.d_weights, sub.d_weights);
}

class VariantGradientTest : public ::testing::TestWithParam<LossVariant> {};

TEST_P(VariantGradientTest, MatchesFiniteDifferencesAndStaysTangent) {
  for (std::uint64_t seed = 100; seed < 103; ++seed) {
    const auto inst = testing::make_loss_instance(GetParam(), seed);
    const auto check = testing::check_loss_gradients(inst);
    EXPECT_LT(check.rel_error_x, 1e-4) << "seed " << seed;
    EXPECT_LT(check.rel_error_w, 1e-4) << "seed " << seed;
    EXPECT_LT(check.max_radial_x, 1e-6) << "seed " << seed;
  }
}

TEST_P(VariantGradientTest, DeterministicAcrossCalls) {
  const auto inst = testing::make_loss_instance(GetParam(), 77);
  const auto a = loss_and_grad(inst.config, inst.x, inst.weights, inst.targets, inst.state, inst.inputs());
  const auto b = loss_and_grad(inst.config, inst.x, inst.weights, inst.targets, inst.state, inst.inputs());
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.d_x, b.d_x);
  EXPECT_EQ(a.d_weights, b.d_weights);
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(a.state.step, inst.state.step + 1);
}

INSTANTIATE_TEST_SUITE_P(AllVariants, VariantGradientTest, ::testing::ValuesIn(kAllLossVariants),
                         [](const auto& info) {
                           std::string name(to_string(info.param));
                           std::replace(name.begin(), name.end(), '-', '_');
                           return name;
                         });

TEST(LossAndGradTest, ScalingSKeepsArgmax) {
  const auto cos = cos_matrix(2, 4, {0.1, 0.7, -0.2, 0.69, 0.3, 0.3, 0.9, -1.0});
  const ClassId targets[] = {3, 0};
  const auto argmax_rows = [](const MatrixD& m) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const auto r = m.row(i);
      out.push_back(static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin()));
    }
    return out;
  };
  const auto base = argmax_rows(arcface_transform(cos, targets, 0.5, 1.0).logits);
  for (const double s : {0.01, 2.0, 30.0, 64.0}) {
    EXPECT_EQ(argmax_rows(arcface_transform(cos, targets, 0.5, s).logits), base);
  }
}

TEST(LossAndGradTest, ErrorsPropagate) {
  auto inst = testing::make_loss_instance(LossVariant::ArcFace, 5, 4, 3, 8, 1);
  EXPECT_THROW(loss_and_grad(inst.config, MatrixD(4, 7, 1.0), inst.weights, inst.targets, inst.state), ShapeError);
  LossConfig bad = inst.config;
  bad.m = 4.0;
  EXPECT_THROW(loss_and_grad(bad, inst.x, inst.weights, inst.targets, inst.state), ConfigError);
  LossConfig dyn = inst.config;
  dyn.variant = LossVariant::DynMarginArcFace;
  EXPECT_THROW(loss_and_grad(dyn, inst.x, inst.weights, inst.targets, inst.state), ConfigError);
  MatrixD zero = inst.x;
  for (double& v : zero.row(1)) v = 0.0;
  EXPECT_THROW(loss_and_grad(inst.config, zero, inst.weights, inst.targets, inst.state), DataError);
}

TEST(LossVariantTest, NamesRoundTrip) {
  for (const auto v : kAllLossVariants) EXPECT_EQ(parse_loss_variant(to_string(v)), v);
  EXPECT_THROW(parse_loss_variant("cosface"), ConfigError);
}

}  // namespace
}  // namespace unifex
