#include "isorobust/attack.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace isorobust;

namespace {

constexpr double kPi = std::numbers::pi;

/// Ignores its input entirely.
class ConstantModel : public Classifier {
 public:
  explicit ConstantModel(Eigen::VectorXd z) : z_(std::move(z)) {}
  int class_count() const override { return static_cast<int>(z_.size()); }
  Logits logits(const Cloud&) const override { return {z_}; }
  PointMatrix<double> input_gradient(const Cloud& c, const Eigen::VectorXd&) const override {
    return PointMatrix<double>::Zero(c.size(), 3);
  }

 private:
  Eigen::VectorXd z_;
};

/// z = (bias, mean of the z coordinates): class 1 once the mean height exceeds `bias`.
class MeanHeightModel : public Classifier {
 public:
  explicit MeanHeightModel(double bias) : bias_(bias) {}
  int class_count() const override { return 2; }
  Logits logits(const Cloud& c) const override {
    return {Eigen::Vector2d(bias_, c.points.col(2).mean())};
  }
  PointMatrix<double> input_gradient(const Cloud& c, const Eigen::VectorXd& w) const override {
    PointMatrix<double> g = PointMatrix<double>::Zero(c.size(), 3);
    g.col(2).setConstant(w(1) / static_cast<double>(c.size()));
    return g;
  }

 private:
  double bias_;
};

Cloud lifted_cloud(Rng& rng, int m, double lift, int label) {
  Cloud c;
  c.points.resize(m, 3);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < 3; ++k) c.points(i, k) = uniform(rng, -0.5, 0.5);
  c.points.col(2).array() += lift - c.points.col(2).mean();
  c.label = label;
  return c;
}

const isorobust::testing::SmallStack& stack() { return isorobust::testing::small_stack(); }

std::vector<Cloud> attack_set() {
  const MiniPointNet net(stack().trained.params);
  const auto ids = correctly_classified(net, stack().data.test);
  std::vector<Cloud> out;
  for (auto i : ids) out.push_back(stack().data.test[i]);
  return out;
}

}  // namespace

TEST(CwLoss, TargetIsLargest) {
  const auto l = cw_loss(Logits{Eigen::Vector3d(2, 5, 1)}, 1, 0.0);
  EXPECT_EQ(l.value, 0.0);
  EXPECT_TRUE(l.cotangent.isZero(0.0));
}

TEST(CwLoss, TargetBehind) {
  const auto l = cw_loss(Logits{Eigen::Vector3d(2, 5, 1)}, 0, 0.0);
  EXPECT_EQ(l.value, 3.0);
  EXPECT_EQ(l.cotangent, Eigen::Vector3d(-1, 1, 0));
}

TEST(CwLoss, MarginNotClipped) {
  const auto l = cw_loss(Logits{Eigen::Vector3d(2, 5, 1)}, 1, 10.0);
  EXPECT_EQ(l.value, -3.0);
  EXPECT_EQ(l.cotangent, Eigen::Vector3d(1, -1, 0));
}

TEST(CwLoss, CotangentMatchesFiniteDifference) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd z(4);
    for (int j = 0; j < 4; ++j) z(j) = uniform(rng, -3, 3);
    const int target = t % 4;
    const auto l = cw_loss(Logits{z}, target, 0.5);
    for (int j = 0; j < 4; ++j) {
      Eigen::VectorXd up = z, down = z;
      up(j) += 1e-7;
      down(j) -= 1e-7;
      const double fd =
          (cw_loss(Logits{up}, target, 0.5).value - cw_loss(Logits{down}, target, 0.5).value) /
          2e-7;
      EXPECT_NEAR(fd, l.cotangent(j), 1e-6);
    }
  }
}

TEST(CwLoss, RejectsBadTarget) {
  EXPECT_THROW(cw_loss(Logits{Eigen::Vector2d(0, 1)}, 2, 0.0), std::out_of_range);
  EXPECT_THROW(cw_loss(Logits{Eigen::VectorXd::Zero(1)}, 0, 0.0), std::invalid_argument);
}

TEST(SelectTarget, Examples) {
  EXPECT_EQ(select_target(Logits{Eigen::Vector3d(5, 3, 1)}, 0), 1);
  EXPECT_EQ(select_target(Logits{Eigen::Vector3d(5, 3, 1)}, 1), 0);
  EXPECT_EQ(select_target(Logits{Eigen::Vector3d(2, 2, 2)}, 0), 1);
}

TEST(Config, Validation) {
  TsiConfig t;
  EXPECT_NO_THROW(t.validate());
  t.max_samples = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = {};
  t.lo = t.hi;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  CtriConfig c;
  EXPECT_EQ(c.tsi.max_samples, 50);
  EXPECT_EQ(c.lambda, 0.001);
  EXPECT_EQ(c.eta, 0.0005);
  EXPECT_EQ(c.kappa, 0.0);
  c.eta = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.max_iters = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(family_from_name("shear"), std::invalid_argument);
}

TEST(SampleIsometry, BothFamiliesAreExactlyOrthogonal) {
  Rng rng(2);
  for (auto family : {TransformFamily::Rotation, TransformFamily::Reflection}) {
    TsiConfig cfg;
    cfg.family = family;
    const auto p = cfg.partition();
    for (int t = 0; t < 2000; ++t) {
      const auto a = sample_isometry(p, family, static_cast<std::size_t>(t) % p.cell_count(), rng);
      ASSERT_TRUE(is_orthogonal(a, 1e-9));
      ASSERT_NEAR(a.determinant(), family == TransformFamily::Rotation ? 1.0 : -1.0, 1e-9);
    }
  }
}

TEST(Tsi, ConstantModelNeverSucceeds) {
  const ConstantModel model(Eigen::Vector3d(3, 1, 0));
  Rng rng(3);
  std::vector<Cloud> clouds;
  for (int i = 0; i < 6; ++i) clouds.push_back(lifted_cloud(rng, 20, 0.0, 0));
  TsiConfig cfg;
  cfg.max_samples = 7;
  BanditState state(cfg.partition());
  Rng attack_rng(4);
  const auto out = tsi(model, clouds, cfg, state, attack_rng);
  for (const auto& o : out) {
    EXPECT_FALSE(o.success);
    EXPECT_EQ(o.samples_used, 7);
    EXPECT_TRUE(is_orthogonal(o.transform, 1e-9));
    EXPECT_EQ(o.penalty, 0.0);
  }
  EXPECT_EQ(state.total_pulls(), 42.0);
  for (std::size_t k = 0; k < state.cell_count(); ++k) EXPECT_EQ(state.alpha(k), 1.0);
}

TEST(Tsi, ReflectionAcrossHorizontalPlaneFoolsHeightModel) {
  const MeanHeightModel model(0.1);
  Rng rng(5);
  const Cloud c = lifted_cloud(rng, 50, 0.3, 1);
  ASSERT_EQ(model.predict(c).predicted_class, 1);
  TsiConfig cfg;
  cfg.family = TransformFamily::Reflection;
  cfg.lo = -0.01;  // azimuth and polar both near 0: normal close to +z
  cfg.hi = 0.01;
  cfg.divisions = 1;
  const auto out = tsi(model, std::vector<Cloud>{c}, cfg);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].success);
  EXPECT_EQ(out[0].samples_used, 1);
  EXPECT_EQ(out[0].final_class, 0);
  const Transform3<double> flip = Vector3<double>(1, 1, -1).asDiagonal();
  // Normal within 0.01*sqrt(2) rad of +z moves entries of I - 2nn^T by at most 2 * that angle.
  EXPECT_LE((out[0].transform - flip).cwiseAbs().maxCoeff(), 2 * 0.01 * std::sqrt(2.0) + 1e-9);
}

TEST(Tsi, OutcomesAreSelfConsistent) {
  const MiniPointNet net(stack().trained.params);
  const auto clouds = attack_set();
  TsiConfig cfg;
  const auto out = tsi(net, clouds, cfg);
  ASSERT_EQ(out.size(), clouds.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const auto& o = out[n];
    EXPECT_EQ(o.cloud_index, n);
    EXPECT_TRUE(is_orthogonal(o.transform, 1e-9));
    EXPECT_EQ(o.penalty, 0.0);
    EXPECT_GE(o.samples_used, 1);
    EXPECT_LE(o.samples_used, cfg.max_samples);
    if (!o.success) {
      EXPECT_EQ(o.samples_used, cfg.max_samples);
    }
    const auto pred = net.predict(apply_transform(clouds[n], o.transform));
    EXPECT_EQ(pred.predicted_class, o.final_class);
    EXPECT_EQ(o.success, o.final_class != o.original_class);
  }
}

TEST(Tsi, SameSeedSameOutcomes) {
  const MiniPointNet net(stack().trained.params);
  const auto clouds = attack_set();
  TsiConfig cfg;
  cfg.seed = 9;
  const auto a = tsi(net, clouds, cfg);
  const auto b = tsi(net, clouds, cfg);
  for (std::size_t n = 0; n < a.size(); ++n) {
    EXPECT_EQ(a[n].transform, b[n].transform);
    EXPECT_EQ(a[n].samples_used, b[n].samples_used);
  }
}

TEST(Tsi, MismatchedStateRejected) {
  const ConstantModel model(Eigen::Vector2d(1, 0));
  Rng rng(6);
  const Cloud c = lifted_cloud(rng, 5, 0.0, 0);
  TsiConfig cfg;
  BanditState wrong(AnglePartition{-kPi, kPi, 3, 3});
  EXPECT_THROW(tsi_attack_cloud(model, c, cfg, wrong, rng), std::invalid_argument);
}

TEST(Tsi, UnlabelledCloudRejected) {
  const ConstantModel model(Eigen::Vector2d(1, 0));
  Rng rng(7);
  Cloud c = lifted_cloud(rng, 5, 0.0, 0);
  c.label.reset();
  TsiConfig cfg;
  EXPECT_THROW(tsi(model, std::vector<Cloud>{c}, cfg), std::invalid_argument);
}

TEST(TsiFrozen, IndependentOfThreadCountAndLeavesSnapshot) {
  const MiniPointNet net(stack().trained.params);
  const auto clouds = attack_set();
  TsiConfig cfg;
  BanditState snapshot(cfg.partition());
  Rng rng(8);
  tsi(net, clouds, cfg, snapshot, rng);  // give the snapshot some history
  const std::vector<double> alpha(snapshot.alphas().begin(), snapshot.alphas().end());
  const auto one = tsi_frozen(net, clouds, cfg, snapshot, 1);
  const auto three = tsi_frozen(net, clouds, cfg, snapshot, 3);
  for (std::size_t n = 0; n < one.size(); ++n) {
    EXPECT_EQ(one[n].transform, three[n].transform);
    EXPECT_EQ(one[n].success, three[n].success);
  }
  EXPECT_TRUE(std::equal(alpha.begin(), alpha.end(), snapshot.alphas().begin()));
}

TEST(TransformGradient, PenaltyOnlyAtRotationWhenLambdaVanishes) {
  const MiniPointNet net(stack().trained.params);
  const Cloud& c = stack().data.test[0];
  const auto a = euler_to_rotation(EulerAngles<double>{0.3, 0.2, -0.4});
  // lambda = 0 is outside the config contract but well defined here.
  const auto tg = transform_gradient(net, c, a, 1, 0.0, 0.0);
  EXPECT_LE(tg.objective, 1e-12);
  EXPECT_TRUE(tg.degenerate);
  EXPECT_TRUE(tg.gradient.isZero(0.0));
}

TEST(TransformGradient, ClippedLossLeavesPenaltyGradient) {
  const MiniPointNet net(stack().trained.params);
  const Cloud& c = stack().data.test[0];
  const int truth = *c.label;
  const Transform3<double> a = Vector3<double>(1.1, 1, 1).asDiagonal();
  ASSERT_EQ(net.predict(apply_transform(c, a)).predicted_class, truth);
  // Targeting the class already predicted puts the margin below -kappa = 0.
  const auto tg = transform_gradient(net, c, a, truth, 0.5, 0.0);
  EXPECT_EQ(tg.cw, 0.0);
  EXPECT_LE((tg.gradient - Transform3<double>(Vector3<double>(2.2, 0, 0).asDiagonal()))
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

TEST(TransformGradient, MatchesCentralDifferencesNearIdentity) {
  const MiniPointNet net(stack().trained.params);
  Rng rng(10);
  int probes = 0, agreed = 0, unexplained = 0;
  for (int t = 0; t < 60; ++t) {
    const Cloud& c = stack().data.test[static_cast<std::size_t>(t) % stack().data.test.size()];
    Transform3<double> a = Transform3<double>::Identity();
    for (int e = 0; e < 9; ++e) a(e / 3, e % 3) += uniform(rng, -0.05, 0.05);
    const int target = (*c.label + 1) % 4;
    const double lambda = 1.0;
    const auto tg = transform_gradient(net, c, a, target, lambda, 0.0);
    auto objective = [&](const Transform3<double>& b) {
      return transform_gradient(net, c, b, target, lambda, 0.0).objective;
    };
    for (int e = 0; e < 9; ++e) {
      auto fd = [&](double h) {
        Transform3<double> up = a, down = a;
        up(e / 3, e % 3) += h;
        down(e / 3, e % 3) -= h;
        return (objective(up) - objective(down)) / (2 * h);
      };
      const double f1 = fd(1e-5);
      ++probes;
      if (std::abs(f1 - tg.gradient(e / 3, e % 3)) <= 1e-3 * std::max(1.0, std::abs(f1))) {
        ++agreed;
        continue;
      }
      // Any disagreement must come from a kink: a pool tie or a degenerate spectrum.
      const bool kink = std::abs(fd(5e-6) - f1) > 1e-4 * std::max(1.0, std::abs(f1));
      if (!kink && !tg.degenerate) ++unexplained;
    }
  }
  EXPECT_EQ(probes, 540);
  EXPECT_GE(agreed, static_cast<int>(0.95 * probes));
  EXPECT_EQ(unexplained, 0);
}

TEST(Ctri, ZeroIterationsReproducesWarmStart) {
  const MiniPointNet net(stack().trained.params);
  const auto clouds = attack_set();
  CtriConfig cfg;
  cfg.tsi.max_samples = 3;
  cfg.max_iters = 0;
  const auto warm = tsi(net, clouds, cfg.tsi);
  const auto out = ctri(net, clouds, cfg);
  for (std::size_t n = 0; n < out.size(); ++n) {
    EXPECT_EQ(out[n].transform, warm[n].transform);
    EXPECT_EQ(out[n].success, warm[n].success);
    EXPECT_EQ(out[n].final_class, warm[n].final_class);
    EXPECT_EQ(out[n].gradient_steps, 0);
    EXPECT_EQ(out[n].penalty, 0.0);
  }
}

TEST(Ctri, SupersetOfTsiAndZeroPenaltyOnWarmSuccess) {
  const MiniPointNet net(stack().trained.params);
  const auto clouds = attack_set();
  CtriConfig cfg;
  cfg.tsi.max_samples = 4;
  cfg.tsi.lo = -kPi / 8;
  cfg.tsi.hi = kPi / 8;
  cfg.lambda = 1.0;
  cfg.eta = 0.01;
  const auto warm = tsi(net, clouds, cfg.tsi);
  const auto out = ctri(net, clouds, cfg);
  int extra = 0;
  for (std::size_t n = 0; n < out.size(); ++n) {
    if (warm[n].success) {
      EXPECT_TRUE(out[n].success);
      EXPECT_TRUE(out[n].warm_start_success);
      EXPECT_EQ(out[n].penalty, 0.0);
      EXPECT_EQ(out[n].gradient_steps, 0);  // loop guard: no step on a fooled cloud
    } else {
      EXPECT_FALSE(out[n].warm_start_success);
      extra += out[n].success;
    }
    const auto pred = net.predict(apply_transform(clouds[n], out[n].transform));
    EXPECT_EQ(pred.predicted_class, out[n].final_class);
    EXPECT_NEAR(out[n].penalty,
                out[n].gradient_steps ? spectral_norm_penalty(out[n].transform) : 0.0, 1e-12);
  }
  EXPECT_GT(extra, 0) << "descent never converted a warm-start failure";
}

TEST(Ctri, MoreIterationsNeverHurt) {
  const MiniPointNet net(stack().trained.params);
  const auto clouds = attack_set();
  CtriConfig cfg;
  cfg.tsi.max_samples = 2;
  cfg.tsi.lo = -kPi / 32;
  cfg.tsi.hi = kPi / 32;
  cfg.lambda = 1.0;
  cfg.eta = 0.001;
  cfg.max_iters = 7;
  const auto short_run = ctri(net, clouds, cfg);
  cfg.max_iters = 200;
  const auto long_run = ctri(net, clouds, cfg);
  for (std::size_t n = 0; n < clouds.size(); ++n)
    if (short_run[n].success) {
      EXPECT_TRUE(long_run[n].success);
    }
}

TEST(Ctri, DescentFoolsHeightModel) {
  const MeanHeightModel model(0.3);
  Rng rng(11);
  const Cloud c = lifted_cloud(rng, 40, 0.2, 0);
  ASSERT_EQ(model.predict(c).predicted_class, 0);
  CtriConfig cfg;
  cfg.tsi.lo = -1e-3;  // near-identity rotations cannot lift the cloud enough
  cfg.tsi.hi = 1e-3;
  cfg.tsi.max_samples = 3;
  // Fooling needs A(2,2) > 0.3 / 0.2. The CW pull on A(2,2) is lambda * 0.2 against a
  // penalty pull of 2 * A(2,2), so the fixed point sits at lambda / 10 = 2.
  cfg.lambda = 20.0;
  cfg.eta = 0.01;
  cfg.max_iters = 100;
  const auto out = ctri(model, std::vector<Cloud>{c}, cfg);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_FALSE(out[0].warm_start_success);
  EXPECT_TRUE(out[0].success);
  EXPECT_GT(out[0].gradient_steps, 0);
  EXPECT_EQ(out[0].target_class, 1);
  EXPECT_TRUE(out[0].target_hit);
  EXPECT_GT(out[0].penalty, 0.0);
  EXPECT_DOUBLE_EQ(out[0].penalty, spectral_norm_penalty(out[0].transform));
}

TEST(Ctri, FixedTargetOutOfRangeRejected) {
  const MeanHeightModel model(0.3);
  Rng rng(12);
  const Cloud c = lifted_cloud(rng, 10, 0.2, 0);
  CtriConfig cfg;
  cfg.target_rule = TargetRule::Fixed;
  cfg.fixed_target = 5;
  EXPECT_THROW(ctri(model, std::vector<Cloud>{c}, cfg), std::out_of_range);
}
