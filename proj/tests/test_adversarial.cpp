#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "infocal/adversarial.hpp"
#include "infocal/num/adam.hpp"
#include "infocal/num/gradcheck.hpp"

using namespace infocal;
using T = double;

namespace {

ParamStore<T> disc_store(std::size_t d, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  ParamStore<T> store;
  add_discriminator_params(store, d, d, rng);
  return store;
}

Tensor<T> score(const ParamStore<T>& store, const Tensor<T>& z) {
  num::Tape<T> tape;
  ParamView<T> view(tape, store, num::GroupSet::none());
  return discriminate(view, tape.constant(z)).value();
}

double d_value(double real, double fake, bool standard = false) {
  num::Tape<T> tape;
  return d_loss(tape.constant(Tensor<T>::scalar(real)), tape.constant(Tensor<T>::scalar(fake)), standard).item();
}

double g_value(double fake) {
  num::Tape<T> tape;
  return g_loss(tape.constant(Tensor<T>::scalar(fake))).item();
}

Tensor<T> gaussian_cloud(std::size_t n, std::size_t d, double mean, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(mean, 1.0);
  Tensor<T> t = Tensor<T>::zeros(n, d);
  for (auto& v : t.storage()) v = normal(rng);
  return t;
}

}  // namespace

TEST(Discriminate, ZeroWeightsGiveOneHalf) {
  auto store = disc_store(4);
  for (auto& [name, p] : store) p.value.fill(0.0);
  std::mt19937_64 rng(1);
  const auto out = score(store, gaussian_cloud(5, 4, 0, rng));
  for (auto v : out.values()) EXPECT_EQ(v, 0.5);
}

TEST(Discriminate, OutputStaysInsideClampBounds) {
  auto store = disc_store(4, 2);
  std::mt19937_64 rng(3);
  for (double scale : {1.0, 1e3, 1e6}) {
    for (auto& [name, p] : store)
      for (auto& v : p.value.storage()) v *= scale;
    const auto out = score(store, gaussian_cloud(20, 4, 0, rng));
    for (auto v : out.values()) {
      EXPECT_GE(v, 1e-7);
      EXPECT_LE(v, 1 - 1e-7);
    }
  }
}

TEST(Discriminate, ScalingFinalLayerMovesMonotonicallyToTheBounds) {
  auto base = disc_store(4, 4);
  std::mt19937_64 rng(5);
  const auto z = gaussian_cloud(6, 4, 0, rng);
  const auto hidden_sign = [&] {
    auto s = base;
    s.value("disc.w2").fill(1.0);
    return score(s, z);
  }();
  std::vector<Tensor<T>> outs;
  for (double c : {0.0, 1.0, 4.0, 16.0, 64.0, 256.0, 1e6}) {
    auto s = base;
    s.value("disc.w2").fill(c);
    outs.push_back(score(s, z));
  }
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const bool up = hidden_sign[i] > 0.5;
    for (std::size_t k = 1; k < outs.size(); ++k) {
      if (up) EXPECT_GE(outs[k][i], outs[k - 1][i]);
      else EXPECT_LE(outs[k][i], outs[k - 1][i]);
    }
    EXPECT_DOUBLE_EQ(outs.back()[i], up ? 1 - 1e-7 : 1e-7);
  }
}

TEST(Discriminate, DimensionMismatchIsContractViolation) {
  auto store = disc_store(4);
  EXPECT_THROW(score(store, Tensor<T>::zeros(2, 5)), ContractViolation);
}

TEST(DLoss, SymmetricDiscriminatorGivesZero) { EXPECT_EQ(d_value(0.5, 0.5), 0.0); }

TEST(DLoss, WellSeparatedFeatures) {
  // -log(1 - 1e-7) + log(1e-7): the real-side term is ~1e-7, so the total is
  // a single log(1e-7), not two.
  EXPECT_NEAR(d_value(1 - 1e-7, 1e-7), std::log(1e-7), 1e-6);
  EXPECT_NEAR(d_value(1 - 1e-7, 1e-7), -16.118, 1e-3);
}

TEST(DLoss, SwappingArgumentsFlipsTheSign) {
  for (auto [a, b] : {std::pair{0.3, 0.8}, std::pair{0.01, 0.6}, std::pair{0.999, 0.2}})
    EXPECT_NEAR(d_value(a, b), -d_value(b, a), 1e-15);
}

TEST(DLoss, StandardVariantUsesTheComplement) {
  EXPECT_NEAR(d_value(0.7, 0.2, true), -std::log(0.7) - std::log(0.8), 1e-14);
  EXPECT_NEAR(d_value(0.5, 0.5, true), 2 * std::log(2.0), 1e-14);
}

TEST(GLoss, OneHalfGivesLogTwo) { EXPECT_NEAR(g_value(0.5), 0.69315, 1e-5); }

TEST(GLoss, FooledDiscriminatorGivesNearZero) {
  EXPECT_NEAR(g_value(1.0), 1e-7, 1e-12);
  EXPECT_GE(g_value(1.0), 0.0);
}

TEST(GLoss, GradientReachesFeaturesButNotDiscriminatorWhenFrozen) {
  auto store = disc_store(3, 6);
  std::mt19937_64 rng(7);
  store.add("z", gaussian_cloud(4, 3, 0.5, rng), Group::generator);
  num::Tape<T> tape;
  ParamView<T> view(tape, store, {Group::generator});
  auto grads = tape.backward(g_loss(discriminate(view, view("z"))));
  EXPECT_EQ(grads.size(), 1u);
  ASSERT_TRUE(grads.contains("z"));
  double norm = 0;
  for (auto v : grads.at("z").values()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(DLoss, GradientCheckOverDiscriminatorParameters) {
  auto store = disc_store(4, 8);
  std::mt19937_64 rng(9);
  const auto real = gaussian_cloud(5, 4, 1, rng);
  const auto fake = gaussian_cloud(5, 4, -1, rng);
  for (bool standard : {false, true}) {
    auto report = num::grad_check<T>(
        [&](ParamView<T>& v) {
          return d_loss(discriminate(v, v.constant(real)), discriminate(v, v.constant(fake)), standard);
        },
        store, {Group::discriminator}, 1e-6, 1e-4);
    EXPECT_TRUE(report.passed) << report.worst_param << " " << report.max_rel_error;
  }
}

TEST(DLoss, ToyDiscriminationDrivesLossBelowMinusTwo) {
  const std::size_t d = 4;
  auto store = disc_store(d, 10);
  std::mt19937_64 rng(11);
  const auto real = gaussian_cloud(64, d, 2, rng);
  const auto fake = gaussian_cloud(64, d, -2, rng);
  // Adam moves each weight by at most ~lr per step, so at 1e-3 the logits
  // cannot travel far enough in 200 steps; 1e-2 leaves the step count binding.
  num::AdamState<T> adam;
  adam.config.lr = 1e-2;
  auto step = [&] {
    num::Tape<T> tape;
    ParamView<T> view(tape, store, {Group::discriminator});
    auto loss = d_loss(discriminate(view, view.constant(real)), discriminate(view, view.constant(fake)));
    const double value = loss.item();
    num::adam_step(store, {Group::discriminator}, tape.backward(loss), adam);
    return value;
  };
  const double first = step();
  EXPECT_NEAR(first, 0.0, 0.5);
  double last = first;
  for (int i = 1; i < 200; ++i) last = step();
  EXPECT_LT(last, -2.0);
}
