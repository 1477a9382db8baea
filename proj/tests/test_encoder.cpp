#include <random>

#include <gtest/gtest.h>

#include "infocal/encoder.hpp"
#include "infocal/num/gradcheck.hpp"

using namespace infocal;
using T = double;

namespace {

struct Fixture {
  std::size_t vocab = 8, embed_dim = 2, hidden = 3;
  ParamStore<T> store;

  explicit Fixture(std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    add_embedding_params(store, "enc", vocab, embed_dim, T{0.5}, Group::generator, rng);
    add_encoder_params(store, "enc", embed_dim, hidden, Group::generator, rng);
  }

  EncoderOutput<T> run(num::Tape<T>& tape, const SequenceBatch& batch) {
    ParamView<T> view(tape, store, num::GroupSet::none());
    return encode(view, "enc", embed(view, "enc", batch.ids), batch, hidden);
  }
};

}  // namespace

TEST(Embed, PadRowIsZero) {
  Fixture f;
  num::Tape<T> tape;
  ParamView<T> view(tape, f.store, num::GroupSet::none());
  const std::vector<TokenId> ids{0};
  auto e = embed(view, "enc", ids).value();
  EXPECT_EQ(e(0, 0), 0.0);
  EXPECT_EQ(e(0, 1), 0.0);
}

TEST(Embed, RepeatedIdsGiveIdenticalRows) {
  Fixture f;
  num::Tape<T> tape;
  ParamView<T> view(tape, f.store, num::GroupSet::none());
  const std::vector<TokenId> ids{3, 3};
  auto e = embed(view, "enc", ids).value();
  EXPECT_EQ(e(0, 0), e(1, 0));
  EXPECT_EQ(e(0, 1), e(1, 1));
}

TEST(Embed, PerturbingARowMattersOnlyWhenThatIdOccurs) {
  auto lookup = [](ParamStore<T>& store, const std::vector<TokenId>& ids) {
    num::Tape<T> tape;
    ParamView<T> view(tape, store, num::GroupSet::none());
    return embed(view, "enc", ids).value();
  };
  const std::vector<TokenId> with{2, 5, 7}, without{2, 4, 7};
  Fixture f;
  const auto before_with = lookup(f.store, with);
  const auto before_without = lookup(f.store, without);
  f.store.value("enc.embed")(5, 1) += 0.25;
  EXPECT_NE(lookup(f.store, with), before_with);
  EXPECT_EQ(lookup(f.store, without), before_without);
}

TEST(Embed, OutOfRangeIdIsContractViolation) {
  Fixture f;
  num::Tape<T> tape;
  ParamView<T> view(tape, f.store, num::GroupSet::none());
  const std::vector<TokenId> ids{8};
  EXPECT_THROW(embed(view, "enc", ids), ContractViolation);
  const std::vector<TokenId> negative{-1};
  EXPECT_THROW(embed(view, "enc", negative), ContractViolation);
}

TEST(Encode, ZeroWeightsStayAtTheZeroFixedPoint) {
  Fixture f;
  for (auto& [name, p] : f.store)
    if (name != "enc.embed") p.value.fill(0.0);
  num::Tape<T> tape;
  auto out = f.run(tape, SequenceBatch::single({1, 2, 3, 4}));
  for (auto v : out.states.value().values()) EXPECT_EQ(v, 0.0);
  for (auto v : out.pooled.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Encode, ReversalSwapsDirectionBlocksWhenWeightsAreTied) {
  Fixture f;
  for (const char* part : {"wx", "wh", "bx", "bh"})
    f.store.value(std::string("enc.bwd.") + part) = f.store.value(std::string("enc.fwd.") + part);
  const std::vector<TokenId> seq{2, 7, 3, 5, 4};
  const std::vector<TokenId> rev(seq.rbegin(), seq.rend());
  num::Tape<T> tape;
  auto a = f.run(tape, SequenceBatch::single(seq)).states.value();
  auto b = f.run(tape, SequenceBatch::single(rev)).states.value();
  const std::size_t n = seq.size(), h = f.hidden;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t k = 0; k < h; ++k) {
      EXPECT_DOUBLE_EQ(a(t, k), b(n - 1 - t, h + k));
      EXPECT_DOUBLE_EQ(a(t, h + k), b(n - 1 - t, k));
    }
}

TEST(Encode, SingleTokenPoolsToItsOnlyRow) {
  Fixture f;
  num::Tape<T> tape;
  auto out = f.run(tape, SequenceBatch::single({6}));
  ASSERT_EQ(out.states.rows(), 1u);
  EXPECT_EQ(out.states.value(), out.pooled.value());
}

TEST(Encode, PooledIsLastForwardAndFirstBackwardState) {
  Fixture f;
  num::Tape<T> tape;
  auto out = f.run(tape, SequenceBatch::single({2, 3, 4}));
  const auto& H = out.states.value();
  const auto& h = out.pooled.value();
  for (std::size_t k = 0; k < f.hidden; ++k) {
    EXPECT_EQ(h(0, k), H(2, k));
    EXPECT_EQ(h(0, f.hidden + k), H(0, f.hidden + k));
  }
}

TEST(Encode, ShapeContractForEveryLength) {
  Fixture f;
  for (std::size_t n = 1; n <= 30; ++n) {
    std::vector<TokenId> seq(n);
    for (std::size_t i = 0; i < n; ++i) seq[i] = static_cast<TokenId>(1 + i % 7);
    num::Tape<T> tape;
    auto out = f.run(tape, SequenceBatch::single(seq));
    EXPECT_EQ(out.states.rows(), n);
    EXPECT_EQ(out.states.cols(), 2 * f.hidden);
    EXPECT_EQ(out.pooled.rows(), 1u);
    EXPECT_EQ(out.pooled.cols(), 2 * f.hidden);
  }
}

TEST(Encode, PaddedRowsMatchTheUnpaddedRun) {
  Fixture f;
  const std::vector<std::vector<TokenId>> seqs{{2, 3, 4, 5}, {6, 7}};
  num::Tape<T> tape;
  auto batched = f.run(tape, SequenceBatch::from(seqs));
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    auto alone = f.run(tape, SequenceBatch::single(seqs[b]));
    for (std::size_t t = 0; t < seqs[b].size(); ++t)
      for (std::size_t k = 0; k < 2 * f.hidden; ++k)
        EXPECT_NEAR(batched.states.value()(t * 2 + b, k), alone.states.value()(t, k), 1e-14);
    for (std::size_t k = 0; k < 2 * f.hidden; ++k)
      EXPECT_NEAR(batched.pooled.value()(b, k), alone.pooled.value()(0, k), 1e-14);
  }
}

TEST(Encode, EmptyBatchIsContractViolation) {
  EXPECT_THROW(SequenceBatch::single({}), ContractViolation);
}

TEST(Encode, GradientCheckAtTinyDims) {
  Fixture f(3);
  const auto batch = SequenceBatch::single({1, 4, 6, 2});
  auto report = num::grad_check<T>(
      [&](ParamView<T>& view) {
        auto out = encode(view, "enc", embed(view, "enc", batch.ids), batch, f.hidden);
        return num::add(num::sum(num::mul(out.states, out.states)), num::sum(num::tanh(out.pooled)));
      },
      f.store, {Group::generator}, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.worst_param << " " << report.max_rel_error;
}
