#include <gtest/gtest.h>

#include <boost/math/distributions/binomial.hpp>
#include <set>

#include "seqdenoise/error.hpp"
#include "seqdenoise/synth.hpp"
#include "support.hpp"

namespace seqdenoise::synth {
namespace {

SynthSpec small(std::uint64_t seed = 1) {
  SynthSpec s;
  s.n_users = 300;
  s.items_per_category = 40;
  s.seed = seed;
  return s;
}

TEST(Spec, Validation) {
  auto s = small();
  EXPECT_NO_THROW(s.validate());
  s.n_categories = 1;
  EXPECT_THROW(s.validate(), ValidationError);
  s = small();
  s.items_per_category = 11;
  EXPECT_THROW(s.validate(), ValidationError);
  s = small();
  s.cross_category_rate = 1.5;
  EXPECT_THROW(s.validate(), ValidationError);
  s = small();
  s.min_events = 10;
  s.max_events = 5;
  EXPECT_THROW(s.validate(), ValidationError);
  s = small();
  EXPECT_EQ(SynthSpec::from_json(s.to_json()).to_json(), s.to_json());
}

TEST(Generate, DeterministicPerSeed) {
  const auto a = generate(small(5));
  const auto b = generate(small(5));
  const auto c = generate(small(6));
  ASSERT_EQ(a.sequences.size(), b.sequences.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    ASSERT_EQ(a.sequences[i].events.size(), b.sequences[i].events.size());
    for (std::size_t k = 0; k < a.sequences[i].events.size(); ++k) {
      EXPECT_EQ(a.sequences[i].events[k].item, b.sequences[i].events[k].item);
      EXPECT_EQ(a.sequences[i].events[k].timestamp, b.sequences[i].events[k].timestamp);
    }
    if (i < c.sequences.size() && !c.sequences[i].events.empty() &&
        c.sequences[i].events[0].item != a.sequences[i].events[0].item) {
      differs = true;
    }
  }
  EXPECT_TRUE(differs);
}

TEST(Generate, ZeroCrossRateKeepsUsersInHomeCategory) {
  const auto g = generate(small());
  EXPECT_EQ(g.cross_category_events, 0u);
  for (std::size_t u = 0; u < g.sequences.size(); ++u) {
    const auto& seq = g.sequences[u];
    EXPECT_GE(seq.events.size(), 12u);
    EXPECT_LE(seq.events.size(), 30u);
    for (std::size_t k = 0; k < seq.events.size(); ++k) {
      EXPECT_EQ(g.categories[g.catalog.index_of(seq.events[k].item)], g.home_category[u]);
      if (k) EXPECT_GT(seq.events[k].timestamp, seq.events[k - 1].timestamp);
    }
  }
}

TEST(Generate, CrossRateWithinBinomialInterval) {
  auto spec = small(9);
  spec.cross_category_rate = 0.2;
  const auto g = generate(spec);
  std::size_t events = 0, foreign = 0;
  for (std::size_t u = 0; u < g.sequences.size(); ++u) {
    for (const auto& e : g.sequences[u].events) {
      ++events;
      foreign += g.categories[g.catalog.index_of(e.item)] != g.home_category[u];
    }
  }
  EXPECT_EQ(foreign, g.cross_category_events);
  boost::math::binomial_distribution<double> d(static_cast<double>(events), 0.2);
  EXPECT_GE(static_cast<double>(foreign), boost::math::quantile(d, 0.0005));
  EXPECT_LE(static_cast<double>(foreign), boost::math::quantile(d, 0.9995));
}

TEST(Generate, TitlesAndFirstTokensUnique) {
  const auto g = generate(small());
  EXPECT_EQ(g.catalog.size(), 4u * 40u);
  std::set<std::string> titles, heads;
  for (const auto& e : g.catalog.entries()) {
    titles.insert(e.title);
    heads.insert(e.title.substr(0, e.title.find(' ')));
    const auto c = g.categories[g.catalog.index_of(e.id)];
    EXPECT_NE(e.title.find(g.category_names[c]), std::string::npos);
  }
  EXPECT_EQ(titles.size(), g.catalog.size());
  EXPECT_EQ(heads.size(), g.catalog.size());
  EXPECT_NE(pseudo_word(0), pseudo_word(1));
  EXPECT_NE(pseudo_word(4095), pseudo_word(4096));
}

TEST(Categories, SidecarRoundTrip) {
  testing::TempDir dir;
  const auto g = generate(small());
  write_categories(dir / "cat.jsonl", g);
  EXPECT_EQ(read_categories(dir / "cat.jsonl", g.catalog), g.categories);
  testing::write_file(dir / "bad.jsonl", "{\"item\":\"nope\",\"category\":0}\n");
  EXPECT_THROW(read_categories(dir / "bad.jsonl", g.catalog), ValidationError);
}

}  // namespace
}  // namespace seqdenoise::synth
