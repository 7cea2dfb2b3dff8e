#include <gtest/gtest.h>
#include <zlib.h>

#include <set>

#include "seqdenoise/corpus.hpp"
#include "seqdenoise/error.hpp"
#include "support.hpp"

namespace seqdenoise {
namespace {

using testing::TempDir;
using testing::write_file;

TEST(Catalog, LoadsTwoItems) {
  TempDir dir;
  write_file(dir / "c.jsonl",
             "{\"item\":\"i1\",\"title\":\"Toy Story\"}\n{\"item\":\"i2\",\"title\":\"Alien\"}\n");
  const auto c = load_catalog(dir / "c.jsonl");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.title("i2"), "Alien");
  EXPECT_EQ(c.at(0).id, "i1");
}

TEST(Catalog, DuplicateIdNamesTheId) {
  TempDir dir;
  write_file(dir / "c.jsonl", "{\"item\":\"i1\",\"title\":\"A\"}\n{\"item\":\"i1\",\"title\":\"B\"}\n");
  try {
    load_catalog(dir / "c.jsonl");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("i1"), std::string::npos);
  }
}

TEST(Catalog, BlankTitleRejected) {
  ItemCatalog c;
  EXPECT_THROW(c.add("x", "   "), ValidationError);
}

TEST(Catalog, MalformedLineReportsLineNumber) {
  TempDir dir;
  write_file(dir / "c.jsonl", "{\"item\":\"i1\",\"title\":\"A\"}\n{not json\n");
  try {
    load_catalog(dir / "c.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(Catalog, GzipIsTransparent) {
  TempDir dir;
  const auto path = (dir / "c.jsonl.gz").string();
  gzFile f = gzopen(path.c_str(), "wb");
  const std::string body = "{\"item\":\"i1\",\"title\":\"A\"}\n";
  gzwrite(f, body.data(), static_cast<unsigned>(body.size()));
  gzclose(f);
  EXPECT_EQ(load_catalog(path).size(), 1u);
}

TEST(Interactions, SortsEventsByTimestamp) {
  TempDir dir;
  const auto catalog = testing::numbered_catalog(3);
  write_file(dir / "x.jsonl",
             "{\"user\":\"u\",\"item\":\"i0\",\"timestamp\":30}\n"
             "{\"user\":\"u\",\"item\":\"i1\",\"timestamp\":10}\n"
             "{\"user\":\"u\",\"item\":\"i2\",\"timestamp\":20}\n");
  const auto seqs = load_interactions(dir / "x.jsonl", catalog);
  ASSERT_EQ(seqs.size(), 1u);
  ASSERT_EQ(seqs[0].events.size(), 3u);
  EXPECT_EQ(seqs[0].events[0].item, "i1");
  EXPECT_EQ(seqs[0].events[1].item, "i2");
  EXPECT_EQ(seqs[0].events[2].item, "i0");
}

TEST(Interactions, TiesKeepFileOrder) {
  TempDir dir;
  const auto catalog = testing::numbered_catalog(3);
  write_file(dir / "x.jsonl",
             "{\"user\":\"u\",\"item\":\"i2\",\"timestamp\":5}\n"
             "{\"user\":\"u\",\"item\":\"i0\",\"timestamp\":5}\n"
             "{\"user\":\"u\",\"item\":\"i1\",\"timestamp\":5}\n");
  const auto seqs = load_interactions(dir / "x.jsonl", catalog);
  EXPECT_EQ(seqs[0].events[0].item, "i2");
  EXPECT_EQ(seqs[0].events[1].item, "i0");
  EXPECT_EQ(seqs[0].events[2].item, "i1");
}

TEST(Interactions, UnknownItemRejected) {
  TempDir dir;
  const auto catalog = testing::numbered_catalog(1);
  write_file(dir / "x.jsonl", "{\"user\":\"u\",\"item\":\"zz\",\"timestamp\":1}\n");
  try {
    load_interactions(dir / "x.jsonl", catalog);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'u'"), std::string::npos);
  }
}

TEST(Interactions, NonIntegerTimestampIsParseError) {
  TempDir dir;
  const auto catalog = testing::numbered_catalog(1);
  write_file(dir / "x.jsonl", "{\"user\":\"u\",\"item\":\"i0\",\"timestamp\":1.5}\n");
  EXPECT_THROW(load_interactions(dir / "x.jsonl", catalog), ParseError);
  write_file(dir / "y.jsonl", "{\"user\":\"u\",\"item\":\"i0\",\"timestamp\":\"7\"}\n");
  EXPECT_THROW(load_interactions(dir / "y.jsonl", catalog), ParseError);
}

TEST(Interactions, WriteThenLoadRoundTrips) {
  TempDir dir;
  const auto catalog = testing::numbered_catalog(4);
  std::vector<InteractionSequence> seqs = {testing::make_sequence("a", {"i0", "i3"}),
                                           testing::make_sequence("b", {"i2"})};
  write_interactions(dir / "x.jsonl", seqs);
  const auto back = load_interactions(dir / "x.jsonl", catalog);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].user, "a");
  EXPECT_EQ(back[0].events[1].item, "i3");
  EXPECT_EQ(back[1].events[0].item, "i2");
}

std::vector<ItemId> ids(std::size_t n) {
  std::vector<ItemId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("i" + std::to_string(i));
  return out;
}

TEST(Segment, Length13Window11GivesThreeWindows) {
  const std::vector<InteractionSequence> seqs = {testing::make_sequence("u", ids(13))};
  const auto r = segment(seqs, 11);
  ASSERT_EQ(r.windows.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(r.windows[k].window_index, k);
    EXPECT_EQ(r.windows[k].items.size(), 11u);
    EXPECT_EQ(r.windows[k].items.front(), "i" + std::to_string(k));
  }
  EXPECT_EQ(r.windows[2].anchor_timestamp, 12);
}

TEST(Segment, Length11Window11GivesOneWindow) {
  const std::vector<InteractionSequence> seqs = {testing::make_sequence("u", ids(11))};
  EXPECT_EQ(segment(seqs, 11).windows.size(), 1u);
}

TEST(Segment, ShortSequencesPassOrDrop) {
  const std::vector<InteractionSequence> seqs = {testing::make_sequence("a", ids(5)),
                                                 testing::make_sequence("b", ids(2)),
                                                 testing::make_sequence("c", ids(3))};
  const auto r = segment(seqs, 11, 3);
  ASSERT_EQ(r.windows.size(), 2u);
  EXPECT_EQ(r.windows[0].items.size(), 5u);
  EXPECT_EQ(r.windows[1].items.size(), 3u);
  EXPECT_EQ(r.dropped_sequences, 1u);
}

TEST(Segment, WindowBelowTwoRejected) {
  EXPECT_THROW(segment({}, 1), PreconditionError);
}

TEST(Segment, WindowsAreContiguousSubsequences) {
  std::mt19937_64 rng(3);
  std::vector<InteractionSequence> seqs;
  for (int u = 0; u < 50; ++u) {
    std::vector<ItemId> items;
    const auto n = 1 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i) items.push_back("i" + std::to_string(rng() % 9));
    seqs.push_back(testing::make_sequence("u" + std::to_string(u), items));
  }
  const auto r = segment(seqs, 7);
  for (const auto& w : r.windows) {
    const auto& seq = *std::find_if(seqs.begin(), seqs.end(), [&](const auto& s) { return s.user == w.user; });
    ASSERT_LE(w.window_index + w.items.size(), seq.events.size());
    for (std::size_t k = 0; k < w.items.size(); ++k) {
      EXPECT_EQ(w.items[k], seq.events[w.window_index + k].item);
    }
  }
}

std::vector<SequenceWindow> anchored(std::size_t n) {
  std::vector<SequenceWindow> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto w = testing::make_window("u" + std::to_string(i), {"a", "b"});
    w.anchor_timestamp = static_cast<Timestamp>(100 - i);
    out.push_back(w);
  }
  return out;
}

std::array<std::size_t, 3> tally(const std::vector<SequenceWindow>& ws) {
  std::array<std::size_t, 3> t{};
  for (const auto& w : ws) ++t[static_cast<int>(w.split)];
  return t;
}

TEST(Split, TenWindowsGives811) {
  const auto t = tally(split_temporal(anchored(10)));
  EXPECT_EQ(t[0], 8u);
  EXPECT_EQ(t[1], 1u);
  EXPECT_EQ(t[2], 1u);
}

TEST(Split, SevenWindowsUsesFloorRule) {
  const auto t = tally(split_temporal(anchored(7)));
  EXPECT_EQ(t[0], 5u);
  EXPECT_EQ(t[1], 0u);
  EXPECT_EQ(t[2], 2u);
}

TEST(Split, SortedByAnchorWithTrainBeforeTest) {
  const auto ws = split_temporal(anchored(20));
  Timestamp max_train = std::numeric_limits<Timestamp>::min();
  Timestamp min_test = std::numeric_limits<Timestamp>::max();
  for (const auto& w : ws) {
    if (w.split == Split::kTrain) max_train = std::max(max_train, w.anchor_timestamp);
    if (w.split == Split::kTest) min_test = std::min(min_test, w.anchor_timestamp);
  }
  EXPECT_LE(max_train, min_test);
}

TEST(Split, TiesFallBackToUserThenIndex) {
  std::vector<SequenceWindow> ws = {testing::make_window("b", {"x", "y"}, Split::kTrain, 0),
                                    testing::make_window("a", {"x", "y"}, Split::kTrain, 1),
                                    testing::make_window("a", {"x", "y"}, Split::kTrain, 0)};
  const auto out = split_temporal(ws, {0.4, 0.3, 0.3});
  EXPECT_EQ(out[0].ref(), "a#0");
  EXPECT_EQ(out[1].ref(), "a#1");
  EXPECT_EQ(out[2].ref(), "b#0");
}

TEST(Split, EmptyAndBadRatiosRejected) {
  EXPECT_THROW(split_temporal({}), PreconditionError);
  EXPECT_THROW(split_temporal(anchored(3), {0.5, 0.5, 0.5}), PreconditionError);
}

TEST(Windows, JsonRoundTripAndRefParse) {
  TempDir dir;
  auto w = testing::make_window("user#7", {"a", "b", "c"}, Split::kTest, 4);
  w.anchor_timestamp = 99;
  const std::vector<SequenceWindow> ws = {w};
  write_windows(dir / "w.jsonl", ws);
  EXPECT_EQ(read_windows(dir / "w.jsonl"), ws);
  const auto [user, index] = parse_window_ref(w.ref());
  EXPECT_EQ(user, "user#7");
  EXPECT_EQ(index, 4u);
  EXPECT_THROW(parse_window_ref("nohash"), ParseError);
  EXPECT_THROW(parse_window_ref("u#x1"), ParseError);
}

TEST(Windows, InputsExcludeTarget) {
  const auto w = testing::make_window("u", {"a", "b", "c"});
  ASSERT_EQ(w.inputs().size(), 2u);
  EXPECT_EQ(w.inputs()[1], "b");
  EXPECT_EQ(w.target(), "c");
}

TEST(Ingest, StatsCountEverything) {
  const auto catalog = testing::numbered_catalog(20);
  const std::vector<InteractionSequence> seqs = {testing::make_sequence("a", ids(13)),
                                                 testing::make_sequence("b", ids(2))};
  const auto seg = segment(seqs, 11);
  const auto split = split_temporal(seg.windows);
  const auto stats = ingest_stats(catalog, seqs, seg, split);
  EXPECT_EQ(stats.users, 2u);
  EXPECT_EQ(stats.interactions, 15u);
  EXPECT_EQ(stats.sequences, 3u);
  EXPECT_EQ(stats.dropped_sequences, 1u);
  EXPECT_EQ(stats.train + stats.valid + stats.test, 3u);
}

}  // namespace
}  // namespace seqdenoise
