#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fpcagg/curve_data.hpp"
#include "fpcagg/simgen.hpp"

using namespace fpcagg;

namespace {

FunctionalDataset read(const std::string& text, const CsvSchema& schema = {}) {
  std::istringstream in(text);
  return read_long_csv(in, schema);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no fpcagg::Error thrown";
  return ErrorCode::Config;
}

// Dense curves on a shared half-unit grid; every third curve is class 1.
FunctionalDataset dense_curves(std::size_t n, int points) {
  std::vector<SparseCurve> curves;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> t, v;
    for (int j = 0; j < points; ++j) {
      t.push_back(1.0 + 0.5 * j);
      v.push_back(100.0 + static_cast<double>(i) + 3.0 * j);
    }
    curves.emplace_back("s" + std::to_string(i), t, v, static_cast<int>(i % 3 == 0));
  }
  return FunctionalDataset(curves);
}

}  // namespace

TEST(LongCsv, GroupsRowsById) {
  const auto d = read("id,time,value,label\na,1,2.0,0\na,3,4.0,0\nb,2,1.0,1\n");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].id(), "a");
  EXPECT_EQ(d[0].times(), (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(d[0].values(), (std::vector<double>{2.0, 4.0}));
  EXPECT_EQ(*d[1].label(), 1);
  EXPECT_DOUBLE_EQ(d.domain().lo, 1.0);
  EXPECT_DOUBLE_EQ(d.domain().hi, 3.0);
}

TEST(LongCsv, SortsTimesWithinCurve) {
  const auto d = read("id,time,value\nx,5,50\nx,1,10\nx,3,30\n");
  EXPECT_EQ(d[0].times(), (std::vector<double>{1.0, 3.0, 5.0}));
  EXPECT_EQ(d[0].values(), (std::vector<double>{10.0, 30.0, 50.0}));
}

TEST(LongCsv, MissingLabelColumnLeavesLabelsUnset) {
  const auto d = read("id,time,value\na,0,1\nb,1,2\n");
  EXPECT_FALSE(d.fully_labeled());
  EXPECT_FALSE(d[0].label().has_value());
  EXPECT_EQ(code_of([&] { d.require_labels(); }), ErrorCode::LabelMissing);
}

TEST(LongCsv, CustomColumnNamesAndExtraColumns) {
  CsvSchema s{"subject", "age", "height", "sex"};
  const auto d = read("note,subject,age,height,sex\nq,g1,1,70.1,1\nq,g1,2,80.5,1\n", s);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].values(), (std::vector<double>{70.1, 80.5}));
  EXPECT_EQ(*d[0].label(), 1);
}

TEST(LongCsv, ErrorsCarryTheRightCode) {
  EXPECT_EQ(code_of([] { read("id,value\na,1\n"); }), ErrorCode::Schema);
  EXPECT_EQ(code_of([] { read("id,time,value\na,1,2\na,zz,3\n"); }), ErrorCode::Parse);
  EXPECT_EQ(code_of([] { read("id,time,value\na,1,2\na,1,3\n"); }), ErrorCode::DuplicateObservation);
  EXPECT_EQ(code_of([] { read("id,time,value,label\na,1,2,2\n"); }), ErrorCode::Parse);
  EXPECT_EQ(code_of([] { read(""); }), ErrorCode::Schema);
  EXPECT_EQ(code_of([] { read("id,time,value\n"); }), ErrorCode::InsufficientData);
}

TEST(LongCsv, ParseErrorNamesTheRow) {
  try {
    read("id,time,value\na,1,2\na,2,abc\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
}

TEST(LongCsv, RoundTripIsExact) {
  sim::ScenarioConfig cfg = sim::scenario(3);
  cfg.seed = 11;
  const auto data = sim::generate(cfg);
  std::stringstream buf;
  write_long_csv(buf, data);
  const auto back = read_long_csv(buf, {}, data.domain());
  EXPECT_EQ(back, data);
}

TEST(Dataset, RejectsTimesOutsideDomain) {
  std::vector<SparseCurve> c{SparseCurve("a", {0.0, 2.0}, {1.0, 1.0})};
  EXPECT_EQ(code_of([&] { FunctionalDataset(c, Domain{0.0, 1.0}); }), ErrorCode::Domain);
  EXPECT_EQ(code_of([] { SparseCurve("a", {1.0, 1.0}, {1.0, 2.0}); }), ErrorCode::DuplicateObservation);
  EXPECT_EQ(code_of([] { SparseCurve("a", {}, {}); }), ErrorCode::Shape);
}

TEST(Sparsify, KeepsBetweenLoAndHiOriginalPoints) {
  const auto dense = dense_curves(93, 31);
  const auto sp = sparsify(dense, {12, 15}, 5);
  ASSERT_EQ(sp.size(), dense.size());
  std::set<std::size_t> sizes;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    const auto& c = sp[i];
    sizes.insert(c.size());
    EXPECT_GE(c.size(), 12u);
    EXPECT_LE(c.size(), 15u);
    EXPECT_EQ(c.label(), dense[i].label());
    for (std::size_t j = 0; j < c.size(); ++j) {
      const auto& src = dense[i];
      auto it = std::find(src.times().begin(), src.times().end(), c.times()[j]);
      ASSERT_NE(it, src.times().end());
      EXPECT_EQ(src.values()[static_cast<std::size_t>(it - src.times().begin())], c.values()[j]);
    }
  }
  EXPECT_EQ(sizes.size(), 4u);  // all of 12..15 show up across 93 curves
}

TEST(Sparsify, FullRangeIsIdentityAndSeedIsDeterministic) {
  const auto dense = dense_curves(10, 7);
  EXPECT_EQ(sparsify(dense, {7, 7}, 1), dense);
  EXPECT_EQ(sparsify(dense, {2, 5}, 9), sparsify(dense, {2, 5}, 9));
  EXPECT_NE(sparsify(dense, {2, 5}, 9), sparsify(dense, {2, 5}, 10));
  EXPECT_EQ(code_of([&] { sparsify(dense, {3, 8}, 1); }), ErrorCode::InsufficientObservations);
  EXPECT_EQ(code_of([&] { sparsify(dense, {0, 2}, 1); }), ErrorCode::Config);
}

TEST(Split, SizesMatchRequestedFraction) {
  const auto d = dense_curves(280, 3);
  const auto s = split(d, {187.0 / 280.0, 3});
  EXPECT_EQ(s.train.size(), 187u);
  EXPECT_EQ(s.test.size(), 93u);

  const auto two = split(dense_curves(2, 2), {0.5, 1});
  EXPECT_EQ(two.train.size(), 1u);
  EXPECT_EQ(two.test.size(), 1u);
}

TEST(Split, PartitionsAndStratifies) {
  const auto d = dense_curves(280, 3);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto s = split(d, {2.0 / 3.0, seed});
    std::multiset<std::string> ids;
    for (const auto& c : s.train.curves()) ids.insert(c.id());
    for (const auto& c : s.test.curves()) ids.insert(c.id());
    ASSERT_EQ(ids.size(), d.size());
    EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), d.size());
    for (const auto* side : {&s.train, &s.test}) {
      const auto y = side->labels();
      EXPECT_GT(std::count(y.begin(), y.end(), 1), 0);
      EXPECT_GT(std::count(y.begin(), y.end(), 0), 0);
    }
  }
}

TEST(Split, DifferentSeedsGiveDifferentPartitions) {
  const auto d = dense_curves(280, 3);
  auto ids = [](const FunctionalDataset& x) {
    std::set<std::string> s;
    for (const auto& c : x.curves()) s.insert(c.id());
    return s;
  };
  EXPECT_NE(ids(split(d, {0.5, 1}).train), ids(split(d, {0.5, 2}).train));
  EXPECT_EQ(ids(split(d, {0.5, 1}).train), ids(split(d, {0.5, 1}).train));
}

TEST(Split, RejectsBadFractionsAndUnlabelledData) {
  const auto d = dense_curves(10, 2);
  EXPECT_EQ(code_of([&] { split(d, {0.0, 1}); }), ErrorCode::Config);
  EXPECT_EQ(code_of([&] { split(d, {1.0, 1}); }), ErrorCode::Config);
  const auto unl = read("id,time,value\na,0,1\nb,1,2\n");
  EXPECT_EQ(code_of([&] { split(unl, {0.5, 1}); }), ErrorCode::LabelMissing);
}
