#include <gtest/gtest.h>

#include "flim/metrics.hpp"

using namespace flim;

namespace {
Mask mask_of(Shape3 s, std::initializer_list<std::size_t> on) {
  Mask m(s);
  for (auto i : on) m.data[i] = 1;
  return m;
}
}  // namespace

TEST(ComposeRegions, SetDefinitions) {
  LabelVolume bg({2, 2, 2});
  const auto e = compose_regions(bg);
  EXPECT_EQ(e.et.count() + e.nc.count() + e.wt.count(), 0u);

  LabelVolume one({2, 2, 2});
  one.data()[3] = 1;
  const auto r1 = compose_regions(one);
  EXPECT_EQ(r1.wt.count(), 1u);
  EXPECT_EQ(r1.et.count(), 0u);
  EXPECT_EQ(r1.nc.count(), 0u);

  LabelVolume three({2, 2, 2});
  three.data()[0] = 1;
  three.data()[1] = 2;
  three.data()[2] = 3;
  const auto r3 = compose_regions(three);
  EXPECT_EQ(r3.wt.count(), 3u);
  EXPECT_EQ(r3.et.count(), 1u);
  EXPECT_EQ(r3.nc.count(), 1u);
}

TEST(ComposeRegions, NestingOnRandomLabels) {
  Rng rng(1);
  LabelVolume l({6, 6, 6});
  for (auto& v : l.data()) v = static_cast<std::uint8_t>(rng.below(4));
  const auto r = compose_regions(l);
  for (std::size_t i = 0; i < l.data().size(); ++i) {
    if (r.et[i]) EXPECT_TRUE(r.wt[i]);
    if (r.nc[i]) EXPECT_TRUE(r.wt[i]);
  }
}

TEST(Dice, KnownValues) {
  const Shape3 s{2, 2, 4};
  const Mask a = mask_of(s, {0, 1, 2, 3});
  EXPECT_DOUBLE_EQ(dice(a, a), 1.0);
  EXPECT_DOUBLE_EQ(dice(a, mask_of(s, {4, 5})), 0.0);
  EXPECT_DOUBLE_EQ(dice(a, mask_of(s, {2, 3, 4, 5})), 0.5);
  EXPECT_DOUBLE_EQ(dice(Mask(s), Mask(s)), 1.0);
  EXPECT_DOUBLE_EQ(dice(a, Mask(s)), 0.0);
  EXPECT_THROW(dice(a, Mask({4, 2, 2})), FormatError);
}

TEST(Dice, SymmetricAndMonotone) {
  Rng rng(2);
  const Shape3 s{4, 4, 4};
  for (int t = 0; t < 50; ++t) {
    Mask a(s), b(s);
    for (auto& v : a.data) v = rng.below(2);
    for (auto& v : b.data) v = rng.below(2);
    EXPECT_DOUBLE_EQ(dice(a, b), dice(b, a));
  }
  // Fixed sizes |a| = |b| = 4, growing overlap.
  double prev = -1.0;
  for (std::size_t k = 0; k <= 4; ++k) {
    Mask a = mask_of(s, {0, 1, 2, 3});
    Mask b(s);
    for (std::size_t i = 0; i < 4; ++i) b.data[i < k ? i : 10 + i] = 1;
    const double d = dice(a, b);
    EXPECT_GT(d, prev);
    prev = d;
  }
}

TEST(DiceReport, PopulationStdAndCsv) {
  DiceReport r;
  r.cases = {{"a", 1.0, 1.0, 0.6}, {"b", 1.0, 0.5, 0.8}};
  EXPECT_NEAR(r.wt().mean, 0.7, 1e-12);
  EXPECT_NEAR(r.wt().std, 0.1, 1e-12);
  EXPECT_NEAR(r.et().std, 0.0, 1e-12);
  const std::string csv = report_csv(r);
  EXPECT_EQ(csv,
            "case_id,dsc_et,dsc_nc,dsc_wt\n"
            "a,1.000000,1.000000,0.600000\n"
            "b,1.000000,0.500000,0.800000\n"
            "mean,1.000000,0.750000,0.700000\n"
            "std,0.000000,0.250000,0.100000\n");
  const auto back = parse_report_csv(csv);
  ASSERT_EQ(back.cases.size(), 2u);
  EXPECT_EQ(back.cases[1].case_id, "b");
  EXPECT_DOUBLE_EQ(back.cases[1].nc, 0.5);
  EXPECT_THROW(parse_report_csv("nope\n"), FormatError);
  EXPECT_THROW(parse_report_csv("case_id,dsc_et,dsc_nc,dsc_wt\na,1,2\n"), FormatError);
}

TEST(DiceReport, PerfectPrediction) {
  LabelVolume l({4, 4, 4});
  l.data()[5] = 1;
  l.data()[6] = 2;
  l.data()[7] = 3;
  DiceReport r;
  r.cases.push_back(case_dice("x", l, l));
  EXPECT_DOUBLE_EQ(r.et().mean, 1.0);
  EXPECT_DOUBLE_EQ(r.nc().mean, 1.0);
  EXPECT_DOUBLE_EQ(r.wt().mean, 1.0);
  EXPECT_DOUBLE_EQ(r.wt().std, 0.0);
}

TEST(ComparisonTable, RowsAndCells) {
  DiceReport r;
  r.cases = {{"a", 0.7, 0.8, 0.6}, {"b", 0.8, 0.9, 0.8}};
  std::vector<std::pair<std::string, DiceReport>> models;
  for (const char* n : {"FBp", "FLIM+PBp", "MS-FLIM+PBp", "MS-FLIM+FT"}) models.push_back({n, r});
  const std::string t = comparison_table(models);
  std::size_t lines = 0;
  for (char c : t) lines += c == '\n';
  EXPECT_EQ(lines, 6u);
  EXPECT_NE(t.find("| MS-FLIM+PBp | 0.750(0.050) | 0.850(0.050) | 0.700(0.100) |"), std::string::npos) << t;
}
