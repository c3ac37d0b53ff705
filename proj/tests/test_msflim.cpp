#include <gtest/gtest.h>

#include "flim/msflim.hpp"
#include "test_util.hpp"

using namespace flim;

namespace {

Volume wavy_volume(Shape3 s, std::uint64_t seed) {
  Rng rng(seed);
  Volume v(1, s);
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x)
        v.at(0, z, y, x) = static_cast<float>(std::sin(0.9 * x + 0.2 * z) * std::cos(0.6 * y) + 0.4 * rng.normal());
  return v;
}

// Markers of 30 voxels each laid out in 3x3x3-ish blocks.
MarkerSet blocks(const std::string& id, int count, Modality m = Modality::FLAIR) {
  MarkerSet ms{id, m, {}};
  for (int k = 0; k < count; ++k) {
    Marker mk{k + 1, MarkerLabel::OTHER, {}};
    for (int i = 0; i < 30; ++i) mk.voxels.push_back({1 + 3 * k + i / 10, 2 + (i / 5) % 2, 2 + i % 5});
    ms.markers.push_back(mk);
  }
  return ms;
}

Mask mask_from(Shape3 s, std::initializer_list<std::size_t> on) {
  Mask m(s);
  for (auto i : on) m.data[i] = 1;
  return m;
}

}  // namespace

TEST(MsFlimStep, CountingLaw) {
  std::vector<Volume> imgs{wavy_volume({14, 10, 10}, 1)};
  std::vector<MarkerSet> mks{blocks("a", 4)};
  const auto cs = run_msflim_step(imgs, mks, {10, 5, 3}, "r");
  ASSERT_EQ(cs.images.size(), 1u);
  EXPECT_EQ(cs.images[0].first_candidates, 40);
  EXPECT_EQ(cs.images[0].filters.size(), 5u);
  for (const auto& f : cs.images[0].filters) EXPECT_NEAR(l2_norm(f.weights), 1.0, 1e-6);
}

TEST(MsFlimStep, SecondStageCappedByFirstCandidates) {
  std::vector<Volume> imgs{wavy_volume({14, 10, 10}, 2), wavy_volume({14, 10, 10}, 3)};
  std::vector<MarkerSet> mks{blocks("a", 2), blocks("b", 3)};
  const auto cs = run_msflim_step(imgs, mks, {10, 50, 1}, "r");
  EXPECT_EQ(cs.images[0].first_candidates, 20);
  EXPECT_EQ(cs.images[0].filters.size(), 20u);
  EXPECT_EQ(cs.images[1].filters.size(), 30u);
  EXPECT_EQ(cs.candidate_count(), 50u);
  EXPECT_EQ(cs.images[1].filters[0].source.image_id, "b");
  EXPECT_EQ(cs.images[1].filters[0].source.run_id, "r");
}

TEST(MsFlimStep, SingleClusterIsNormalizedMeanPatch) {
  std::vector<Volume> imgs{wavy_volume({10, 10, 10}, 4)};
  std::vector<MarkerSet> mks{blocks("a", 1)};
  const auto cs = run_msflim_step(imgs, mks, {1, 1, 0}, "r");
  const PatchDataset pd = extract_patches(imgs[0], mks[0], 3, cs.norm);
  std::vector<double> mean(27, 0.0);
  for (std::size_t r = 0; r < pd.rows(); ++r)
    for (int j = 0; j < 27; ++j) mean[j] += pd.values[r * 27 + j] / static_cast<double>(pd.rows());
  double n = 0.0;
  for (double v : mean) n += v * v;
  n = std::sqrt(n);
  ASSERT_EQ(cs.images[0].filters.size(), 1u);
  for (int j = 0; j < 27; ++j) EXPECT_NEAR(cs.images[0].filters[0].weights[j], mean[j] / n, 1e-5);
}

TEST(MsFlimStep, RejectsBadInput) {
  std::vector<Volume> imgs{wavy_volume({10, 10, 10}, 5), wavy_volume({10, 10, 10}, 6)};
  std::vector<MarkerSet> mixed{blocks("a", 1), blocks("b", 1, Modality::T1Gd)};
  EXPECT_THROW(run_msflim_step(imgs, mixed, {2, 2, 0}), FormatError);
  std::vector<MarkerSet> ok{blocks("a", 1), blocks("b", 1)};
  EXPECT_THROW(run_msflim_step(imgs, ok, {0, 2, 0}), FormatError);
  EXPECT_THROW(run_msflim_step(std::span(imgs).first(1), ok, {2, 2, 0}), FormatError);
}

TEST(MsFlimStep, Deterministic) {
  std::vector<Volume> imgs{wavy_volume({14, 10, 10}, 7)};
  std::vector<MarkerSet> mks{blocks("a", 3)};
  EXPECT_EQ(encode_candidate_set(run_msflim_step(imgs, mks, {5, 4, 9}, "r")),
            encode_candidate_set(run_msflim_step(imgs, mks, {5, 4, 9}, "r")));
}

TEST(CandidateSetFile, RoundTrip) {
  std::vector<Volume> imgs{wavy_volume({14, 10, 10}, 8), wavy_volume({14, 10, 10}, 9)};
  std::vector<MarkerSet> mks{blocks("a", 2), blocks("b", 2)};
  const auto cs = run_msflim_step(imgs, mks, {5, 3, 2}, "flair-n5-3");
  const auto back = decode_candidate_set(encode_candidate_set(cs));
  EXPECT_EQ(encode_candidate_set(back), encode_candidate_set(cs));
  std::string bytes = encode_candidate_set(cs);
  bytes.resize(bytes.size() - 4);
  EXPECT_THROW(decode_candidate_set(bytes), FormatError);
}

TEST(ActivationMap, SelfDotShapeAndRelu) {
  const Volume v = wavy_volume({8, 8, 8}, 10);
  const NormStats st{{0.1f}, {0.8f}};
  const Voxel q{3, 4, 2};
  std::vector<float> p(27);
  centralized_patch(v, st, 3, q, p);
  const Filter f{unit_normalized(p), {}};
  const Volume a = activation_map(v, f, st);
  EXPECT_EQ(a.channels(), 1);
  EXPECT_EQ(a.shape(), v.shape());
  EXPECT_NEAR(a.at(0, q), l2_norm(p), 1e-4);
  for (float x : a.data()) EXPECT_GE(x, 0.0f);
}

TEST(SoftIoU, KnownValues) {
  const Shape3 s{4, 4, 4};
  const Mask m = mask_from(s, {0, 1, 2, 3, 4, 5, 6, 7});
  std::vector<float> act(64, 0.0f);
  for (int i = 0; i < 8; ++i) act[i] = 1.0f;
  EXPECT_NEAR(score_candidate_against_region(act, m), 1.0, 1e-12);

  std::vector<float> inv(64, 1.0f);
  for (int i = 0; i < 8; ++i) inv[i] = 0.0f;
  EXPECT_NEAR(score_candidate_against_region(inv, m), 0.0, 1e-12);

  std::vector<float> half(64, 0.0f);
  for (int i = 0; i < 4; ++i) half[i] = 5.0f;
  EXPECT_NEAR(score_candidate_against_region(half, m), 0.5, 1e-12);

  // Min-max normalization makes the score invariant to affine rescaling.
  std::vector<float> scaled(64, 3.0f);
  for (int i = 0; i < 8; ++i) scaled[i] = 7.0f;
  EXPECT_NEAR(score_candidate_against_region(scaled, m), 1.0, 1e-12);

  EXPECT_EQ(score_candidate_against_region(std::vector<float>(64, 2.0f), m), 0.0);
  EXPECT_THROW(score_candidate_against_region(act, Mask(s)), FormatError);
  EXPECT_THROW(score_candidate_against_region(std::vector<float>(10), m), FormatError);
}

TEST(SoftIoU, RoiRestrictsScoring) {
  const Shape3 s{2, 2, 2};
  const Mask m = mask_from(s, {0, 1});
  Mask roi = mask_from(s, {0, 1, 2, 3});
  // Outside the ROI the activation is high, inside it matches the mask.
  const std::vector<float> act{1, 1, 0, 0, 1, 1, 1, 1};
  EXPECT_NEAR(score_candidate_against_region(act, m, &roi), 1.0, 1e-12);
  EXPECT_LT(score_candidate_against_region(act, m), 0.5);
}

TEST(SelectionLedger, RulesAndJson) {
  SelectionLedger l(2);
  l.add({"r", "a", 0});
  EXPECT_THROW(l.add({"r", "a", 0}), FormatError);
  l.add({"r", "a", 1});
  EXPECT_TRUE(l.full());
  EXPECT_THROW(l.add({"r", "a", 2}), FormatError);
  l.remove({"r", "a", 0});
  EXPECT_EQ(l.size(), 1u);
  const auto back = ledger_from_json(ledger_to_json(l));
  EXPECT_EQ(back.chosen(), l.chosen());
  EXPECT_EQ(back.target_bank_size(), 2);
  EXPECT_THROW(SelectionLedger(0), FormatError);
}

TEST(FinalizeBank, ComposesPicksAcrossRuns) {
  std::vector<Volume> imgs{wavy_volume({14, 10, 10}, 11), wavy_volume({14, 10, 10}, 12)};
  std::vector<MarkerSet> mks{blocks("a", 2), blocks("b", 2)};
  std::vector<CandidateSet> runs{run_msflim_step(imgs, mks, {5, 3, 1}, "r1"), run_msflim_step(imgs, mks, {5, 4, 2}, "r2")};
  SelectionLedger l(16);
  l.add({"r1", "a", 0});
  l.add({"r1", "b", 2});
  l.add({"r2", "a", 1});
  l.add({"r2", "a", 3});
  l.add({"r2", "b", 0});
  const FilterBank bank = finalize_bank(runs, l, runs[0].norm);
  EXPECT_EQ(bank.size(), 5);
  EXPECT_EQ(bank.layer, 1);
  EXPECT_EQ(bank.in_channels, 1);
  EXPECT_EQ(bank.filters[3].weights, runs[1].find_image("a")->filters[3].weights);
  EXPECT_EQ(bank.filters[1].source.run_id, "r1");

  // The finalized bank drives the second layer's input width.
  const auto enc = build_encoder(imgs, mks, EncoderSpec{}, bank, 4);
  EXPECT_EQ(enc.banks[1].in_channels, 5);

  SelectionLedger dangling(4);
  dangling.add({"r9", "a", 0});
  EXPECT_THROW(finalize_bank(runs, dangling, runs[0].norm), NotFoundError);
  SelectionLedger bad_index(4);
  bad_index.add({"r1", "a", 7});
  EXPECT_THROW(finalize_bank(runs, bad_index, runs[0].norm), NotFoundError);
  EXPECT_THROW(finalize_bank(runs, SelectionLedger(4), runs[0].norm), FormatError);
}

TEST(Grid, RunIdsAndSizes) {
  std::vector<Volume> imgs{wavy_volume({14, 10, 10}, 13)};
  std::vector<MarkerSet> mks{blocks("a", 3)};
  const auto runs = run_msflim_grid(imgs, mks, GridSpec{}, 5);
  ASSERT_EQ(runs.size(), 6u);
  EXPECT_EQ(runs[0].run_id, "flair-n5-5");
  EXPECT_EQ(runs[5].run_id, "flair-n10-50");
  EXPECT_EQ(runs[2].images[0].filters.size(), 15u);  // N1=5, N2=50, 3 markers
  EXPECT_EQ(runs[5].images[0].filters.size(), 30u);
}

TEST(ScriptedSelection, PicksRegionWinnersFirst) {
  // Two half-space regions; a bright right half and a bright left half.
  const Shape3 s{6, 6, 6};
  Volume v(1, s);
  Mask right(s), left(s);
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        const auto i = s.index({z, y, x});
        v.at(0, z, y, x) = x >= 3 ? 1.0f : -1.0f;
        (x >= 3 ? right : left).data[i] = 1;
      }
  CandidateSet cs;
  cs.run_id = "r";
  cs.norm = {{0.0f}, {1.0f}};
  std::vector<float> plus(27, 1.0f), minus(27, -1.0f), noise(27, 0.0f);
  noise[0] = 1.0f;
  noise[26] = -1.0f;
  cs.images.push_back({"img", 3, {{unit_normalized(noise), {}}, {unit_normalized(plus), {}}, {unit_normalized(minus), {}}}});
  std::vector<CandidateSet> runs{cs};
  std::vector<Volume> imgs{v};
  std::vector<OracleRegion> regions{{"right", {right}}, {"left", {left}}};
  const auto rep = scripted_selection(runs, imgs, regions, {}, OracleConfig{0.3, 2});
  ASSERT_TRUE(rep.region_pick[0].has_value());
  ASSERT_TRUE(rep.region_pick[1].has_value());
  EXPECT_EQ(rep.region_pick[0]->index, 1);
  EXPECT_EQ(rep.region_pick[1]->index, 2);
  EXPECT_GE(rep.best_region_score[0], 0.3);
  EXPECT_EQ(rep.ledger.size(), 2u);

  const auto strict = scripted_selection(runs, imgs, regions, {}, OracleConfig{0.999, 3});
  EXPECT_FALSE(strict.region_pick[0].has_value());
  EXPECT_EQ(strict.ledger.size(), 3u);
}
