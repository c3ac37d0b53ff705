#include <gtest/gtest.h>

#include "flim/markers.hpp"
#include "test_util.hpp"

using namespace flim;
using flim::testing::TempDir;

namespace {

Marker blob(int id, MarkerLabel label, int n, int z0 = 0) {
  Marker m{id, label, {}};
  for (int i = 0; i < n; ++i) m.voxels.push_back({z0 + i / 4, i % 4, 1});
  return m;
}

}  // namespace

TEST(Markers, LoadCountsMarkers) {
  TempDir dir;
  const std::string text = R"({"image_id":"case_000","modality":"FLAIR","markers":[
    {"id":1,"label":"ED","voxels":[[0,0,0],[0,0,1],[0,0,2],[0,0,3],[0,0,4]]},
    {"id":2,"label":"OTHER","voxels":[[1,0,0],[1,0,1],[1,0,2],[1,0,3],[1,0,4]]}]})";
  write_file_atomic(dir / "m.mk", text);
  const MarkerSet ms = load_markers(dir / "m.mk");
  EXPECT_EQ(ms.image_id, "case_000");
  EXPECT_EQ(ms.modality, Modality::FLAIR);
  ASSERT_EQ(ms.markers.size(), 2u);
  EXPECT_EQ(ms.markers[0].voxels.size(), 5u);
  EXPECT_EQ(ms.markers[1].label, MarkerLabel::OTHER);
}

TEST(Markers, SaveLoadRoundTrip) {
  TempDir dir;
  MarkerSet ms{"img", Modality::T1Gd, {blob(3, MarkerLabel::ET, 7), blob(1, MarkerLabel::NC, 4, 5)}};
  save_markers(ms, dir / "m.mk");
  EXPECT_EQ(load_markers(dir / "m.mk"), ms);
}

TEST(Markers, RejectsInvalidContent) {
  EXPECT_THROW(parse_markers(R"({"image_id":"a","modality":"FLAIR","markers":[{"id":1,"label":"ED","voxels":[[1,1,1],[1,1,1]]}]})"),
               FormatError);
  EXPECT_THROW(parse_markers(R"({"image_id":"a","modality":"FLAIR","markers":[{"id":1,"label":"ED","voxels":[[-1,1,1]]}]})"),
               FormatError);
  EXPECT_THROW(parse_markers(R"({"image_id":"a","modality":"FLAIR","markers":[{"id":1,"voxels":[[1,1,1]]},{"id":1,"voxels":[[2,1,1]]}]})"),
               FormatError);
  EXPECT_THROW(parse_markers(R"({"image_id":"a","modality":"T2","markers":[]})"), FormatError);
  EXPECT_THROW(parse_markers(R"({"image_id":"a"})"), FormatError);
  EXPECT_THROW(parse_markers("{"), FormatError);
}

TEST(Markers, BoundsCheckedWhenBound) {
  MarkerSet ms{"a", Modality::FLAIR, {Marker{1, MarkerLabel::ED, {{0, 0, 0}, {3, 3, 4}}}}};
  EXPECT_NO_THROW(validate_markers_in(ms, {4, 4, 5}));
  EXPECT_THROW(validate_markers_in(ms, {4, 4, 4}), FormatError);
}

TEST(ProjectMarkers, StrideOneIsIdentity) {
  MarkerSet ms{"a", Modality::FLAIR, {blob(1, MarkerLabel::ED, 9)}};
  EXPECT_EQ(project_markers(ms, 1), ms);
}

TEST(ProjectMarkers, FloorAndDedup) {
  MarkerSet ms{"a", Modality::FLAIR, {Marker{4, MarkerLabel::ET, {{0, 0, 0}, {1, 1, 1}}}, Marker{7, MarkerLabel::NC, {{4, 6, 2}}}}};
  const MarkerSet p = project_markers(ms, 2);
  ASSERT_EQ(p.markers.size(), 2u);
  EXPECT_EQ(p.markers[0].id, 4);
  EXPECT_EQ(p.markers[0].label, MarkerLabel::ET);
  EXPECT_EQ(p.markers[0].voxels, (std::vector<Voxel>{{0, 0, 0}}));
  EXPECT_EQ(p.markers[1].voxels, (std::vector<Voxel>{{2, 3, 1}}));
  EXPECT_THROW(project_markers(ms, 0), FormatError);
}

TEST(ProjectMarkers, CompositionAndMonotoneCount) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Marker m{1, MarkerLabel::ED, {}};
    std::set<Voxel> seen;
    while (m.voxels.size() < 40) {
      Voxel v{static_cast<int>(rng.below(64)), static_cast<int>(rng.below(64)), static_cast<int>(rng.below(64))};
      if (seen.insert(v).second) m.voxels.push_back(v);
    }
    MarkerSet ms{"a", Modality::FLAIR, {m}};
    for (int s1 : {1, 2, 4})
      for (int s2 : {1, 2, 4}) {
        const auto twice = project_markers(project_markers(ms, s1), s2);
        EXPECT_EQ(twice, project_markers(ms, s1 * s2));
        EXPECT_LE(twice.voxel_count(), ms.voxel_count());
      }
  }
}

TEST(MarkerBalance, RatioAndWarning) {
  MarkerSet even{"a", Modality::FLAIR, {blob(1, MarkerLabel::ED, 10), blob(2, MarkerLabel::ED, 10), blob(3, MarkerLabel::ET, 10)}};
  auto r = check_marker_balance(even);
  EXPECT_DOUBLE_EQ(r.ratio, 1.0);
  EXPECT_FALSE(r.warning);

  MarkerSet skewed{"a", Modality::FLAIR, {blob(1, MarkerLabel::ED, 10), blob(2, MarkerLabel::ED, 30)}};
  r = check_marker_balance(skewed);
  EXPECT_DOUBLE_EQ(r.ratio, 3.0);
  EXPECT_TRUE(r.warning);

  MarkerSet single{"a", Modality::FLAIR, {blob(1, MarkerLabel::ED, 3)}};
  EXPECT_DOUBLE_EQ(check_marker_balance(single).ratio, 1.0);
  EXPECT_THROW(check_marker_balance(MarkerSet{}), FormatError);
}
