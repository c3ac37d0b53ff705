#include <gtest/gtest.h>

#include <unistd.h>

#include "flim/volume.hpp"
#include "test_util.hpp"

using namespace flim;
using flim::testing::TempDir;

TEST(Volume, ReadsHeaderDeclaredShape) {
  TempDir dir;
  const std::string header = R"({"magic":"MVOL1","shape":[2,4,4,4],"dtype":"f32le","spacing_mm":[1.0,1.0,1.0]})";
  std::string bytes = header + "\n";
  std::vector<float> payload(128);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(i) * 0.5f;
  bytes.append(reinterpret_cast<const char*>(payload.data()), payload.size() * 4);
  write_file_atomic(dir / "a.mvol", bytes);

  const Volume v = read_volume(dir / "a.mvol");
  EXPECT_EQ(v.channels(), 2);
  EXPECT_EQ(v.shape(), (Shape3{4, 4, 4}));
  EXPECT_FLOAT_EQ(v.at(1, 3, 3, 3), 127 * 0.5f);
}

TEST(Volume, RoundTripIsByteExact) {
  TempDir dir;
  const Volume v = flim::testing::random_volume(3, {5, 6, 7}, 11);
  write_volume(v, dir / "v.mvol");
  const Volume back = read_volume(dir / "v.mvol");
  EXPECT_EQ(back, v);
  // read then write reproduces the file bytes
  write_volume(back, dir / "w.mvol");
  EXPECT_EQ(read_file(dir / "v.mvol"), read_file(dir / "w.mvol"));
}

TEST(Volume, HeaderMatchesDocumentedLayout) {
  Volume v(1, {1, 1, 2}, std::array<double, 3>{1.0, 2.0, 0.5});
  const std::string bytes = encode_volume(v);
  EXPECT_EQ(bytes.substr(0, bytes.find('\n')),
            R"({"magic":"MVOL1","shape":[1,1,1,2],"dtype":"f32le","spacing_mm":[1.0,2.0,0.5]})");
  EXPECT_EQ(bytes.size(), bytes.find('\n') + 1 + 8);
}

TEST(Volume, TruncatedPayloadIsRejected) {
  Volume v(2, {4, 4, 4});
  std::string bytes = encode_volume(v);
  bytes.resize(bytes.size() - 4);  // 127 of 128 values
  EXPECT_THROW(decode_volume(bytes), FormatError);
  bytes = encode_volume(v) + "xxxx";
  EXPECT_THROW(decode_volume(bytes), FormatError);
}

TEST(Volume, MalformedHeaderAndNonFiniteAreRejected) {
  EXPECT_THROW(decode_volume("not json\n"), FormatError);
  EXPECT_THROW(decode_volume("{\"magic\":\"MVOL2\",\"shape\":[1,1,1,1],\"dtype\":\"f32le\"}\n\0\0\0\0"), FormatError);
  EXPECT_THROW(decode_volume("{\"magic\":\"MVOL1\",\"shape\":[1,1,1],\"dtype\":\"f32le\"}\n"), FormatError);
  EXPECT_THROW(decode_volume("no newline"), FormatError);
  Volume v(1, {1, 1, 1});
  v.data()[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(decode_volume(encode_volume(v)), FormatError);
  v.data()[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(decode_volume(encode_volume(v)), FormatError);
}

TEST(Volume, LabelsValidatedOnLoad) {
  TempDir dir;
  LabelVolume labels({2, 2, 2});
  labels.at({1, 1, 1}) = 3;
  labels.at({0, 1, 0}) = 1;
  write_labels(labels, dir / "l.mvol");
  EXPECT_EQ(read_labels(dir / "l.mvol"), labels);

  Volume bad(1, {1, 1, 2});
  bad.data() = {0.0f, 4.0f};
  EXPECT_THROW(volume_to_labels(bad), FormatError);
  bad.data() = {0.0f, 1.5f};
  EXPECT_THROW(volume_to_labels(bad), FormatError);
}

TEST(Slice2D, ZAndXAxesFollowDefinition) {
  const Volume v = flim::testing::random_volume(1, {4, 4, 4}, 3);
  const Grid2D gz = slice2d(v, Axis::Z, 0, 0);
  ASSERT_EQ(gz.rows, 4);
  ASSERT_EQ(gz.cols, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(gz.at(y, x), v.at(0, 0, y, x));
  const Grid2D gx = slice2d(v, Axis::X, 2, 0);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y) EXPECT_EQ(gx.at(z, y), v.at(0, z, y, 2));
}

TEST(Slice2D, OutOfRangeIndexOrChannel) {
  const Volume v(1, {4, 4, 4});
  EXPECT_THROW(slice2d(v, Axis::Z, 4, 0), FormatError);
  EXPECT_THROW(slice2d(v, Axis::Y, -1, 0), FormatError);
  EXPECT_THROW(slice2d(v, Axis::X, 0, 1), FormatError);
}

TEST(Slice2D, RestackingEveryAxisReproducesChannel) {
  const Volume v = flim::testing::random_volume(2, {3, 5, 4}, 9);
  for (Axis axis : {Axis::Z, Axis::Y, Axis::X}) {
    Volume rebuilt(2, v.shape());
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < extent_along(v.shape(), axis); ++i) {
        const Grid2D g = slice2d(v, axis, i, c);
        for (int r = 0; r < g.rows; ++r)
          for (int col = 0; col < g.cols; ++col) {
            if (axis == Axis::Z) rebuilt.at(c, i, r, col) = g.at(r, col);
            if (axis == Axis::Y) rebuilt.at(c, r, i, col) = g.at(r, col);
            if (axis == Axis::X) rebuilt.at(c, r, col, i) = g.at(r, col);
          }
      }
    EXPECT_EQ(rebuilt, v);
  }
}
