#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "onebev/errors.hpp"
#include "onebev/stitcher.hpp"

using namespace onebev;

namespace {

const std::string kDataDir = ONEBEV_DATA_DIR;

RemapOptions small_grid(int h, int w, OverlapPolicy policy = OverlapPolicy::Nearest, int jobs = 1) {
  RemapOptions o;
  o.grid.height = h;
  o.grid.width = w;
  o.policy = policy;
  o.jobs = jobs;
  return o;
}

std::map<int, Image> constant_images(const Rig& rig) {
  std::map<int, Image> images;
  for (const auto& c : rig.cameras)
    images.emplace(c.order_index, Image(c.width, c.height, 3, static_cast<std::uint8_t>(30 * c.order_index)));
  return images;
}

}  // namespace

TEST(RemapTable, SingleCameraValidRegion) {
  const Rig rig = load_rig(kDataDir + "/rigs/single_camera.json");
  const RemapTable t = build_remap_table(rig, small_grid(100, 400));
  // A 200 px wide, 90 degree camera covers azimuths in [-45, 45): column k is
  // centred at ((k + 0.5) / 400 * 2 - 1) * 180 degrees, so k = 150 .. 249. The
  // vertical extent of +-25 degrees stays inside the +-45 degree image.
  std::size_t expected_valid = 0;
  for (int k = 0; k < 400; ++k) {
    const double az = ((k + 0.5) / 400.0 * 2.0 - 1.0) * 180.0;
    if (az >= -45.0 && az < 45.0) expected_valid += 100;
  }
  EXPECT_EQ(expected_valid, 10000u);
  EXPECT_EQ(t.invalid_count(), 40000u - expected_valid);
  for (int r = 0; r < 100; ++r)
    for (int k = 0; k < 400; ++k) EXPECT_EQ(t.at(r, k).valid(), k >= 150 && k < 250) << r << "," << k;
}

TEST(RemapTable, PaperRigCoversEverything) {
  const Rig rig = load_rig(kDataDir + "/rigs/paper_rig.json");
  const RemapTable t = build_remap_table(rig, small_grid(60, 960));
  EXPECT_EQ(t.invalid_count(), 0u);
  for (const auto& e : t.entries) {
    const auto& cam = *std::find_if(rig.cameras.begin(), rig.cameras.end(),
                                    [&](const CameraSpec& c) { return c.order_index == e.camera_id; });
    EXPECT_GE(e.src_u, 0.0f);
    EXPECT_LT(e.src_u, static_cast<float>(cam.width));
    EXPECT_GE(e.src_v, 0.0f);
    EXPECT_LT(e.src_v, static_cast<float>(cam.height));
  }
}

TEST(RemapTable, SeamLocality) {
  const Rig rig = load_rig(kDataDir + "/rigs/paper_rig.json");
  const RemapTable t = build_remap_table(rig, small_grid(60, 960));
  // Cameras sorted by yaw: back-left(-110), front-left(-55), front(0),
  // front-right(55), back-right(110), back(180).
  const std::map<int, int> ring{{2, 0}, {3, 1}, {4, 2}, {5, 3}, {6, 4}, {1, 5}};
  for (int r = 0; r < t.height; ++r) {
    std::map<std::pair<int, int>, int> transitions;
    for (int k = 0; k < t.width; ++k) {
      const int a = t.at(r, k).camera_id, b = t.at(r, (k + 1) % t.width).camera_id;
      if (a == b) continue;
      const int d = (ring.at(b) - ring.at(a) + 6) % 6;
      EXPECT_TRUE(d == 1 || d == 5) << "non-adjacent cameras meet in row " << r;
      ++transitions[{a, b}];
    }
    for (const auto& [pair, n] : transitions) EXPECT_EQ(n, 1);
    EXPECT_EQ(transitions.size(), 6u);
  }
}

TEST(RemapTable, NearestPicksBestAlignedCamera) {
  const Rig rig = load_rig(kDataDir + "/rigs/paper_rig.json");
  const RemapTable t = build_remap_table(rig, small_grid(61, 720));
  // Azimuth 20 degrees is seen by the front (0) and front-right (55) cameras;
  // the front camera is closer.
  const int col = static_cast<int>((20.0 / 360.0 + 0.5) * 720);
  EXPECT_EQ(t.at(30, col).camera_id, 4);
  const int col2 = static_cast<int>((35.0 / 360.0 + 0.5) * 720);
  EXPECT_EQ(t.at(30, col2).camera_id, 5);
}

TEST(RemapTable, OrderPolicyLetsLaterCamerasWin) {
  const Rig rig = load_rig(kDataDir + "/rigs/paper_rig.json");
  const RemapTable t = build_remap_table(rig, small_grid(61, 720, OverlapPolicy::Order));
  const int col = static_cast<int>((20.0 / 360.0 + 0.5) * 720);
  EXPECT_EQ(t.at(30, col).camera_id, 5);
  EXPECT_EQ(t.invalid_count(), 0u);
}

TEST(RemapTable, IndependentOfJobs) {
  const Rig rig = load_rig(kDataDir + "/rigs/paper_rig.json");
  const RemapTable a = build_remap_table(rig, small_grid(37, 500, OverlapPolicy::Nearest, 1));
  const RemapTable b = build_remap_table(rig, small_grid(37, 500, OverlapPolicy::Nearest, 8));
  EXPECT_EQ(serialize_remap(a), serialize_remap(b));
}

TEST(RemapFormat, Layout) {
  RemapTable t(1, 2);
  t.at(0, 1) = {3, 1.5f, -2.0f};
  const auto bytes = serialize_remap(t);
  ASSERT_EQ(bytes.size(), 16u + 2u * 10u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "OBRM");
  auto u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(bytes[off]) | static_cast<std::uint32_t>(bytes[off + 1]) << 8 |
           static_cast<std::uint32_t>(bytes[off + 2]) << 16 | static_cast<std::uint32_t>(bytes[off + 3]) << 24;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 1u);
  EXPECT_EQ(u32(12), 2u);
  // First record: camera -1 (0xffff), zeros.
  EXPECT_EQ(bytes[16], 0xff);
  EXPECT_EQ(bytes[17], 0xff);
  // Second record: camera 3, 1.5f = 0x3fc00000, -2.0f = 0xc0000000.
  EXPECT_EQ(bytes[26], 3);
  EXPECT_EQ(bytes[27], 0);
  EXPECT_EQ(u32(28), 0x3fc00000u);
  EXPECT_EQ(u32(32), 0xc0000000u);
}

TEST(RemapFormat, RoundTripAndErrors) {
  const Rig rig = load_rig(kDataDir + "/rigs/paper_rig.json");
  const RemapTable t = build_remap_table(rig, small_grid(20, 100));
  const auto path = std::filesystem::temp_directory_path() / "onebev_test_table.obrm";
  save_remap(path, t);
  EXPECT_EQ(load_remap(path), t);
  std::filesystem::remove(path);

  const RemapTable empty(1, 1);
  const RemapTable back = deserialize_remap(serialize_remap(empty));
  ASSERT_EQ(back.entries.size(), 1u);
  EXPECT_EQ(back.entries[0].camera_id, -1);

  auto bytes = serialize_remap(t);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_remap(bad_magic), IoError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_remap(bad_version), IoError);
  bytes.pop_back();
  EXPECT_THROW(deserialize_remap(bytes), IoError);
  EXPECT_THROW(load_remap("/nonexistent/table.obrm"), IoError);
}

TEST(Stitch, ConstantImagesGivePiecewiseConstantPanorama) {
  const Rig rig = load_rig(kDataDir + "/rigs/paper_rig.json");
  const RemapTable t = build_remap_table(rig, small_grid(30, 300));
  const Image pano = stitch(constant_images(rig), t);
  for (int r = 0; r < t.height; ++r)
    for (int k = 0; k < t.width; ++k)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(pano.at(r, k, c), 30 * t.at(r, k).camera_id);
}

TEST(Stitch, InvalidPixelsAreBlack) {
  const Rig rig = load_rig(kDataDir + "/rigs/single_camera.json");
  const RemapTable t = build_remap_table(rig, small_grid(10, 40));
  const Image pano = stitch(constant_images(rig), t);
  for (int r = 0; r < t.height; ++r)
    for (int k = 0; k < t.width; ++k) EXPECT_EQ(pano.at(r, k, 0), t.at(r, k).valid() ? 30 : 0);
}

TEST(Stitch, MissingCameraImageThrows) {
  const Rig rig = load_rig(kDataDir + "/rigs/paper_rig.json");
  const RemapTable t = build_remap_table(rig, small_grid(10, 100));
  auto images = constant_images(rig);
  images.erase(3);
  EXPECT_THROW(stitch(images, t), ValidationError);
  EXPECT_THROW(check_images(rig, images), ValidationError);
}

TEST(Stitch, WrongImageSizeRejected) {
  const Rig rig = load_rig(kDataDir + "/rigs/paper_rig.json");
  auto images = constant_images(rig);
  images[1] = Image(10, 10, 3);
  EXPECT_THROW(check_images(rig, images), ValidationError);
}

TEST(SampleBilinear, LatticeAndCheckerboard) {
  Image img(2, 2, 1);
  img.at(0, 0) = 0;
  img.at(0, 1) = 255;
  img.at(1, 0) = 255;
  img.at(1, 1) = 0;
  double v = 0;
  sample_bilinear(img, 1.0, 0.0, &v);
  EXPECT_EQ(v, 255.0);
  sample_bilinear(img, 0.5, 0.5, &v);
  EXPECT_DOUBLE_EQ(v, 0.25 * (0 + 255 + 255 + 0));
  sample_bilinear(img, 0.25, 0.0, &v);
  EXPECT_DOUBLE_EQ(v, 0.75 * 0 + 0.25 * 255);
  // Beyond the border the nearest row/column is used.
  sample_bilinear(img, 5.0, -3.0, &v);
  EXPECT_EQ(v, 255.0);
}
