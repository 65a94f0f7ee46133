#include <cstdio>
#include <filesystem>

#include "doctest.h"

#include "affbench/image.hpp"

using namespace affbench;

TEST_CASE("bilinear resize reproduces hand-computed 4x4 -> 2x2 values") {
  // One channel, values 0..15 row-major. With half-pixel centres the 2x2
  // output samples land at source coordinates (1.0, 1.0), (1.0, 3.0),
  // (3.0, 1.0), (3.0, 3.0) midpoints: each output is the mean of a 2x2
  // source block.
  Tensor src({1, 4, 4});
  for (int i = 0; i < 16; ++i) src.data()[i] = static_cast<float>(i);
  Tensor out = resize_bilinear(src, 2, 2);
  REQUIRE(out.shape() == std::vector<int64_t>{1, 2, 2});
  CHECK(out.data()[0] == doctest::Approx(2.5));   // mean of {0,1,4,5}
  CHECK(out.data()[1] == doctest::Approx(4.5));   // mean of {2,3,6,7}
  CHECK(out.data()[2] == doctest::Approx(10.5));  // mean of {8,9,12,13}
  CHECK(out.data()[3] == doctest::Approx(12.5));  // mean of {10,11,14,15}
}

TEST_CASE("bilinear identity resize is exact") {
  Tensor src({2, 3, 3});
  for (int i = 0; i < 18; ++i) src.data()[i] = static_cast<float>(i) * 0.25f;
  Tensor out = resize_bilinear(src, 3, 3);
  for (int i = 0; i < 18; ++i) CHECK(out.data()[i] == doctest::Approx(src.data()[i]));
}

TEST_CASE("bilinear upsample of a constant image stays constant") {
  Tensor src({1, 5, 7}, 3.25f);
  Tensor out = resize_bilinear(src, 128, 128);
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == doctest::Approx(3.25f));
}

TEST_CASE("preprocess maps mid-gray to zero and bounds output to [-1,1]") {
  RawImage img;
  img.width = 64;
  img.height = 48;
  img.pixels.assign(static_cast<size_t>(64) * 48 * 3, 0);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<uint8_t>((y * 64 + x + c) % 256);

  Tensor t = preprocess(img);
  REQUIRE(t.shape() == std::vector<int64_t>{3, kInputSize, kInputSize});
  for (int64_t i = 0; i < t.numel(); ++i) {
    CHECK(t.data()[i] >= -1.0f);
    CHECK(t.data()[i] <= 1.0f);
  }

  // Exact mid-gray via the float path: 0.5 -> 0.
  Tensor gray({3, 10, 10}, 0.5f);
  Tensor z = preprocess_chw(gray);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(z.data()[i] == doctest::Approx(0.0f));
}

TEST_CASE("png round trip preserves bytes") {
  RawImage img;
  img.width = 31;
  img.height = 17;
  img.pixels.resize(static_cast<size_t>(31) * 17 * 3);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<uint8_t>(i * 37 % 251);

  auto path = std::filesystem::temp_directory_path() / "affbench_roundtrip.png";
  save_png(path.string(), img);
  RawImage back = load_image(path.string());
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  CHECK(back.pixels == img.pixels);
  std::filesystem::remove(path);
}

TEST_CASE("load_image throws on a missing file") {
  CHECK_THROWS(load_image("/nonexistent/nope.png"));
}
