#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "support/logistic.hpp"
#include "uattr/cli/datasets.hpp"

using namespace uattr;
using namespace uattr::cli;

namespace {

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::filesystem::path write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  auto p = std::filesystem::temp_directory_path() / ("uattr_idx_" + name);
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return p;
}

// Three 2x2 images with pixel values 0..11 scaled by 20, labels 0, 2, 1.
std::vector<std::uint8_t> image_fixture() {
  std::vector<std::uint8_t> b;
  put_be32(b, 0x803);
  put_be32(b, 3);
  put_be32(b, 2);
  put_be32(b, 2);
  for (int i = 0; i < 12; ++i) b.push_back(static_cast<std::uint8_t>(20 * i));
  return b;
}

std::vector<std::uint8_t> label_fixture() {
  std::vector<std::uint8_t> b;
  put_be32(b, 0x801);
  put_be32(b, 3);
  for (std::uint8_t l : {0, 2, 1}) b.push_back(l);
  return b;
}

}  // namespace

TEST_CASE("idx ingestion") {
  const auto images = write_bytes("images", image_fixture());
  const auto labels = write_bytes("labels", label_fixture());

  SUBCASE("three-image fixture") {
    auto d = ingest_idx(images, labels);
    REQUIRE(d.size() == 3);
    CHECK(d.width == 2);
    CHECK(d.height == 2);
    CHECK(d.num_classes == 3);
    CHECK(d.labels == std::vector<int>{0, 2, 1});
    CHECK(d.images[1][0] == 80.0 / 255.0);
    CHECK(d.images[2][3] == 220.0 / 255.0);
  }
  SUBCASE("labels passed where images are expected") {
    try {
      ingest_idx(labels, labels);
      FAIL("expected an IdxError");
    } catch (const IdxError& e) {
      CHECK(std::string(e.what()).find("0x00000801") != std::string::npos);
    }
  }
  SUBCASE("dimension overflow") {
    std::vector<std::uint8_t> b;
    put_be32(b, 0x803);
    put_be32(b, 70000);
    put_be32(b, 70000);
    put_be32(b, 1);
    CHECK_THROWS_AS(parse_idx(b, kIdxImageMagic), IdxError);
  }
  SUBCASE("truncated payload") {
    auto b = image_fixture();
    b.pop_back();
    CHECK_THROWS_AS(parse_idx(b, kIdxImageMagic), IdxError);
  }
  SUBCASE("count mismatch") {
    auto b = label_fixture();
    b[7] = 2;
    b.pop_back();
    CHECK_THROWS_AS(ingest_idx(images, write_bytes("labels2", b)), IdxError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(read_idx("/nonexistent/file", kIdxImageMagic), IdxError); }
}

TEST_CASE("synthetic data") {
  SUBCASE("same seed, same bytes") {
    auto a = gen_synthetic(123, 50);
    auto b = gen_synthetic(123, 50);
    CHECK(a.labels == b.labels);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.images[i] == b.images[i]);
    auto c = gen_synthetic(124, 50);
    CHECK_FALSE(a.images[0] == c.images[0]);
  }
  SUBCASE("a single sample") {
    auto d = gen_synthetic(1, 1);
    CHECK(d.size() == 1);
    CHECK(d.pixel_count() == 256);
    CHECK_NOTHROW(d.validate());
  }
  SUBCASE("pixels in range and both classes present") {
    auto d = gen_synthetic(9, 200);
    int ones = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      ones += d.labels[i];
      for (double v : d.images[i].data()) CHECK((v >= 0.0 && v <= 1.0));
    }
    CHECK(ones > 60);
    CHECK(ones < 140);
  }
  SUBCASE("classes are linearly separable by a probe") {
    auto train = gen_synthetic(11, 500);
    auto val = gen_synthetic(12, 300, models::Split::Validation);
    auto probe = testing::fit_logistic(train, 300, 0.5);
    CHECK(testing::logistic_accuracy(probe, val) > 0.9);
  }
}
