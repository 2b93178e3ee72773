#include <doctest.h>

#include <cmath>

#include "oadp/geometry.hpp"
#include "support.hpp"

using namespace oadp;

namespace {

void check_inside_square(const Box& s, const ImageSize& img) {
  CHECK(std::abs(s.width() - s.height()) < 1e-9);
  CHECK(s.x1() >= 0.0);
  CHECK(s.y1() >= 0.0);
  CHECK(s.x2() <= static_cast<double>(img.width));
  CHECK(s.y2() <= static_cast<double>(img.height));
}

BinaryMask mask_for(const Box& p, const Box& square, std::size_t r, std::size_t patch) {
  const std::size_t g = r / patch;
  return patch_overlap_mask(p, square, r, patch, g * g + 1);
}

}  // namespace

TEST_CASE("iou") {
  const Box a(0, 0, 2, 2);
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box(5, 5, 6, 6)) == 0.0);
  CHECK(iou(a, Box(2, 0, 4, 2)) == 0.0);  // shared edge only
  CHECK(iou(a, Box(1, 0, 3, 2)) == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("transform_proposal examples") {
  const ImageSize img(100, 100);
  const Box centred(45.5, 48, 54.5, 52);  // w 9, h 4
  const Box s = transform_proposal(centred, 1.0, img);
  CHECK(s.width() == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(s.center_x() == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(s.center_y() == doctest::Approx(50.0).epsilon(1e-15));

  CHECK(transform_proposal(Box(0, 0, 4, 9), 1.0, img) == Box(0, 1.5, 6, 7.5));

  const Box big = transform_proposal(Box(20, 20, 30, 30), 1.5, img);
  CHECK(std::abs(big.width() - 12.247448713915890491) < 1e-12);
}

TEST_CASE("transform_proposal properties") {
  Rng rng(404);
  for (int trial = 0; trial < 2000; ++trial) {
    const ImageSize img(1 + rng.below(300), 1 + rng.below(300));
    const double w = static_cast<double>(img.width), h = static_cast<double>(img.height);
    const double x1 = rng.uniform(0, w * 0.95), y1 = rng.uniform(0, h * 0.95);
    const Box p(x1, y1, rng.uniform(x1 + 1e-3, w), rng.uniform(y1 + 1e-3, h));
    const double r = std::exp(rng.uniform(-2, 3));
    const Box s = transform_proposal(p, r, img);
    check_inside_square(s, img);
    const double want = std::min(r * p.area(), std::min(w, h) * std::min(w, h));
    CHECK(std::abs(s.area() - want) <= 1e-6 * want);
  }
}

TEST_CASE("transform_proposal is the identity on a centred square with r = 1") {
  const Box sq(10, 20, 30, 40);
  CHECK(transform_proposal(sq, 1.0, ImageSize(64, 64)) == sq);
}

TEST_CASE("transform_proposal clamps to the short side") {
  const Box s = transform_proposal(Box(0, 0, 50, 10), 4.0, ImageSize(60, 20));
  CHECK(s.width() == 20.0);
  check_inside_square(s, ImageSize(60, 20));
}

TEST_CASE("partition_blocks") {
  const auto one = partition_blocks(ImageSize(224, 224), 224);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == Box(0, 0, 224, 224));

  const auto two = partition_blocks(ImageSize(448, 224), 224);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == Box(0, 0, 224, 224));
  CHECK(two[1] == Box(224, 0, 448, 224));

  const auto six = partition_blocks(ImageSize(672, 448), 224);
  REQUIRE(six.size() == 6);
  double area = 0.0;
  for (std::size_t i = 0; i < six.size(); ++i) {
    area += six[i].area();
    for (std::size_t j = i + 1; j < six.size(); ++j) CHECK(iou(six[i], six[j]) == 0.0);
  }
  CHECK(area == 672.0 * 448.0);

  try {
    partition_blocks(ImageSize(500, 224), 224);
    FAIL("expected a partition error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kPartition);
    CHECK(std::string(e.what()).find("448x224") != std::string::npos);
  }
}

TEST_CASE("patch_overlap_mask") {
  const Box p(3, 5, 19, 21);
  const BinaryMask full = mask_for(p, p, 32, 8);
  CHECK(full.cols() == 17);
  for (std::size_t i = 0; i < 16; ++i) CHECK(full(0, i));
  CHECK_FALSE(full(0, 16));

  // 2x2 grid over a 16 px crop; the proposal is the top-left quadrant.
  const Box square(0, 0, 16, 16);
  const BinaryMask tl = mask_for(Box(0, 0, 8, 8), square, 16, 8);
  CHECK(tl == [] {
    BinaryMask m(1, 5);
    m.set(0, 0, true);
    return m;
  }());

  // Thin vertical strip down the left column.
  const BinaryMask strip = mask_for(Box(2, 1, 3, 15), square, 16, 8);
  for (std::size_t i = 0; i < 5; ++i) CHECK(strip(0, i) == (i == 0 || i == 2));

  // Touching a cell boundary does not count as overlap.
  const BinaryMask edge = mask_for(Box(0, 0, 8, 16), square, 16, 8);
  for (std::size_t i = 0; i < 5; ++i) CHECK(edge(0, i) == (i == 0 || i == 2));

  CHECK_THROWS_AS(patch_overlap_mask(p, p, 32, 8, 16), Error);
}

TEST_CASE("patch_overlap_mask against a per-cell intersection oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const ImageSize img(200, 150);
    const double x1 = rng.uniform(0, 180), y1 = rng.uniform(0, 130);
    const Box p(x1, y1, x1 + rng.uniform(1, 20), y1 + rng.uniform(1, 20));
    const Box s = transform_proposal(p, rng.uniform(1, 6), img);
    const std::size_t r = 32, patch = 8, g = 4;
    const BinaryMask m = mask_for(p, s, r, patch);
    const double scale = r / s.width();
    const double mx1 = (p.x1() - s.x1()) * scale, mx2 = (p.x2() - s.x1()) * scale;
    const double my1 = (p.y1() - s.y1()) * scale, my2 = (p.y2() - s.y1()) * scale;
    for (std::size_t i = 0; i < g; ++i) {
      for (std::size_t j = 0; j < g; ++j) {
        const double cx1 = j * 8.0, cy1 = i * 8.0;
        const double ox = std::min(mx2, cx1 + 8) - std::max(mx1, cx1);
        const double oy = std::min(my2, cy1 + 8) - std::max(my1, cy1);
        const bool want = ox > 1e-9 && oy > 1e-9;
        CHECK(m(0, i * g + j) == want);
      }
    }
    CHECK_FALSE(m(0, g * g));
  }
}

TEST_CASE("patch_overlap_mask is monotone in the proposal") {
  Rng rng(31);
  const Box square(10, 10, 74, 74);
  for (int trial = 0; trial < 300; ++trial) {
    const double x1 = rng.uniform(12, 60), y1 = rng.uniform(12, 60);
    const Box small(x1, y1, x1 + rng.uniform(0.5, 10), y1 + rng.uniform(0.5, 10));
    const Box large(small.x1() - rng.uniform(0, 2), small.y1() - rng.uniform(0, 2),
                    small.x2() + rng.uniform(0, 2), small.y2() + rng.uniform(0, 2));
    const BinaryMask a = mask_for(small, square, 32, 8), b = mask_for(large, square, 32, 8);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      if (a(0, i)) CHECK(b(0, i));
    }
  }
}

TEST_CASE("build_attention_mask") {
  BinaryMask m(1, 2);
  m.set(0, 0, true);
  const BinaryMask a = build_attention_mask(m);
  const bool want[3][3] = {{1, 1, 0}, {1, 1, 0}, {1, 0, 1}};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(a(i, j) == want[i][j]);
  }

  const BinaryMask none = build_attention_mask(BinaryMask(1, 4));
  for (std::size_t j = 0; j < 4; ++j) CHECK_FALSE(none(4, j));
  CHECK(none(4, 4));

  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    BinaryMask r(1, n);
    for (std::size_t i = 0; i + 1 < n; ++i) r.set(0, i, rng.unit() < 0.5);
    const BinaryMask full = build_attention_mask(r);
    REQUIRE(full.rows() == n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) CHECK(full(i, j));
      CHECK_FALSE(full(i, n));
      CHECK(full(n, i) == r(0, i));
    }
    CHECK(full(n, n));
  }
}
