#include "helpers.hpp"
#include "sasreid/augment.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace sasreid;
using namespace sasreid::augment;

namespace {

// Independent RGB -> HSV -> RGB hue rotation written from the textbook formulas.
Rgb rotate_hue_oracle(const Rgb& c, double phi) {
  const double mx = std::max({c[0], c[1], c[2]});
  const double mn = std::min({c[0], c[1], c[2]});
  const double delta = mx - mn;
  double h = 0;
  if (delta > 0) {
    if (mx == c[0]) {
      h = std::fmod((c[1] - c[2]) / delta, 6.0);
    } else if (mx == c[1]) {
      h = (c[2] - c[0]) / delta + 2.0;
    } else {
      h = (c[0] - c[1]) / delta + 4.0;
    }
    h /= 6.0;
  }
  h = h + phi;
  h -= std::floor(h);
  const double s = mx > 0 ? delta / mx : 0.0;
  const double v = mx;
  const double hh = h * 6.0;
  const double chroma = v * s;
  const double x = chroma * (1 - std::abs(std::fmod(hh, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hh) % 6) {
    case 0: r = chroma; g = x; break;
    case 1: r = x; g = chroma; break;
    case 2: g = chroma; b = x; break;
    case 3: g = x; b = chroma; break;
    case 4: r = x; b = chroma; break;
    default: r = chroma; b = x; break;
  }
  const double m = v - chroma;
  return {r + m, g + m, b + m};
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a.data[i] - b.data[i])));
  return m;
}

}  // namespace

TEST_CASE("sample_jitter edge cases") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) CHECK_FALSE(sample_jitter(rng, 0.3, 0.0).applied);
  for (int i = 0; i < 100; ++i) {
    const auto p = sample_jitter(rng, 0.0, 1.0);
    CHECK(p.applied);
    CHECK(p.phi == 0.0);
  }
  CHECK_THROWS(sample_jitter(rng, 0.6, 0.5));
  CHECK_THROWS(sample_jitter(rng, -0.1, 0.5));
  CHECK_THROWS(sample_jitter(rng, 0.3, 1.5));
}

TEST_CASE("sample_jitter rate and uniformity at h=0.3, p_c=0.5") {
  Rng rng(7);
  const int n = 10000;
  int applied = 0;
  std::vector<double> phis;
  for (int i = 0; i < n; ++i) {
    const auto p = sample_jitter(rng, 0.3, 0.5);
    if (p.applied) ++applied;
    phis.push_back(p.phi);
    CHECK(std::abs(p.phi) <= 0.3);
  }
  const double rate = static_cast<double>(applied) / n;
  CHECK(rate >= 0.47);
  CHECK(rate <= 0.53);
  // Kolmogorov-Smirnov against U(-0.3, 0.3); 1.95/sqrt(n) is the 0.1% critical value.
  std::sort(phis.begin(), phis.end());
  double d = 0;
  for (int i = 0; i < n; ++i) {
    const double cdf = (phis[i] + 0.3) / 0.6;
    d = std::max({d, std::abs(cdf - static_cast<double>(i) / n), std::abs(cdf - static_cast<double>(i + 1) / n)});
  }
  CHECK(d < 1.95 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("adjust_hue") {
  Rng rng(3);
  const Image img = testing::random_image(rng, 8, 6);

  SUBCASE("phi = 0 is the identity") { CHECK(max_abs_diff(adjust_hue(img, 0.0), img) < 1e-6); }

  SUBCASE("red rotated by a third is green") {
    Image red(1, 1);
    red.at(0, 0, 0) = 1.0f;
    const Image out = adjust_hue(red, 1.0 / 3.0);
    CHECK(out.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(out.at(0, 0, 1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out.at(0, 0, 2) == doctest::Approx(0.0).epsilon(1e-6));
  }

  SUBCASE("grayscale is unchanged") {
    Image gray(4, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        for (int c = 0; c < 3; ++c) gray.at(y, x, c) = static_cast<float>((y * 4 + x) / 16.0);
    CHECK(max_abs_diff(adjust_hue(gray, 0.37), gray) < 1e-6);
  }

  SUBCASE("matches an independent HSV oracle") {
    const Image out = adjust_hue(img, 0.2);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const Rgb want = rotate_hue_oracle({img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)}, 0.2);
        for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == doctest::Approx(want[static_cast<std::size_t>(c)]).epsilon(1e-5));
      }
    }
  }

  SUBCASE("rotations compose modulo one") {
    for (auto [a, b] : {std::pair{0.2, 0.5}, std::pair{-0.3, 0.45}, std::pair{0.7, 0.6}}) {
      const double sum = std::fmod(a + b + 2.0, 1.0);
      CHECK(max_abs_diff(adjust_hue(adjust_hue(img, a), b), adjust_hue(img, sum)) < 1e-5);
    }
  }

  SUBCASE("shape and range preserved") {
    const Image out = adjust_hue(img, -0.27);
    CHECK(out.height == img.height);
    CHECK(out.width == img.width);
    for (float v : out.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("apply_tracklet is video-consistent") {
  Rng rng(5);
  std::vector<Image> frames;
  for (int i = 0; i < 8; ++i) frames.push_back(testing::random_image(rng, 6, 4));

  SUBCASE("not applied returns the input unchanged") {
    CHECK(apply_tracklet(frames, {0.25, false}) == frames);
  }
  SUBCASE("identical frames stay identical") {
    std::vector<Image> same(8, frames[0]);
    const auto out = apply_tracklet(same, {0.15, true});
    for (const auto& f : out) CHECK(f == out[0]);
  }
  SUBCASE("every frame matches a per-frame recomputation") {
    const auto out = apply_tracklet(frames, {0.2, true});
    for (std::size_t i = 0; i < frames.size(); ++i) CHECK(out[i] == adjust_hue(frames[i], 0.2));
  }
  SUBCASE("duplicated frame at different positions receives one phi") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Image> seq = frames;
      seq[6] = seq[1];
      const auto p = sample_jitter(rng, 0.3, 1.0);
      const auto out = apply_tracklet(seq, p);
      CHECK(out[6] == out[1]);
    }
  }
}

TEST_CASE("flip_and_erase") {
  Rng rng(11);
  std::vector<Image> frames;
  for (int i = 0; i < 4; ++i) frames.push_back(testing::random_image(rng, 10, 6));

  SUBCASE("hflip is an involution") {
    for (const auto& f : frames) CHECK(hflip(hflip(f)) == f);
  }
  SUBCASE("no erasing leaves frames unchanged up to one flip decision") {
    FlipEraseOptions opts;
    opts.erase_probability = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const auto out = flip_and_erase(frames, rng, opts);
      const bool flipped = out[0] != frames[0];
      for (std::size_t i = 0; i < frames.size(); ++i) CHECK(out[i] == (flipped ? hflip(frames[i]) : frames[i]));
    }
  }
  SUBCASE("flip decision is shared by duplicated frames") {
    FlipEraseOptions opts;
    opts.erase_probability = 0.0;
    std::vector<Image> seq{frames[0], frames[1], frames[0]};
    for (int trial = 0; trial < 20; ++trial) {
      const auto out = flip_and_erase(seq, rng, opts);
      CHECK(out[0] == out[2]);
    }
  }
  SUBCASE("erase rectangles stay inside the image with the requested area") {
    for (int i = 0; i < 10000; ++i) {
      const auto r = sample_erase_rect(rng, 56, 28, 0.02, 0.2);
      CHECK(r.top >= 0);
      CHECK(r.left >= 0);
      CHECK(r.height >= 1);
      CHECK(r.width >= 1);
      CHECK(r.top + r.height <= 56);
      CHECK(r.left + r.width <= 28);
    }
  }
  SUBCASE("erased pixels take the fill colour") {
    FlipEraseOptions opts;
    opts.flip_probability = 0.0;
    opts.erase_probability = 1.0;
    opts.fill = {0.25, 0.5, 0.75};
    const auto out = flip_and_erase(frames, rng, opts);
    for (std::size_t i = 0; i < frames.size(); ++i) {
      int changed = 0;
      for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 6; ++x) {
          if (out[i].at(y, x, 0) != frames[i].at(y, x, 0)) {
            ++changed;
            CHECK(out[i].at(y, x, 0) == doctest::Approx(0.25));
            CHECK(out[i].at(y, x, 2) == doctest::Approx(0.75));
          }
        }
      }
      CHECK(changed > 0);
      CHECK(out[i].height == 10);
    }
  }
}

TEST_CASE("mean_color averages every pixel") {
  Image a(2, 2, 0.2f), b(2, 2, 0.6f);
  const Rgb m = mean_color({{a}, {b, b, b}});
  CHECK(m[0] == doctest::Approx((0.2 + 3 * 0.6) / 4));
}
