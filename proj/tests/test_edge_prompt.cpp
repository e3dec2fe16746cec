#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "lcr/edge_prompt.hpp"
#include "lcr/grad_check.hpp"
#include "lcr/ops.hpp"
#include "test_util.hpp"

using namespace lcr;
using testutil::rand_tensor;

namespace {

double between_class_variance(const Histogram256& h, std::size_t t) {
  double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
  for (std::size_t i = 0; i < 256; ++i) {
    const double c = static_cast<double>(h[i]);
    if (i < t) n0 += c, s0 += c * static_cast<double>(i);
    else n1 += c, s1 += c * static_cast<double>(i);
  }
  if (n0 == 0 || n1 == 0) return 0.0;
  const double n = n0 + n1;
  return (n0 / n) * (n1 / n) * std::pow(s0 / n0 - s1 / n1, 2);
}

Image gray_image(std::size_t h, std::size_t w, double fill = 0.0) { return Image(1, h, w, fill); }

Image filled_rect(std::size_t size, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1) {
  Image img = gray_image(size, size, 40.0);
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) img.at(0, y, x) = 200.0;
  return img;
}

// Literal Gaussian / Sobel with normalized weights and replicated borders.
std::vector<double> reference_magnitude(const Image& g) {
  const double gauss2[5][5] = {{2, 4, 5, 4, 2}, {4, 9, 12, 9, 4}, {5, 12, 15, 12, 5}, {4, 9, 12, 9, 4}, {2, 4, 5, 4, 2}};
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  auto px = [&](long y, long x) {
    y = std::clamp(y, 0L, h - 1);
    x = std::clamp(x, 0L, w - 1);
    return g.at(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  std::vector<double> s(static_cast<std::size_t>(h * w));
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double acc = 0;
      for (long dy = -2; dy <= 2; ++dy)
        for (long dx = -2; dx <= 2; ++dx) acc += gauss2[dy + 2][dx + 2] / 159.0 * px(y + dy, x + dx);
      s[static_cast<std::size_t>(y * w + x)] = acc;
    }
  auto sp = [&](long y, long x) {
    return s[static_cast<std::size_t>(std::clamp(y, 0L, h - 1) * w + std::clamp(x, 0L, w - 1))];
  };
  const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  std::vector<double> mag(s.size());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double gx = 0, gy = 0;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          gx += kx[dy + 1][dx + 1] * sp(y + dy, x + dx);
          gy += kx[dx + 1][dy + 1] * sp(y + dy, x + dx);
        }
      mag[static_cast<std::size_t>(y * w + x)] = std::hypot(gx, gy);
    }
  return mag;
}

// Hysteresis by repeated sweeps until nothing changes.
std::vector<std::uint8_t> sweep_hysteresis(const GradientField& f, const std::vector<std::uint8_t>& maxima, double low,
                                           double high) {
  const long h = static_cast<long>(f.height), w = static_cast<long>(f.width);
  std::vector<std::uint8_t> on(maxima.size(), 0);
  for (std::size_t i = 0; i < on.size(); ++i) on[i] = maxima[i] && f.magnitude[i] >= high;
  for (bool changed = true; changed;) {
    changed = false;
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        const auto i = static_cast<std::size_t>(y * w + x);
        if (on[i] || !maxima[i] || f.magnitude[i] < low) continue;
        for (long dy = -1; dy <= 1 && !on[i]; ++dy)
          for (long dx = -1; dx <= 1; ++dx) {
            const long ny = y + dy, nx = x + dx;
            if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
            if (on[static_cast<std::size_t>(ny * w + nx)]) {
              on[i] = 1;
              changed = true;
              break;
            }
          }
      }
  }
  return on;
}

}  // namespace

TEST(Otsu, TwoSpikesSplitBetweenThem) {
  Histogram256 h{};
  h[10] = 500;
  h[200] = 300;
  // every t in (10, 200] separates the spikes; ties resolve low
  EXPECT_EQ(otsu_threshold(h), 11u);
}

TEST(Otsu, SingleLevelAndEmpty) {
  Histogram256 h{};
  h[77] = 1000;
  EXPECT_EQ(otsu_threshold(h), 0u);
  const Histogram256 empty{};
  EXPECT_THROW(otsu_threshold(empty), std::invalid_argument);
}

TEST(Otsu, ThreeLevelsHandWorked) {
  // levels 0, 1, 2 with counts 1, 1, 2: t = 2 gives w0 = 1/2, mu0 = 0.5,
  // mu1 = 2 -> 0.5625 beating t = 1 (0.25 * 0.75 * (0 - 5/3)^2 = 0.5208)
  Histogram256 h{};
  h[0] = 1;
  h[1] = 1;
  h[2] = 2;
  EXPECT_EQ(otsu_threshold(h), 2u);
}

TEST(Otsu, MaximizesVarianceOnRandomHistograms) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    Histogram256 h{};
    const std::size_t filled = 1 + rng.index(40);
    for (std::size_t i = 0; i < filled; ++i) h[rng.index(256)] += 1 + rng.index(500);
    const std::size_t got = otsu_threshold(h);
    double best = -1.0;
    std::size_t argbest = 0;
    for (std::size_t t = 0; t < 256; ++t) {
      const double v = between_class_variance(h, t);
      if (v > best * (1 + 1e-12) + 1e-300) best = v, argbest = t;
    }
    ASSERT_NEAR(between_class_variance(h, got), best, 1e-9 * std::max(1.0, best)) << "trial " << trial;
    ASSERT_LE(got, argbest) << "trial " << trial;
  }
}

TEST(Grayscale, LumaWeightsAndQuantization) {
  Image rgb(3, 1, 2);
  rgb.at(0, 0, 0) = 1.0;
  rgb.at(1, 0, 1) = 1.0;
  const Image g = to_grayscale(rgb);
  EXPECT_DOUBLE_EQ(g.at(0, 0, 0), 0.299);
  EXPECT_DOUBLE_EQ(g.at(0, 0, 1), 0.587);
  const Image q = quantize_8bit(g);
  EXPECT_EQ(q.at(0, 0, 0), 76.0);
  EXPECT_EQ(q.at(0, 0, 1), 150.0);
  Image out_of_range = gray_image(1, 2);
  out_of_range.pixels = {-0.3, 1.7};
  EXPECT_EQ(quantize_8bit(out_of_range).pixels, (std::vector<double>{0.0, 255.0}));
  EXPECT_THROW(to_grayscale(Image(2, 2, 2)), DimensionError);
}

TEST(Gradients, MatchLiteralConvolution) {
  Rng rng(2);
  Image img = gray_image(13, 17);
  for (double& p : img.pixels) p = std::round(rng.uniform(0, 255));
  const GradientField f = image_gradients(img);
  const std::vector<double> want = reference_magnitude(img);
  EXPECT_LT(testutil::max_abs_diff(f.magnitude, want), 1e-9);
}

TEST(Gradients, ConstantImageHasNoEdges) {
  const Image img = gray_image(16, 16, 123.0);
  for (double m : image_gradients(img).magnitude) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(adaptive_canny(img).count(), 0u);
}

TEST(Gradients, DirectionBins) {
  Image vertical_step = gray_image(9, 9), horizontal_step = gray_image(9, 9);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 9; ++x) {
      vertical_step.at(0, y, x) = x >= 5 ? 100.0 : 0.0;
      horizontal_step.at(0, y, x) = y >= 5 ? 100.0 : 0.0;
    }
  EXPECT_EQ(image_gradients(vertical_step).direction[4 * 9 + 4], 0);
  EXPECT_EQ(image_gradients(horizontal_step).direction[4 * 9 + 4], 2);
}

TEST(Canny, MatchesReferencePipelineStages) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Image img = gray_image(20, 24);
    // blocky image so there is structure to find
    const double a = rng.uniform(0, 255), b = rng.uniform(0, 255);
    const std::size_t cx = 4 + rng.index(16), cy = 4 + rng.index(12);
    for (std::size_t y = 0; y < 20; ++y)
      for (std::size_t x = 0; x < 24; ++x)
        img.at(0, y, x) = std::round((x < cx) == (y < cy) ? a : b) + std::round(rng.uniform(0, 8));
    const GradientField f = image_gradients(img);
    const CannyThresholds t = otsu_thresholds(f);
    const auto maxima = non_max_suppression(f);
    EXPECT_EQ(canny(img, t.low, t.high).pixels, sweep_hysteresis(f, maxima, t.low, t.high));
    EXPECT_DOUBLE_EQ(t.low, t.high / 2.0);
  }
}

TEST(Canny, NonMaximaAreSuppressedAcrossTheEdge) {
  Image img = gray_image(16, 16);
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 8; x < 16; ++x) img.at(0, y, x) = 200.0;
  const GradientField f = image_gradients(img);
  const auto keep = non_max_suppression(f);
  for (std::size_t y = 0; y < 16; ++y) {
    std::size_t kept = 0;
    for (std::size_t x = 0; x < 16; ++x) kept += keep[y * 16 + x];
    EXPECT_EQ(kept, 1u) << "row " << y;
  }
}

TEST(Canny, StepEdgeGivesOneVerticalLine) {
  Image img = gray_image(32, 32);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 16; x < 32; ++x) img.at(0, y, x) = 1.0;
  const EdgeMap e = adaptive_canny(img);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      if (x == 15 || x == 16) continue;
      EXPECT_EQ(e.at(y, x), 0) << y << "," << x;
    }
  for (std::size_t y = 0; y < 32; ++y) EXPECT_EQ(e.at(y, 15) + e.at(y, 16), 1) << "row " << y;
}

TEST(Canny, RectangleEdgesHugThePerimeter) {
  const Image img = filled_rect(40, 10, 12, 28, 30);
  const EdgeMap e = canny(img, 20.0, 40.0);
  std::size_t near = 0;
  for (std::size_t y = 0; y < 40; ++y)
    for (std::size_t x = 0; x < 40; ++x) {
      if (!e.at(y, x)) continue;
      const long dy = std::min(std::labs(static_cast<long>(y) - 10), std::labs(static_cast<long>(y) - 27));
      const long dx = std::min(std::labs(static_cast<long>(x) - 12), std::labs(static_cast<long>(x) - 29));
      const bool on_h = dy <= 1 && x + 1 >= 12 && x <= 30;
      const bool on_v = dx <= 1 && y + 1 >= 10 && y <= 28;
      EXPECT_TRUE(on_h || on_v) << y << "," << x;
      near += 1;
    }
  // perimeter of an 18x18 square is 68 pixels; corners may be rounded off
  EXPECT_GE(near, 60u);
  EXPECT_LE(near, 80u);
}

TEST(Canny, TranslationEquivariantAwayFromBorders) {
  // adaptive_canny takes intensities in [0, 1]
  Image a = filled_rect(48, 10, 12, 26, 30), b = filled_rect(48, 13, 17, 29, 35);
  for (double& p : a.pixels) p /= 255.0;
  for (double& p : b.pixels) p /= 255.0;
  const EdgeMap ea = adaptive_canny(a), eb = adaptive_canny(b);
  EXPECT_GT(ea.count(), 0u);
  EXPECT_EQ(ea.count(), eb.count());
  for (std::size_t y = 0; y + 3 < 48; ++y)
    for (std::size_t x = 0; x + 5 < 48; ++x) EXPECT_EQ(ea.at(y, x), eb.at(y + 3, x + 5));
}

TEST(Canny, InvalidThresholdsThrow) {
  EXPECT_THROW(canny(gray_image(4, 4), 10.0, 5.0), std::invalid_argument);
  EXPECT_THROW(canny(gray_image(4, 4), -1.0, 5.0), std::invalid_argument);
}

TEST(Canny, FrameIdIsRecorded) {
  EXPECT_EQ(adaptive_canny(gray_image(8, 8), 5).frame_id, 5u);
}

TEST(Pgm, WritesBinaryGraymap) {
  EdgeMap e;
  e.height = 2;
  e.width = 3;
  e.pixels = {1, 0, 0, 0, 1, 1};
  const auto path = std::filesystem::temp_directory_path() / "lcr_edge_test.pgm";
  write_pgm(e, path.string());
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(bytes.substr(0, 11), "P5\n3 2\n255\n");
  ASSERT_EQ(bytes.size(), 17u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 255);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 0);
  std::filesystem::remove(path);
}

TEST(ZeroEmbedTest, FreshEmbeddingIsZeroForAnyEdges) {
  const ZeroEmbed z = ZeroEmbed::create(4, 8);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    EdgeMap e;
    e.height = e.width = 16;
    e.pixels.resize(256);
    for (auto& p : e.pixels) p = rng.uniform() < 0.3 ? 1 : 0;
    const Tensor tokens = embed_edges(edge_maps_tensor(std::span<const EdgeMap>(&e, 1)), z, {4, 4, true});
    EXPECT_EQ(tokens.shape(), (Shape{1, 17, 8}));
    for (double v : tokens.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(ZeroEmbedTest, ProbeEmbeddingMatchesLoop) {
  Rng rng(5);
  ZeroEmbed z = ZeroEmbed::create(2, 3);
  testutil::randomize(z.weight, rng, -1, 1);
  testutil::randomize(z.bias, rng, -1, 1);
  EdgeMap e;
  e.height = 4;
  e.width = 6;
  e.pixels.resize(24);
  for (auto& p : e.pixels) p = rng.uniform() < 0.5 ? 1 : 0;
  const Tensor tokens = embed_edges(edge_maps_tensor(std::span<const EdgeMap>(&e, 1)), z, {2, 3, true});
  std::vector<double> cls(3, 0.0);
  for (std::size_t p = 0; p < 6; ++p) {
    const std::size_t py = p / 3, px = p % 3;
    for (std::size_t c = 0; c < 3; ++c) {
      double v = z.bias.at(c);
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) v += e.at(py * 2 + dy, px * 2 + dx) * z.weight.at((dy * 2 + dx) * 3 + c);
      EXPECT_NEAR(tokens.at(p * 3 + c), v, 1e-14);
      cls[c] += v / 6.0;
    }
  }
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(tokens.at(6 * 3 + c), cls[c], 1e-14);
}

TEST(ZeroEmbedTest, EdgePromptShapeAndGradients) {
  Rng rng(6);
  Image frame(3, 8, 8);
  for (double& p : frame.pixels) p = rng.uniform();
  const ZeroEmbed z = ZeroEmbed::create(4, 5);
  EXPECT_EQ(edge_prompt(frame, z, {2, 2, true}).shape(), (Shape{5, 5}));

  const Tensor maps = rand_tensor(rng, {2, 1, 8, 8}, 0, 1);
  const Tensor weights = rand_tensor(rng, {2, 5, 5});
  const auto report = grad_check([&] { return sum(embed_edges(maps, z, {2, 2, true}) * weights); },
                                 z.parameters("edge."));
  EXPECT_LT(report.max_rel_error, 1e-8) << report.describe();
  EXPECT_THROW(embed_edges(maps, z, {3, 3, true}), DimensionError);
}
