#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lcr/grad_check.hpp"
#include "lcr/tensor.hpp"
#include "lcr/token_shift.hpp"

namespace lcr {

// Channel-major image with double pixels.
struct Image {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
};

// Luma 0.299 R + 0.587 G + 0.114 B. Single-channel images are copied.
Image to_grayscale(const Image& image);

// Grayscale scaled by 255 and rounded to integer levels in [0, 255].
Image quantize_8bit(const Image& gray);

struct EdgeMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // 1 = edge
  std::size_t frame_id = 0;

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::size_t count() const;
};

using Histogram256 = std::array<std::uint64_t, 256>;

// Bin t maximizing the between-class variance w0 * w1 * (mu0 - mu1)^2 of the
// split {bins < t} / {bins >= t}; ties go to the lowest t.
std::size_t otsu_threshold(std::span<const std::uint64_t> histogram);

// Smoothed Sobel gradient of a grayscale image.
struct GradientField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> magnitude;
  std::vector<std::uint8_t> direction;  // 0: 0 deg, 1: 45, 2: 90, 3: 135
};

// 5x5 Gaussian (sigma 1.4, integer kernel / 159) then 3x3 Sobel; borders
// replicate the nearest pixel.
GradientField image_gradients(const Image& gray);

// Magnitudes binned over [0, max magnitude] into 256 bins.
Histogram256 magnitude_histogram(const GradientField& field);

// Non-maximum suppression along the quantized gradient direction.
std::vector<std::uint8_t> non_max_suppression(const GradientField& field);

// Double-threshold hysteresis: strong >= high seeds, weak in [low, high)
// survive when 8-connected to a strong pixel.
EdgeMap canny(const Image& gray, double low, double high);

struct CannyThresholds {
  double low = 0.0;
  double high = 0.0;
};

// high = Otsu threshold of the magnitude histogram, low = high / 2.
CannyThresholds otsu_thresholds(const GradientField& field);

// RGB or gray frame -> luma -> 8-bit levels -> Canny with Otsu thresholds.
EdgeMap adaptive_canny(const Image& frame, std::size_t frame_id = 0);

// Binary edge map written as a binary portable graymap (0 / 255).
void write_pgm(const EdgeMap& edges, const std::string& path);

// Zero-initialized patch convolution (kernel = stride = patch) over the
// single-channel edge map.
struct ZeroEmbed {
  std::size_t patch = 8;
  std::size_t channels = 64;
  Tensor weight;  // [patch * patch, channels]
  Tensor bias;    // [channels]

  static ZeroEmbed create(std::size_t patch, std::size_t channels);
  std::vector<NamedParam> parameters(const std::string& prefix) const;
};

// Stacks edge maps of one frame per batch element into [B, 1, H, W].
Tensor edge_maps_tensor(std::span<const EdgeMap> maps);

// Edge tokens [B, L + 1, C]: zero-embedded patches with the CLS slot set to
// the mean of the patch tokens.
Tensor embed_edges(const Tensor& edge_maps, const ZeroEmbed& embed, const GridGeometry& geom);

// adaptive_canny + embed_edges for a single frame, returns [L + 1, C].
Tensor edge_prompt(const Image& frame, const ZeroEmbed& embed, const GridGeometry& geom);

}  // namespace lcr
