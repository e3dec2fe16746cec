#include "lcr/edge_prompt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "lcr/ops.hpp"

namespace lcr {

Image to_grayscale(const Image& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) {
    throw DimensionError("to_grayscale expects 1 or 3 channels, got " +
                         std::to_string(image.channels));
  }
  Image gray(1, image.height, image.width);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      gray.at(0, y, x) = 0.299 * image.at(0, y, x) + 0.587 * image.at(1, y, x) + 0.114 * image.at(2, y, x);
  return gray;
}

Image quantize_8bit(const Image& gray) {
  Image out = gray;
  for (double& p : out.pixels) p = std::clamp(std::round(p * 255.0), 0.0, 255.0);
  return out;
}

std::size_t EdgeMap::count() const {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
}

std::size_t otsu_threshold(std::span<const std::uint64_t> histogram) {
  std::uint64_t total = 0, weighted = 0;
  for (std::size_t i = 0; i < histogram.size(); ++i) {
    total += histogram[i];
    weighted += i * histogram[i];
  }
  if (total == 0) throw std::invalid_argument("otsu_threshold: empty histogram");

  const double n = static_cast<double>(total);
  std::uint64_t count0 = 0, sum0 = 0;
  std::size_t best = 0;
  double best_var = -1.0;
  for (std::size_t t = 0; t < histogram.size(); ++t) {
    if (t > 0) {
      count0 += histogram[t - 1];
      sum0 += (t - 1) * histogram[t - 1];
    }
    const std::uint64_t count1 = total - count0, sum1 = weighted - sum0;
    double var = 0.0;
    if (count0 > 0 && count1 > 0) {
      const double w0 = static_cast<double>(count0) / n;
      const double w1 = static_cast<double>(count1) / n;
      const double mu0 = static_cast<double>(sum0) / static_cast<double>(count0);
      const double mu1 = static_cast<double>(sum1) / static_cast<double>(count1);
      var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    }
    if (var > best_var) {
      best_var = var;
      best = t;
    }
  }
  return best;
}

namespace {

constexpr int kGauss[5][5] = {{2, 4, 5, 4, 2},
                              {4, 9, 12, 9, 4},
                              {5, 12, 15, 12, 5},
                              {4, 9, 12, 9, 4},
                              {2, 4, 5, 4, 2}};
constexpr double kGaussNorm = 159.0;

std::size_t clamp_index(long i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(n) - 1));
}

}  // namespace

GradientField image_gradients(const Image& gray) {
  if (gray.channels != 1) {
    throw DimensionError("edge extraction needs a grayscale image, got " +
                         std::to_string(gray.channels) + " channels");
  }
  const std::size_t h = gray.height, w = gray.width;
  // unnormalized smoothing keeps integer inputs exact
  std::vector<double> smooth(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx)
          acc += kGauss[dy + 2][dx + 2] *
                 gray.at(0, clamp_index(static_cast<long>(y) + dy, h), clamp_index(static_cast<long>(x) + dx, w));
      smooth[y * w + x] = acc;
    }

  GradientField f;
  f.height = h;
  f.width = w;
  f.magnitude.assign(h * w, 0.0);
  f.direction.assign(h * w, 0);
  auto s = [&](long y, long x) { return smooth[clamp_index(y, h) * w + clamp_index(x, w)]; };
  for (std::size_t yy = 0; yy < h; ++yy)
    for (std::size_t xx = 0; xx < w; ++xx) {
      const long y = static_cast<long>(yy), x = static_cast<long>(xx);
      const double gx = (s(y - 1, x + 1) + 2 * s(y, x + 1) + s(y + 1, x + 1)) -
                        (s(y - 1, x - 1) + 2 * s(y, x - 1) + s(y + 1, x - 1));
      const double gy = (s(y + 1, x - 1) + 2 * s(y + 1, x) + s(y + 1, x + 1)) -
                        (s(y - 1, x - 1) + 2 * s(y - 1, x) + s(y - 1, x + 1));
      f.magnitude[yy * w + xx] = std::sqrt(gx * gx + gy * gy) / kGaussNorm;
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      std::uint8_t dir = 0;
      if (angle >= 22.5 && angle < 67.5) dir = 1;
      else if (angle >= 67.5 && angle < 112.5) dir = 2;
      else if (angle >= 112.5 && angle < 157.5) dir = 3;
      f.direction[yy * w + xx] = dir;
    }
  return f;
}

Histogram256 magnitude_histogram(const GradientField& field) {
  Histogram256 hist{};
  const double max_mag = field.magnitude.empty()
                             ? 0.0
                             : *std::max_element(field.magnitude.begin(), field.magnitude.end());
  for (double m : field.magnitude) {
    std::size_t bin = 0;
    if (max_mag > 0.0) bin = std::min<std::size_t>(255, static_cast<std::size_t>(m / max_mag * 256.0));
    ++hist[bin];
  }
  return hist;
}

std::vector<std::uint8_t> non_max_suppression(const GradientField& field) {
  const std::size_t h = field.height, w = field.width;
  std::vector<std::uint8_t> keep(h * w, 0);
  auto mag = [&](long y, long x) -> double {
    if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
    return field.magnitude[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  // offset toward the "after" neighbor for each direction bin (dy, dx)
  constexpr int kStep[4][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}};
  for (std::size_t yy = 0; yy < h; ++yy)
    for (std::size_t xx = 0; xx < w; ++xx) {
      const long y = static_cast<long>(yy), x = static_cast<long>(xx);
      const double m = field.magnitude[yy * w + xx];
      if (m <= 0.0) continue;
      const int* d = kStep[field.direction[yy * w + xx]];
      const double before = mag(y - d[0], x - d[1]);
      const double after = mag(y + d[0], x + d[1]);
      if (m > before && m >= after) keep[yy * w + xx] = 1;
    }
  return keep;
}

namespace {

EdgeMap hysteresis(const GradientField& field, const std::vector<std::uint8_t>& maxima, double low,
                   double high) {
  const std::size_t h = field.height, w = field.width;
  EdgeMap edges;
  edges.height = h;
  edges.width = w;
  edges.pixels.assign(h * w, 0);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (maxima[i] && field.magnitude[i] >= high) {
      edges.pixels[i] = 1;
      stack.push_back(i);
    }
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const long y = static_cast<long>(i / w), x = static_cast<long>(i % w);
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long ny = y + dy, nx = x + dx;
        if ((dy == 0 && dx == 0) || ny < 0 || nx < 0 || ny >= static_cast<long>(h) ||
            nx >= static_cast<long>(w))
          continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
        if (!edges.pixels[j] && maxima[j] && field.magnitude[j] >= low) {
          edges.pixels[j] = 1;
          stack.push_back(j);
        }
      }
  }
  return edges;
}

}  // namespace

EdgeMap canny(const Image& gray, double low, double high) {
  if (!(low >= 0.0) || !(high >= low)) {
    throw std::invalid_argument("canny: thresholds must satisfy high >= low >= 0");
  }
  const GradientField field = image_gradients(gray);
  return hysteresis(field, non_max_suppression(field), low, high);
}

CannyThresholds otsu_thresholds(const GradientField& field) {
  const Histogram256 hist = magnitude_histogram(field);
  const double max_mag = *std::max_element(field.magnitude.begin(), field.magnitude.end());
  CannyThresholds t;
  t.high = static_cast<double>(otsu_threshold(hist)) * max_mag / 256.0;
  t.low = t.high / 2.0;
  return t;
}

EdgeMap adaptive_canny(const Image& frame, std::size_t frame_id) {
  const Image gray = quantize_8bit(to_grayscale(frame));
  const GradientField field = image_gradients(gray);
  const CannyThresholds t = otsu_thresholds(field);
  EdgeMap edges = hysteresis(field, non_max_suppression(field), t.low, t.high);
  edges.frame_id = frame_id;
  return edges;
}

void write_pgm(const EdgeMap& edges, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "P5\n" << edges.width << ' ' << edges.height << "\n255\n";
  for (std::uint8_t p : edges.pixels) out.put(static_cast<char>(p ? 255 : 0));
}

ZeroEmbed ZeroEmbed::create(std::size_t patch, std::size_t channels) {
  ZeroEmbed z;
  z.patch = patch;
  z.channels = channels;
  z.weight = Tensor::zeros({patch * patch, channels}, true);
  z.bias = Tensor::zeros({channels}, true);
  return z;
}

std::vector<NamedParam> ZeroEmbed::parameters(const std::string& prefix) const {
  return {{prefix + "weight", weight}, {prefix + "bias", bias}};
}

Tensor edge_maps_tensor(std::span<const EdgeMap> maps) {
  if (maps.empty()) throw DimensionError("edge_maps_tensor: no maps");
  const std::size_t h = maps.front().height, w = maps.front().width;
  Tensor out({maps.size(), 1, h, w});
  auto od = out.mutable_data();
  for (std::size_t b = 0; b < maps.size(); ++b) {
    if (maps[b].height != h || maps[b].width != w) {
      throw DimensionError("edge_maps_tensor: maps of different sizes");
    }
    for (std::size_t i = 0; i < h * w; ++i) od[b * h * w + i] = maps[b].pixels[i];
  }
  return out;
}

Tensor embed_edges(const Tensor& edge_maps, const ZeroEmbed& embed, const GridGeometry& geom) {
  const Tensor patches = patchify(edge_maps, embed.patch);
  geom.check(patches.extent(-2) + (geom.has_cls ? 1 : 0));
  const Tensor tokens = matmul(patches, embed.weight) + embed.bias;
  if (!geom.has_cls) return tokens;
  return concat({tokens, mean_axis(tokens, -2)}, -2);
}

Tensor edge_prompt(const Image& frame, const ZeroEmbed& embed, const GridGeometry& geom) {
  const EdgeMap edges = adaptive_canny(frame);
  const Tensor maps = edge_maps_tensor(std::span<const EdgeMap>(&edges, 1));
  const Tensor tokens = embed_edges(maps, embed, geom);
  return reshape(tokens, {tokens.extent(-2), tokens.extent(-1)});
}

}  // namespace lcr
