#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "samnet/core/errors.hpp"
#include "samnet/core/tensor.hpp"
#include "samnet/minicog/scene.hpp"
#include "samnet/model/encoders.hpp"

namespace samnet::minicog {

/// One-hot attribute grid consumed by the frame encoder.
inline FrameGrid render_symbolic(const SceneGraph& scene, const Inventory& inv) {
  const std::size_t ch = 1 + inv.num_colors + inv.num_shapes;
  std::vector<std::uint8_t> cells(scene.height * scene.width * ch, 0);
  for (const auto& o : scene.objects) {
    auto* c = &cells[(o.row * scene.width + o.col) * ch];
    c[0] = 1;
    c[1 + o.color] = 1;
    c[1 + inv.num_colors + o.shape] = 1;
  }
  return FrameGrid(scene.height, scene.width, inv.num_colors, inv.num_shapes, std::move(cells));
}

/// Inverse of render_symbolic; objects come back in row-major cell order.
inline SceneGraph parse_symbolic(const FrameGrid& grid) {
  SceneGraph scene{grid.height(), grid.width(), {}};
  for (std::size_t r = 0; r < grid.height(); ++r)
    for (std::size_t c = 0; c < grid.width(); ++c)
      if (grid.occupied(r, c)) scene.objects.push_back({r, c, *grid.color(r, c), *grid.shape(r, c)});
  return scene;
}

struct RgbImage {
  std::size_t height = 0, width = 0;  // in pixels
  std::vector<std::uint8_t> pixels;   // height * width * 3

  std::array<std::uint8_t, 3> at(std::size_t y, std::size_t x) const {
    const auto* p = &pixels[(y * width + x) * 3];
    return {p[0], p[1], p[2]};
  }

  /// {height*width, 3}, scaled to [0,1].
  template <class T>
  Tensor<T> to_tensor() const {
    nd::Buffer<T> data(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) data[i] = static_cast<T>(pixels[i]) / T(255);
    return Tensor<T>({height * width, 3}, std::move(data));
  }
};

inline constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette = {{
    {128, 128, 128},  // gray
    {40, 80, 220},    // blue
    {130, 80, 40},    // brown
    {230, 210, 40},   // yellow
    {210, 40, 40},    // red
    {40, 170, 60},    // green
    {140, 60, 180},   // purple
    {40, 200, 210},   // cyan
}};

namespace detail {

/// Whether pixel (y, x) of a p x p cell is inked for a shape.
inline bool glyph(std::size_t shape, std::size_t y, std::size_t x, std::size_t p) {
  const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(p) - 0.5;
  const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(p) - 0.5;
  const double r2 = u * u + v * v;
  switch (shape) {
    case 0: return std::abs(u) < 0.4 && std::abs(v) < 0.4;                        // cube: square
    case 1: return std::abs(u) < 0.25 && std::abs(v) < 0.45;                      // cylinder: tall bar
    case 2: return r2 < 0.16;                                                     // sphere: disc
    case 3: return v > -0.45 && std::abs(u) < (v + 0.45) * 0.45;                  // cone: triangle
    case 4: return v > -0.45 && std::abs(u) < (v + 0.45) * 0.45 && v < 0.2;       // pyramid: truncated
    case 5: return r2 < 0.2 && r2 > 0.06;                                         // torus: ring
    default: return false;
  }
}

}  // namespace detail

/// p x p colored glyph per object on a black background.
inline RgbImage render_rgb(const SceneGraph& scene, std::size_t p = 8) {
  if (p < 2) throw InputError("glyph size must be at least 2 pixels");
  RgbImage img{scene.height * p, scene.width * p, {}};
  img.pixels.assign(img.height * img.width * 3, 0);
  for (const auto& o : scene.objects) {
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) {
        if (!detail::glyph(o.shape, y, x, p)) continue;
        auto* px = &img.pixels[((o.row * p + y) * img.width + o.col * p + x) * 3];
        const auto& rgb = kPalette.at(o.color);
        px[0] = rgb[0];
        px[1] = rgb[1];
        px[2] = rgb[2];
      }
    }
  }
  return img;
}

}  // namespace samnet::minicog
