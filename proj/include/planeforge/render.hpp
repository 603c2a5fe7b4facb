#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "planeforge/evaluate.hpp"
#include "planeforge/formalize.hpp"
#include "planeforge/net.hpp"

namespace pf::render {

using Rgb = std::array<std::uint8_t, 3>;

// Paper-style pastel palette for regular colors plus a distinct red for the
// bonus color; colors beyond the fixed list are generated on a golden-ratio
// hue wheel, deterministically.
std::vector<Rgb> default_palette(int regular_colors, bool with_bonus);

struct RasterSpec {
  // Axis-aligned window in the plane. For 3D colorings, the window is mapped
  // through slice_origin + u * slice_u + v * slice_v.
  double x0 = -3.0, y0 = -3.0, x1 = 3.0, y1 = 3.0;
  int width = 1024;
  int height = 1024;
  std::vector<Rgb> palette;  // empty = default for the coloring's arity
  bool shade_by_confidence = false;
  std::optional<geom::Vec> slice_origin;
  std::optional<geom::Vec> slice_u;
  std::optional<geom::Vec> slice_v;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Rgb pixel(int x, int y) const {
    std::size_t o = 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                         static_cast<std::size_t>(x));
    return {rgb[o], rgb[o + 1], rgb[o + 2]};
  }
};

// Pixel centers colored by argmax of the coloring (no bonus context needed;
// the coloring's last component is treated as bonus when `bonus` is set).
Image rasterize_coloring(const net::ColoringFunction& coloring,
                         const RasterSpec& spec, bool bonus = false);

// Piecewise-constant render of a cell coloring's periodic extension.
Image rasterize_cells(const formalize::CellColoring& coloring,
                      const RasterSpec& spec);

// Linear heat colormap over [0, max rate]; one pixel per grid point scaled
// to the requested resolution (nearest grid point).
Image render_heatmap(const eval::SweepResult& sweep, int width, int height);

void write_png(const Image& image, const std::string& path);

// JSON sidecar describing a render (window, resolution, palette, source id).
void write_sidecar(const RasterSpec& spec, const std::string& source_id,
                   const std::string& path);

// FNV-1a of a file's bytes, as a stable source identifier for sidecars.
std::string file_hash_hex(const std::string& path);

}  // namespace pf::render
