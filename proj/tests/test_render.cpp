#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "planeforge/evaluate.hpp"
#include "planeforge/formalize.hpp"
#include "planeforge/render.hpp"

namespace render = pf::render;
namespace eval = pf::eval;
namespace fz = pf::formalize;
namespace gm = pf::geom;
using pf::RngStream;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("constant coloring renders a single color; 1x1 is the window center") {
  eval::ReferenceColoringId id;
  id.name = "constant";
  id.colors = 3;
  auto coloring = eval::reference_coloring(id);
  render::RasterSpec spec;
  spec.width = 16;
  spec.height = 16;
  auto img = render::rasterize_coloring(*coloring, spec);
  auto first = img.pixel(0, 0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) CHECK(img.pixel(x, y) == first);

  spec.width = spec.height = 1;
  auto one = render::rasterize_coloring(*coloring, spec);
  CHECK(one.rgb.size() == 3);
}

TEST_CASE("palette shorter than the color count is rejected") {
  eval::ReferenceColoringId id;
  id.name = "constant";
  id.colors = 5;
  auto coloring = eval::reference_coloring(id);
  render::RasterSpec spec;
  spec.palette = render::default_palette(3, false);
  CHECK_THROWS_AS(render::rasterize_coloring(*coloring, spec), std::invalid_argument);
}

TEST_CASE("cell colorings round-trip through pixels") {
  gm::Lattice lat(gm::Vec(1.4, 0), gm::Vec(0.3, 1.2));
  fz::CellColoring cc{lat, {7, 5, 1}, {}, {1.0, 1.0}};
  RngStream rng(3);
  cc.colors.resize(cc.cell_count());
  for (auto& c : cc.colors) c = static_cast<std::uint8_t>(1 + static_cast<int>(rng.uniform() * 3));

  render::RasterSpec spec;
  spec.x0 = -2.0;
  spec.y0 = -2.0;
  spec.x1 = 2.0;
  spec.y1 = 2.0;
  spec.width = 128;
  spec.height = 128;
  spec.palette = render::default_palette(2, true);
  auto img = render::rasterize_cells(cc, spec);
  for (int py = 0; py < 128; py += 7)
    for (int px = 0; px < 128; px += 7) {
      double x = spec.x0 + (px + 0.5) * (spec.x1 - spec.x0) / spec.width;
      double y = spec.y1 - (py + 0.5) * (spec.y1 - spec.y0) / spec.height;
      int color = cc.color_at(gm::Vec(x, y));
      CHECK(img.pixel(px, py) == spec.palette[static_cast<std::size_t>(color - 1)]);
    }
}

TEST_CASE("png output is byte-identical across runs") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "pf_render_test";
  fs::create_directories(dir);
  eval::ReferenceColoringId id;
  id.name = "stripes";
  id.colors = 3;
  id.stripe_width = 0.8;
  auto coloring = eval::reference_coloring(id);
  render::RasterSpec spec;
  spec.width = 64;
  spec.height = 48;
  auto img = render::rasterize_coloring(*coloring, spec);
  render::write_png(img, (dir / "a.png").string());
  render::write_png(img, (dir / "b.png").string());
  auto a = read_file((dir / "a.png").string());
  auto b = read_file((dir / "b.png").string());
  CHECK(!a.empty());
  CHECK(a == b);
  // PNG signature.
  CHECK(static_cast<unsigned char>(a[0]) == 0x89);
  CHECK(a.substr(1, 3) == "PNG");
  fs::remove_all(dir);
}

TEST_CASE("heatmaps: constant sweeps are uniform, monotone grids monotone") {
  eval::SweepResult flat;
  flat.axis1 = {0.2, 0.4, 0.6, 0.8};
  flat.rates = {0.3, 0.3, 0.3, 0.3};
  auto img = render::render_heatmap(flat, 32, 8);
  auto first = img.pixel(0, 0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 32; ++x) CHECK(img.pixel(x, y) == first);

  eval::SweepResult mono;
  mono.axis1 = {0.2, 0.4, 0.6, 0.8};
  mono.rates = {0.1, 0.2, 0.5, 0.9};
  auto img2 = render::render_heatmap(mono, 4, 1);
  auto lum = [&](int x) {
    auto p = img2.pixel(x, 0);
    return static_cast<int>(p[0]) + p[1] + p[2];
  };
  CHECK(lum(0) < lum(1));
  CHECK(lum(1) < lum(2));
  CHECK(lum(2) < lum(3));

  // 1xN sweeps produce an N-wide strip.
  auto strip = render::render_heatmap(mono, 4, 1);
  CHECK(strip.width == 4);
  CHECK(strip.height == 1);
}

TEST_CASE("default palette keeps the bonus red distinct") {
  auto pal = render::default_palette(7, true);
  REQUIRE(pal.size() == 8);
  render::Rgb red{0xFF, 0xAD, 0xAD};
  CHECK(pal.back() == red);
  for (std::size_t i = 0; i + 1 < pal.size(); ++i) CHECK(pal[i] != red);

  // Wide palettes (3D, 15 colors) stay pairwise distinct.
  auto wide = render::default_palette(15, true);
  for (std::size_t i = 0; i < wide.size(); ++i)
    for (std::size_t j = i + 1; j < wide.size(); ++j) CHECK(wide[i] != wide[j]);
}
