#include "planeforge/render.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "planeforge/errors.hpp"

namespace pf::render {

namespace {

// Pastels from the constructions' figures; the red is reserved for the part
// of the plane that must be removed.
constexpr Rgb kBonusRed{0xFF, 0xAD, 0xAD};
constexpr Rgb kPastels[] = {
    {0xA0, 0xC4, 0xFF},  // blue
    {0xCA, 0xFF, 0xBF},  // green
    {0xFD, 0xFF, 0xB6},  // yellow
    {0xFF, 0xD6, 0xA5},  // orange
    {0x9B, 0xF6, 0xFF},  // turquoise
    {0xBD, 0xB2, 0xFF},  // purple
    {0xFF, 0xC6, 0xFF},  // pink
};

Rgb hsv_to_rgb(double h, double s, double v) {
  double c = v * s;
  double hp = h * 6.0;
  double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  double m = v - c;
  auto q = [&](double t) { return static_cast<std::uint8_t>(std::lround(255.0 * (t + m))); };
  return {q(r), q(g), q(b)};
}

}  // namespace

std::vector<Rgb> default_palette(int regular_colors, bool with_bonus) {
  std::vector<Rgb> out;
  for (int i = 0; i < regular_colors; ++i) {
    if (i < static_cast<int>(std::size(kPastels))) {
      out.push_back(kPastels[i]);
    } else {
      double h = std::fmod(0.61803398875 * (i - std::size(kPastels)) + 0.13, 1.0);
      out.push_back(hsv_to_rgb(h, 0.38, 0.97));
    }
  }
  if (with_bonus) out.push_back(kBonusRed);
  return out;
}

namespace {

geom::Vec window_point(const RasterSpec& spec, int px, int py, int dim) {
  double u = spec.x0 + (px + 0.5) * (spec.x1 - spec.x0) / spec.width;
  double v = spec.y1 - (py + 0.5) * (spec.y1 - spec.y0) / spec.height;
  if (spec.slice_origin) {
    geom::Vec p = *spec.slice_origin;
    p = p + u * (*spec.slice_u) + v * (*spec.slice_v);
    return p;
  }
  if (dim == 3)
    throw std::invalid_argument("render: 3D colorings need a slice (origin + two basis vectors)");
  return geom::Vec(u, v);
}

void check_spec(const RasterSpec& spec) {
  if (spec.width < 1 || spec.height < 1)
    throw std::invalid_argument("render: resolution must be at least 1x1");
  if (!(spec.x1 > spec.x0) || !(spec.y1 > spec.y0))
    throw std::invalid_argument("render: degenerate window");
  if (spec.slice_origin && (!spec.slice_u || !spec.slice_v))
    throw std::invalid_argument("render: slice needs both basis vectors");
}

}  // namespace

Image rasterize_coloring(const net::ColoringFunction& coloring,
                         const RasterSpec& spec, bool bonus) {
  check_spec(spec);
  const int c = coloring.num_colors();
  std::vector<Rgb> palette = spec.palette;
  if (palette.empty()) palette = default_palette(bonus ? c - 1 : c, bonus);
  if (static_cast<int>(palette.size()) < c)
    throw std::invalid_argument("render: palette shorter than color count");
  if (coloring.input_dim() != coloring.spatial_dim())
    throw std::invalid_argument("render: coloring with parameter inputs cannot be rasterized directly");

  Image img;
  img.width = spec.width;
  img.height = spec.height;
  img.rgb.resize(3 * static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height));

  const int dim = coloring.spatial_dim();
  // Row-batched evaluation.
  std::vector<double> inputs(static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(dim));
  std::vector<double> probs(static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(c));
  for (int py = 0; py < spec.height; ++py) {
    for (int px = 0; px < spec.width; ++px) {
      geom::Vec p = window_point(spec, px, py, dim);
      for (int q = 0; q < dim; ++q)
        inputs[static_cast<std::size_t>(px) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(q)] = p[q];
    }
    coloring.evaluate(inputs, static_cast<std::size_t>(spec.width), probs.data());
    for (int px = 0; px < spec.width; ++px) {
      const double* pr = probs.data() + static_cast<std::size_t>(px) * static_cast<std::size_t>(c);
      int color = eval::argmax_color(pr, c);
      Rgb rgb = palette[static_cast<std::size_t>(color)];
      if (spec.shade_by_confidence) {
        double pmax = pr[color];
        double f = 0.4 + 0.6 * pmax;
        for (auto& ch : rgb) ch = static_cast<std::uint8_t>(std::lround(ch * f));
      }
      std::size_t o = 3 * (static_cast<std::size_t>(py) * static_cast<std::size_t>(spec.width) +
                           static_cast<std::size_t>(px));
      img.rgb[o] = rgb[0];
      img.rgb[o + 1] = rgb[1];
      img.rgb[o + 2] = rgb[2];
    }
  }
  return img;
}

Image rasterize_cells(const formalize::CellColoring& coloring, const RasterSpec& spec) {
  check_spec(spec);
  const int c = coloring.num_regular_colors();
  std::vector<Rgb> palette = spec.palette;
  if (palette.empty()) palette = default_palette(c, true);
  if (static_cast<int>(palette.size()) < c + 1)
    throw std::invalid_argument("render: palette shorter than color count");
  Image img;
  img.width = spec.width;
  img.height = spec.height;
  img.rgb.resize(3 * static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height));
  const int dim = coloring.lattice.dim();
  for (int py = 0; py < spec.height; ++py)
    for (int px = 0; px < spec.width; ++px) {
      geom::Vec p = window_point(spec, px, py, dim);
      int color = coloring.color_at(p);
      Rgb rgb = palette[static_cast<std::size_t>(color - 1)];
      std::size_t o = 3 * (static_cast<std::size_t>(py) * static_cast<std::size_t>(spec.width) +
                           static_cast<std::size_t>(px));
      img.rgb[o] = rgb[0];
      img.rgb[o + 1] = rgb[1];
      img.rgb[o + 2] = rgb[2];
    }
  return img;
}

Image render_heatmap(const eval::SweepResult& sweep, int width, int height) {
  if (sweep.axis1.empty()) throw std::invalid_argument("heatmap: empty sweep");
  if (width < 1 || height < 1) throw std::invalid_argument("heatmap: resolution must be >= 1x1");
  double maxrate = 0.0;
  for (double r : sweep.rates) maxrate = std::max(maxrate, r);
  if (maxrate <= 0.0) maxrate = 1.0;

  std::size_t n1 = sweep.axis1.size();
  std::size_t n2 = std::max<std::size_t>(1, sweep.axis2.size());

  Image img;
  img.width = width;
  img.height = height;
  img.rgb.resize(3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (int py = 0; py < height; ++py)
    for (int px = 0; px < width; ++px) {
      std::size_t gi = std::min(n1 - 1, static_cast<std::size_t>(px) * n1 /
                                            static_cast<std::size_t>(width));
      std::size_t gj = std::min(n2 - 1, static_cast<std::size_t>(height - 1 - py) * n2 /
                                            static_cast<std::size_t>(height));
      double t = sweep.rates[gi * n2 + gj] / maxrate;
      // Black -> red -> yellow -> white heat ramp.
      double r = std::min(1.0, 3.0 * t);
      double g = std::clamp(3.0 * t - 1.0, 0.0, 1.0);
      double b = std::clamp(3.0 * t - 2.0, 0.0, 1.0);
      std::size_t o = 3 * (static_cast<std::size_t>(py) * static_cast<std::size_t>(width) +
                           static_cast<std::size_t>(px));
      img.rgb[o] = static_cast<std::uint8_t>(std::lround(255 * r));
      img.rgb[o + 1] = static_cast<std::uint8_t>(std::lround(255 * g));
      img.rgb[o + 2] = static_cast<std::uint8_t>(std::lround(255 * b));
    }
  return img;
}

namespace {

void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_u32(out, crc);
}

}  // namespace

void write_png(const Image& image, const std::string& path) {
  // Filter 0 scanlines, single IDAT, fixed compression level: byte-identical
  // output for identical input.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(image.height) *
              (1 + 3 * static_cast<std::size_t>(image.width)));
  for (int y = 0; y < image.height; ++y) {
    raw.push_back(0);
    const std::uint8_t* row =
        image.rgb.data() + 3 * static_cast<std::size_t>(y) * static_cast<std::size_t>(image.width);
    raw.insert(raw.end(), row, row + 3 * static_cast<std::size_t>(image.width));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  compressed.resize(bound);

  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("png: cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

void write_sidecar(const RasterSpec& spec, const std::string& source_id,
                   const std::string& path) {
  nlohmann::json j;
  j["window"] = {spec.x0, spec.y0, spec.x1, spec.y1};
  j["resolution"] = {spec.width, spec.height};
  nlohmann::json pal = nlohmann::json::array();
  for (const auto& c : spec.palette) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02X%02X%02X", c[0], c[1], c[2]);
    pal.push_back(buf);
  }
  j["palette"] = pal;
  j["source"] = source_id;
  std::ofstream out(path);
  if (!out) throw ConfigError("sidecar: cannot open '" + path + "' for writing");
  out << j.dump(1) << "\n";
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("hash: cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i)
      h = (h ^ static_cast<std::uint8_t>(buf[i])) * 0x100000001b3ull;
    if (!in) break;
  }
  char out[20];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace pf::render
