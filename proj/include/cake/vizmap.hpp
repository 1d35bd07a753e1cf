#pragma once

// Dense emotion maps: sample the compact space on a mesh grid (a plane for
// 2-d embeddings, the unit sphere for cake-norm with k = 3), classify every
// grid point with one domain head, and render the class raster as a binary
// PPM or an SVG with per-class F1 labels. Also the arousal-valence scatter.
//
// Palette (class: R G B), shared by every output:
//   0 neutral   128 128 128
//   1 happiness 255 215   0
//   2 sad        31 119 180
//   3 surprise  255 127  14
//   4 fear      148 103 189
//   5 disgust    44 160  44
//   6 anger     214  39  40
//
// Plane grids: row 0 is the top (y = max), column 0 the left (x = min), and
// both endpoints of each axis are sampled. Sphere grids: row r has polar
// angle theta = pi * r / (rows - 1) from +z, column c has azimuth
// phi = -pi + 2 pi (c + 1) / cols, so phi covers (-pi, pi]. At the poles phi
// is taken as 0 and the point is exactly (0, 0, +-1).

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cake/datamodel.hpp"
#include "cake/metrics.hpp"
#include "cake/model.hpp"
#include "cake/trainer.hpp"

namespace cake {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr std::array<Rgb, kNumEmotions> kPalette = {{
    {128, 128, 128},
    {255, 215, 0},
    {31, 119, 180},
    {255, 127, 14},
    {148, 103, 189},
    {44, 160, 44},
    {214, 39, 40},
}};

inline std::string hex_color(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

enum class GridMode : std::uint8_t { plane, sphere };

struct AxisRange {
  double min = -1.0;
  double max = 1.0;
  std::size_t resolution = 2;
  friend bool operator==(const AxisRange&, const AxisRange&) = default;
};

struct GridSpec {
  GridMode mode = GridMode::plane;
  // plane
  AxisRange x;
  AxisRange y;
  // Embedding coordinate shown on each plane axis. AV embeddings are
  // (arousal, valence), so AV maps use x = 1 (valence), y = 0 (arousal).
  std::size_t x_coord = 0;
  std::size_t y_coord = 1;
  // sphere
  std::size_t theta_resolution = 2;
  std::size_t phi_resolution = 2;

  std::size_t rows() const { return mode == GridMode::plane ? y.resolution : theta_resolution; }
  std::size_t cols() const { return mode == GridMode::plane ? x.resolution : phi_resolution; }
  std::size_t size() const { return rows() * cols(); }
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline void validate(const GridSpec& g) {
  if (g.mode == GridMode::plane) {
    for (const AxisRange* a : {&g.x, &g.y}) {
      if (a->resolution < 2) throw Error("vizmap", "grid resolution must be >= 2");
      if (!(a->min < a->max)) throw Error("vizmap", "grid axis needs min < max");
    }
    if (g.x_coord > 1 || g.y_coord > 1 || g.x_coord == g.y_coord) {
      throw Error("vizmap", "plane axes must map to embedding coordinates 0 and 1");
    }
  } else if (g.theta_resolution < 2 || g.phi_resolution < 2) {
    throw Error("vizmap", "sphere resolutions must be >= 2");
  }
}

inline bool supports_plane(const ModelConfig& cfg) {
  return cfg.embedding_dim() == 2 && (cfg.variant == Variant::cake || cfg.variant == Variant::av);
}

inline bool supports_sphere(const ModelConfig& cfg) { return cfg.variant == Variant::cake_norm && cfg.k == 3; }

// Plane: ranges span the observed coordinates widened by 10% about their
// centre, or [-1, 1] without observations. Sphere: theta gets `resolution`
// rows and phi 2 * resolution columns.
inline GridSpec plan_grid(const ModelConfig& cfg, std::optional<std::span<const Vec64>> observed,
                          std::size_t resolution) {
  GridSpec g;
  if (supports_sphere(cfg)) {
    g.mode = GridMode::sphere;
    g.theta_resolution = resolution;
    g.phi_resolution = 2 * resolution;
  } else if (supports_plane(cfg)) {
    g.mode = GridMode::plane;
    if (cfg.variant == Variant::av) {
      g.x_coord = 1;
      g.y_coord = 0;
    }
    g.x.resolution = g.y.resolution = resolution;
    if (observed && !observed->empty()) {
      auto fit = [&](std::size_t coord) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& e : *observed) {
          if (e.size() != 2) throw Error("vizmap", "observed embeddings must be 2-d for a plane grid");
          lo = std::min(lo, e[coord]);
          hi = std::max(hi, e[coord]);
        }
        const double centre = 0.5 * (lo + hi);
        double half = 0.5 * (hi - lo) * 1.1;
        if (!(half > 0)) half = 1.0;
        return AxisRange{centre - half, centre + half, resolution};
      };
      g.x = fit(g.x_coord);
      g.y = fit(g.y_coord);
    }
  } else {
    throw Error("vizmap", "unsupported visualization: variant " + std::string(variant_name(cfg.variant)) + " with k=" +
                              std::to_string(cfg.k) + " has a " + std::to_string(cfg.embedding_dim()) +
                              "-d embedding (plane needs cake k=2 or av; sphere needs cake-norm k=3)");
  }
  validate(g);
  return g;
}

inline Vec64 sphere_point(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

// Embedding-space coordinate of grid cell (row, col).
inline Vec64 grid_coordinate(const GridSpec& g, std::size_t row, std::size_t col) {
  if (g.mode == GridMode::plane) {
    const double fx = static_cast<double>(col) / static_cast<double>(g.x.resolution - 1);
    const double fy = static_cast<double>(row) / static_cast<double>(g.y.resolution - 1);
    Vec64 e(2);
    e[g.x_coord] = g.x.min + (g.x.max - g.x.min) * fx;
    e[g.y_coord] = g.y.max - (g.y.max - g.y.min) * fy;
    return e;
  }
  if (row == 0) return {0.0, 0.0, 1.0};
  if (row + 1 == g.theta_resolution) return {0.0, 0.0, -1.0};
  const double theta = std::numbers::pi * static_cast<double>(row) / static_cast<double>(g.theta_resolution - 1);
  const double phi =
      -std::numbers::pi + 2.0 * std::numbers::pi * static_cast<double>(col + 1) / static_cast<double>(g.phi_resolution);
  return sphere_point(theta, phi);
}

struct EmotionMap {
  GridSpec grid;
  std::vector<std::uint8_t> cells;  // row-major class indices
  Vec64 class_f1;                   // per class; empty when no test data was given
  std::array<Rgb, kNumEmotions> palette = kPalette;

  std::uint8_t at(std::size_t row, std::size_t col) const { return cells[row * grid.cols() + col]; }
  friend bool operator==(const EmotionMap&, const EmotionMap&) = default;
};

inline EmotionMap render_emotion_map(const ModelParams& params, const ModelConfig& cfg, const GridSpec& grid,
                                     std::size_t domain_id, const DatasetBundle* test = nullptr) {
  validate(grid);
  if (grid.mode == GridMode::plane && !supports_plane(cfg)) {
    throw Error("vizmap", "plane grid needs a 2-d embedding (cake k=2 or av)");
  }
  if (grid.mode == GridMode::sphere && !supports_sphere(cfg)) {
    throw Error("vizmap", "sphere grid needs variant cake-norm with k=3");
  }
  if (domain_id >= params.clf_W.size()) {
    throw Error("vizmap", "no classifier head for domain " + std::to_string(domain_id));
  }
  EmotionMap map;
  map.grid = grid;
  map.cells.resize(grid.size());
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    for (std::size_t c = 0; c < grid.cols(); ++c) {
      map.cells[r * grid.cols() + c] =
          static_cast<std::uint8_t>(predict_embedding(params, grid_coordinate(grid, r, c), domain_id));
    }
  }
  if (test) map.class_f1 = per_class_f1(confusion_for_head(params, cfg, *test, domain_id, domain_id));
  return map;
}

inline std::string encode_ppm(const EmotionMap& map) {
  std::string out = "P6\n" + std::to_string(map.grid.cols()) + " " + std::to_string(map.grid.rows()) + "\n255\n";
  out.reserve(out.size() + 3 * map.cells.size());
  for (auto c : map.cells) {
    const Rgb& p = map.palette.at(c);
    out.push_back(static_cast<char>(p.r));
    out.push_back(static_cast<char>(p.g));
    out.push_back(static_cast<char>(p.b));
  }
  return out;
}

// Label anchor for one class in cell units: mean cell centre, or the centre
// of the largest 4-connected region when the mean lands on another class.
inline std::optional<std::array<double, 2>> class_anchor(const EmotionMap& map, std::uint8_t cls) {
  const std::size_t rows = map.grid.rows();
  const std::size_t cols = map.grid.cols();
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (map.at(r, c) != cls) continue;
      sx += static_cast<double>(c) + 0.5;
      sy += static_cast<double>(r) + 0.5;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  std::array<double, 2> mean = {sx / static_cast<double>(n), sy / static_cast<double>(n)};
  const auto mc = static_cast<std::size_t>(mean[0]);
  const auto mr = static_cast<std::size_t>(mean[1]);
  if (mr < rows && mc < cols && map.at(mr, mc) == cls) return mean;

  std::vector<int> seen(rows * cols, 0);
  std::array<double, 2> best{};
  std::size_t best_n = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < rows * cols; ++start) {
    if (seen[start] || map.cells[start] != cls) continue;
    double cx = 0, cy = 0;
    std::size_t count = 0;
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const std::size_t r = i / cols, c = i % cols;
      cx += static_cast<double>(c) + 0.5;
      cy += static_cast<double>(r) + 0.5;
      ++count;
      auto visit = [&](std::size_t j) {
        if (!seen[j] && map.cells[j] == cls) {
          seen[j] = 1;
          stack.push_back(j);
        }
      };
      if (r > 0) visit(i - cols);
      if (r + 1 < rows) visit(i + cols);
      if (c > 0) visit(i - 1);
      if (c + 1 < cols) visit(i + 1);
    }
    if (count > best_n) {
      best_n = count;
      best = {cx / static_cast<double>(count), cy / static_cast<double>(count)};
    }
  }
  return best;
}

// One unit per cell in user space; each cell drawn as a 1x1 rect.
inline std::string encode_map_svg(const EmotionMap& map) {
  const std::size_t rows = map.grid.rows();
  const std::size_t cols = map.grid.cols();
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * 4 << "\" height=\"" << rows * 4
     << "\" viewBox=\"0 0 " << cols << ' ' << rows << "\" shape-rendering=\"crispEdges\">\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      os << "<rect x=\"" << c << "\" y=\"" << r << "\" width=\"1\" height=\"1\" fill=\""
         << hex_color(map.palette.at(map.at(r, c))) << "\"/>\n";
    }
  }
  const double font = std::max<double>(1.0, static_cast<double>(std::min(rows, cols)) / 25.0);
  char buf[256];
  for (std::uint8_t cls = 0; cls < kNumEmotions; ++cls) {
    const auto anchor = class_anchor(map, cls);
    if (!anchor) continue;
    std::string label(emotion_name(static_cast<EmotionClass>(cls)));
    if (cls < map.class_f1.size()) {
      std::snprintf(buf, sizeof buf, " %.2f", map.class_f1[cls]);
      label += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.3f\" y=\"%.3f\" font-size=\"%.3f\" text-anchor=\"middle\" "
                  "font-family=\"sans-serif\">",
                  (*anchor)[0], (*anchor)[1], font);
    os << buf << label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

enum class ImageFormat { raster, vector };

inline void emit_map_image(const EmotionMap& map, const std::string& path, ImageFormat format) {
  detail::write_file(path, format == ImageFormat::raster ? encode_ppm(map) : encode_map_svg(map), "vizmap");
}

// Scatter of every record at (valence, arousal) on [-1, 1]^2, coloured by
// label. Plot area 400x400 inside a 20px margin, so (0, 0) is the image
// centre (220, 220).
inline std::string encode_av_scatter(const DatasetBundle& bundle) {
  std::size_t missing = 0;
  for (const auto& r : bundle.records) missing += r.av ? 0 : 1;
  if (missing) {
    throw Error("vizmap", "scatter needs arousal-valence on every record; " + std::to_string(missing) +
                              " record(s) lack it");
  }
  constexpr double kMargin = 20.0, kPlot = 400.0;
  constexpr double kSize = kPlot + 2 * kMargin;
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                kSize, kSize, kSize, kSize);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"white\" stroke=\"black\"/>\n",
                kMargin, kMargin, kPlot, kPlot);
  os << buf;
  const double mid = kSize / 2;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"black\"/>\n"
                "<line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"black\"/>\n",
                kMargin, mid, kMargin + kPlot, mid, mid, kMargin, mid, kMargin + kPlot);
  os << buf;
  os << "<text x=\"" << kSize - 4 << "\" y=\"" << mid - 4 << "\" font-size=\"10\" text-anchor=\"end\">valence</text>\n";
  os << "<text x=\"" << mid + 4 << "\" y=\"" << kMargin + 10 << "\" font-size=\"10\">arousal</text>\n";
  for (const auto& r : bundle.records) {
    const double cx = kMargin + (r.av->valence + 1.0) / 2.0 * kPlot;
    const double cy = kMargin + (1.0 - (r.av->arousal + 1.0) / 2.0) * kPlot;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"2\" fill=\"%s\"/>\n", cx, cy,
                  hex_color(kPalette[index_of(r.label)]).c_str());
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

inline void scatter_av(const DatasetBundle& bundle, const std::string& path) {
  detail::write_file(path, encode_av_scatter(bundle), "vizmap");
}

}  // namespace cake
