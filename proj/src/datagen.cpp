#include "vadd/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vadd/error.hpp"

namespace vadd::data {

const char* to_string(DatasetName name) {
  switch (name) {
    case DatasetName::checkerboard:
      return "checkerboard";
    case DatasetName::swissroll:
      return "swissroll";
    case DatasetName::circles:
      return "circles";
  }
  return "?";
}

DatasetName parse_dataset_name(const std::string& name) {
  if (name == "checkerboard") return DatasetName::checkerboard;
  if (name == "swissroll") return DatasetName::swissroll;
  if (name == "circles") return DatasetName::circles;
  throw UsageError("unknown dataset '" + name + "' (expected checkerboard, swissroll or circles)");
}

Bounds bounds_for(DatasetName name) {
  constexpr double pi = std::numbers::pi;
  switch (name) {
    case DatasetName::checkerboard:
      return {0.0, 1.0};
    case DatasetName::swissroll:
      return {-4.5 * pi - 0.8, 4.5 * pi + 0.8};
    case DatasetName::circles:
      return {-1.08, 1.08};
  }
  return {};
}

std::vector<Point2> gen_checkerboard(std::size_t n, Rng& rng, int board) {
  if (n == 0) throw UsageError("gen_checkerboard: n must be >= 1");
  if (board < 1) throw UsageError("gen_checkerboard: board must be >= 1");
  std::vector<std::pair<int, int>> on;
  for (int r = 0; r < board; ++r)
    for (int c = 0; c < board; ++c)
      if ((r + c) % 2 == 0) on.emplace_back(r, c);
  const double cell = 1.0 / board;
  std::vector<Point2> pts(n);
  for (Point2& p : pts) {
    const auto [r, c] = on[rng.below(on.size())];
    p.x = std::min((c + rng.uniform()) * cell, kUpperEdge);
    p.y = std::min((r + rng.uniform()) * cell, kUpperEdge);
  }
  return pts;
}

std::vector<Point2> swissroll_raw(std::size_t n, Rng& rng, double noise) {
  if (n == 0) throw UsageError("gen_swissroll: n must be >= 1");
  std::vector<Point2> pts(n);
  for (Point2& p : pts) {
    const double r = 1.5 * std::numbers::pi * (1.0 + 2.0 * rng.uniform());
    p.x = r * std::cos(r) + noise * rng.normal();
    p.y = r * std::sin(r) + noise * rng.normal();
  }
  return pts;
}

std::vector<Point2> gen_swissroll(std::size_t n, Rng& rng, double noise) {
  return rescale(swissroll_raw(n, rng, noise), bounds_for(DatasetName::swissroll));
}

std::vector<Point2> circles_raw(std::size_t n, Rng& rng, double noise, double factor) {
  if (n == 0) throw UsageError("gen_circles: n must be >= 1");
  std::vector<Point2> pts(n);
  for (Point2& p : pts) {
    const double radius = rng.uniform() < 0.5 ? 1.0 : factor;
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    p.x = radius * std::cos(theta) + noise * rng.normal();
    p.y = radius * std::sin(theta) + noise * rng.normal();
  }
  return pts;
}

std::vector<Point2> gen_circles(std::size_t n, Rng& rng, double noise, double factor) {
  return rescale(circles_raw(n, rng, noise, factor), bounds_for(DatasetName::circles));
}

std::vector<Point2> rescale(std::span<const Point2> raw, Bounds bounds) {
  const double span = bounds.hi - bounds.lo;
  auto map = [&](double v) { return std::clamp((v - bounds.lo) / span * kUpperEdge, 0.0, kUpperEdge); };
  std::vector<Point2> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = {map(raw[i].x), map(raw[i].y)};
  return out;
}

int bins_for(double bin_width) {
  if (!(bin_width > 0.0) || bin_width > 1.0) throw UsageError("discretize: bin width must be in (0, 1]");
  return static_cast<int>(std::lround(1.0 / bin_width));
}

std::vector<TokenSequence> discretize(std::span<const Point2> points, double bin_width) {
  const int bins = bins_for(bin_width);
  auto bin = [&](double v) {
    if (!(v >= 0.0 && v < 1.0)) throw UsageError("discretize: coordinate outside [0, 1)");
    return std::min(static_cast<int>(std::floor(v * bins)), bins - 1);
  };
  std::vector<TokenSequence> out;
  out.reserve(points.size());
  for (const Point2& p : points) out.emplace_back(std::vector<int>{bin(p.x), bin(p.y)}, bins);
  return out;
}

Dataset make_dataset(const DatasetSpec& spec) {
  Rng rng(spec.seed, Stream::data);
  Dataset ds{spec, {}, {}};
  switch (spec.name) {
    case DatasetName::checkerboard:
      ds.points = gen_checkerboard(spec.n, rng, spec.board);
      break;
    case DatasetName::swissroll:
      ds.points = gen_swissroll(spec.n, rng);
      break;
    case DatasetName::circles:
      ds.points = gen_circles(spec.n, rng);
      break;
  }
  ds.tokens = discretize(ds.points, spec.bin_width);
  return ds;
}

nlohmann::json manifest(const DatasetSpec& spec) {
  const Bounds b = bounds_for(spec.name);
  nlohmann::json j = {{"name", to_string(spec.name)},
                      {"n", spec.n},
                      {"seed", spec.seed},
                      {"bounds", {b.lo, b.hi}},
                      {"bin_width", spec.bin_width}};
  if (spec.name == DatasetName::checkerboard) j["board"] = spec.board;
  return j;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_points_csv(const std::filesystem::path& path, std::span<const Point2> points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "x,y\n";
  for (const Point2& p : points) out << format_double(p.x) << ',' << format_double(p.y) << '\n';
}

void write_tokens_csv(const std::filesystem::path& path, std::span<const TokenSequence> tokens) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  if (!tokens.empty()) {
    for (std::size_t i = 0; i < tokens[0].size(); ++i) out << (i ? "," : "") << "x" << i;
    out << '\n';
  }
  for (const TokenSequence& s : tokens) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s.tokens[i];
    out << '\n';
  }
}

std::vector<TokenSequence> read_tokens_csv(const std::filesystem::path& path, int vocab) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open token file " + path.string());
  std::vector<TokenSequence> out;
  std::string line;
  bool header = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line[0] == 'x') continue;
    }
    std::vector<int> toks;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      int v = 0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || v < 0 || v >= vocab)
        throw UsageError("malformed token '" + cell + "' in " + path.string());
      toks.push_back(v);
    }
    if (width == 0) width = toks.size();
    if (toks.size() != width || width == 0) throw UsageError("ragged token rows in " + path.string());
    out.emplace_back(std::move(toks), vocab);
  }
  if (out.empty()) throw UsageError("no token rows in " + path.string());
  return out;
}

}  // namespace vadd::data
