#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vadd/masking.hpp"
#include "vadd/rng.hpp"

namespace vadd::data {

enum class DatasetName { checkerboard, swissroll, circles };

const char* to_string(DatasetName name);
/// Throws UsageError for unknown names.
DatasetName parse_dataset_name(const std::string& name);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned box mapped affinely onto [0, 1 - 1e-9].
struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
};

inline constexpr double kUpperEdge = 1.0 - 1e-9;

Bounds bounds_for(DatasetName name);

/// Uniform over the "on" cells (row + col even) of a board x board grid on
/// the unit square. board = 2 gives the two diagonal quadrants.
std::vector<Point2> gen_checkerboard(std::size_t n, Rng& rng, int board = 2);

/// Raw spiral before rescaling: r = 1.5 pi (1 + 2u), (r cos r, r sin r) + noise.
std::vector<Point2> swissroll_raw(std::size_t n, Rng& rng, double noise = 0.2);
std::vector<Point2> gen_swissroll(std::size_t n, Rng& rng, double noise = 0.2);

/// Raw rings before rescaling: radius 1 or `factor` with probability 1/2.
std::vector<Point2> circles_raw(std::size_t n, Rng& rng, double noise = 0.02, double factor = 0.5);
std::vector<Point2> gen_circles(std::size_t n, Rng& rng, double noise = 0.02, double factor = 0.5);

/// Maps `bounds` onto [0, kUpperEdge], clamping the rare noise outliers.
std::vector<Point2> rescale(std::span<const Point2> raw, Bounds bounds);

/// floor(coord / bin_width), clamped to the last bin. Coordinates must lie
/// in [0, 1).
std::vector<TokenSequence> discretize(std::span<const Point2> points, double bin_width = 0.01);
int bins_for(double bin_width);

struct DatasetSpec {
  DatasetName name = DatasetName::checkerboard;
  std::size_t n = 100000;
  std::uint64_t seed = 0;
  int board = 2;
  double bin_width = 0.01;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Point2> points;
  std::vector<TokenSequence> tokens;
};

/// Pure function of the spec; draws from Rng(seed, Stream::data).
Dataset make_dataset(const DatasetSpec& spec);

nlohmann::json manifest(const DatasetSpec& spec);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

void write_points_csv(const std::filesystem::path& path, std::span<const Point2> points);
void write_tokens_csv(const std::filesystem::path& path, std::span<const TokenSequence> tokens);
/// Throws UsageError for a missing or malformed file.
std::vector<TokenSequence> read_tokens_csv(const std::filesystem::path& path, int vocab);

}  // namespace vadd::data
