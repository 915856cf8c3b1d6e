#include "vadd/cli/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "vadd/error.hpp"

namespace vadd::cli {

void write_heatmap_ppm(const std::filesystem::path& path, const eval::Histogram2D& hist) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  const int n = hist.bins();
  const std::uint64_t peak = std::max<std::uint64_t>(1, *std::max_element(hist.counts().begin(), hist.counts().end()));
  out << "P6\n" << n << ' ' << n << "\n255\n";
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      const auto level = static_cast<unsigned char>(
          std::lround(255.0 * static_cast<double>(hist.count(a, b)) / static_cast<double>(peak)));
      const char px[3] = {static_cast<char>(level), static_cast<char>(level), static_cast<char>(level)};
      out.write(px, 3);
    }
  }
  if (!out) throw UsageError("write failed for " + path.string());
}

void write_counts_csv(const std::filesystem::path& path, const eval::Histogram2D& hist) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << "x0,x1,count\n";
  for (int a = 0; a < hist.bins(); ++a)
    for (int b = 0; b < hist.bins(); ++b) out << a << ',' << b << ',' << hist.count(a, b) << '\n';
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

std::filesystem::path resolve_out_dir(const std::optional<std::string>& out, const std::string& fallback) {
  std::filesystem::path dir = out.value_or(fallback);
  if (dir.is_relative()) {
    const char* root = std::getenv("VADD_LAB_OUT");
    dir = (root && *root ? std::filesystem::path(root) : std::filesystem::current_path()) / dir;
  }
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace vadd::cli
