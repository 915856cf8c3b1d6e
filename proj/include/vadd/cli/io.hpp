#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "vadd/eval.hpp"

namespace vadd::cli {

/// Binary P6 image, one pixel per cell, row = x0 token, column = x1 token;
/// grey level round(255 * count / max_count).
void write_heatmap_ppm(const std::filesystem::path& path, const eval::Histogram2D& hist);

/// "x0,x1,count" for every cell, row-major.
void write_counts_csv(const std::filesystem::path& path, const eval::Histogram2D& hist);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

/// Relative `out` resolves against $VADD_LAB_OUT when set, else the
/// working directory. The directory is created.
std::filesystem::path resolve_out_dir(const std::optional<std::string>& out, const std::string& fallback);

}  // namespace vadd::cli
