#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "vadd/models.hpp"

namespace vadd::cli {

enum class OracleScope { posterior, gradcheck, bounds, masking, all };

OracleScope parse_oracle_scope(const std::string& name);

/// Each suite returns {"pass": bool, ...} with its measured margin.

/// posterior_probs against Bayes enumeration over the 9x9 (s, t) grid of
/// {0.1, ..., 0.9}, every token case, V = 5.
nlohmann::json posterior_suite();

/// Autodiff against central differences on both models at a fixed draw.
nlohmann::json gradcheck_suite(const ModelConfig& cfg, std::uint64_t seed, int probes = 100);

/// Trains a 2-epoch micro VADD model, then checks that the Monte Carlo
/// DELBO term stays under the quadrature log-likelihood within 3 standard
/// errors in at least 95% of cases.
nlohmann::json bounds_suite(std::uint64_t seed, int cases = 40);

/// Masked-count chi-square at t = 0.5, N = 100, 10^4 trials.
nlohmann::json masking_suite(std::uint64_t seed);

/// {"pass": all passed, "suites": {name: result}}.
nlohmann::json run_oracles(OracleScope scope, const ModelConfig& cfg, std::uint64_t seed);

}  // namespace vadd::cli
