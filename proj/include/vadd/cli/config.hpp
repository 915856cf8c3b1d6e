#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vadd/datagen.hpp"
#include "vadd/diff/params.hpp"
#include "vadd/models.hpp"

namespace vadd::cli {

struct OptimizerConfig {
  double lr0 = 3e-4;
  bool cosine = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  diff::AdamOptions adam() const { return {beta1, beta2, eps, weight_decay}; }
};

struct TrainingConfig {
  int epochs = 500;
  int batch = 256;
  int anneal_epochs = 100;
  double t_min = kDefaultTMin;
  int log_every = 100;
};

struct SamplingConfig {
  std::vector<int> steps{1, 5};
  std::size_t n_samples = 100000;
  bool shared_latent = false;
};

struct EvalConfig {
  int K = 1000;
  int n_time_pairs = 100;
  std::size_t nll_sequences = 1000;
};

struct RunConfig {
  data::DatasetSpec dataset;
  ModelConfig model;
  OptimizerConfig optimizer;
  TrainingConfig training;
  SamplingConfig sampling;
  EvalConfig eval;
  std::uint64_t seed = 0;
  int threads = 1;
};

nlohmann::json to_json(const ModelConfig& m);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Complete document with every field present.
nlohmann::json to_json(const RunConfig& cfg);

/// Missing fields take their defaults; unknown keys and ill-typed or
/// out-of-range values throw ConfigError.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

void validate(const RunConfig& cfg);

/// 16 hex digits of FNV-1a over the canonical serialization.
std::string config_hash(const RunConfig& cfg);

}  // namespace vadd::cli
