#pragma once

#include <filesystem>
#include <optional>
#include <span>

#include <json.hpp>

#include "vadd/cli/config.hpp"
#include "vadd/diff/params.hpp"
#include "vadd/masking.hpp"
#include "vadd/models.hpp"

namespace vadd::cli {

struct TrainSchedule {
  std::size_t batch = 0;            // effective batch (clipped to the dataset size)
  std::size_t steps_per_epoch = 0;  // floor(n / batch), at least 1
  std::size_t total_steps = 0;
  std::size_t anneal_steps = 0;
};

TrainSchedule make_schedule(const RunConfig& cfg, std::size_t n_data);

struct TrainRequest {
  RunConfig config;
  ModelKind kind = ModelKind::vadd;
  std::span<const TokenSequence> data;
  std::optional<diff::Checkpoint> resume;
  /// When set, metrics.csv, timing.csv, checkpoint_final.json and
  /// checkpoint_best.json are written here. Everything but timing.csv is a
  /// pure function of the inputs.
  std::optional<std::filesystem::path> out_dir;
  bool progress = false;
};

struct TrainResult {
  diff::ParamStore final_store;
  diff::ParamStore best_store;
  double best_epoch_loss = 0.0;
  std::size_t steps_run = 0;
};

/// Checkpoint metadata for a store trained under `cfg`.
nlohmann::json checkpoint_meta(const RunConfig& cfg, ModelKind kind, const diff::ParamStore& store,
                               const std::string& role);

/// Reads back the run config and model kind recorded by checkpoint_meta.
RunConfig config_from_checkpoint(const diff::Checkpoint& ckpt);
ModelKind kind_from_checkpoint(const diff::Checkpoint& ckpt);

/// Minibatch Adam on the (D)ELBO. Step h uses draw substream h and epoch e
/// shuffles with substream e, so a resumed run replays exactly the steps an
/// uninterrupted run would have taken. A non-finite loss or gradient writes
/// nan_dump.json (when out_dir is set) and throws NumericalError.
TrainResult train(const TrainRequest& req);

}  // namespace vadd::cli
