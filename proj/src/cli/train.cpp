#include "vadd/cli/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "vadd/cli/io.hpp"
#include "vadd/datagen.hpp"
#include "vadd/diff/graph.hpp"
#include "vadd/error.hpp"
#include "vadd/objective.hpp"

namespace vadd::cli {

using nlohmann::json;

TrainSchedule make_schedule(const RunConfig& cfg, std::size_t n_data) {
  if (n_data == 0) throw UsageError("train: empty dataset");
  TrainSchedule s;
  s.batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.training.batch), n_data);
  s.steps_per_epoch = std::max<std::size_t>(1, n_data / s.batch);
  s.total_steps = s.steps_per_epoch * static_cast<std::size_t>(cfg.training.epochs);
  s.anneal_steps = s.steps_per_epoch * static_cast<std::size_t>(cfg.training.anneal_epochs);
  return s;
}

json checkpoint_meta(const RunConfig& cfg, ModelKind kind, const diff::ParamStore& store, const std::string& role) {
  return {{"config", to_json(cfg)},
          {"config_hash", config_hash(cfg)},
          {"model", to_string(kind)},
          {"role", role},
          {"step_count", store.step_count()}};
}

RunConfig config_from_checkpoint(const diff::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("config")) throw UsageError("checkpoint: no run config in metadata");
  try {
    return config_from_json(ckpt.meta.at("config"));
  } catch (const ConfigError& e) {
    throw UsageError(std::string("checkpoint: ") + e.what());
  }
}

ModelKind kind_from_checkpoint(const diff::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model") || !ckpt.meta.at("model").is_string())
    throw UsageError("checkpoint: no model kind in metadata");
  return parse_model_kind(ckpt.meta.at("model").get<std::string>());
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, Stream::shuffle, static_cast<std::uint32_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

bool finite_grads(const diff::GradMap& grads) {
  for (const auto& [_, g] : grads)
    if (!g.all_finite()) return false;
  return true;
}

}  // namespace

TrainResult train(const TrainRequest& req) {
  const RunConfig& cfg = req.config;
  validate(cfg);
  const TrainSchedule sched = make_schedule(cfg, req.data.size());
  for (const TokenSequence& s : req.data)
    if (s.vocab != cfg.model.vocab || s.size() != static_cast<std::size_t>(cfg.model.seq_len) ||
        s.masked_count() != 0)
      throw UsageError("train: data does not match the model's vocabulary and sequence length");

  diff::ParamStore store;
  if (req.resume) {
    if (kind_from_checkpoint(*req.resume) != req.kind) throw UsageError("resume: checkpoint holds a different model");
    if (to_json(config_from_checkpoint(*req.resume).model) != to_json(cfg.model))
      throw UsageError("resume: checkpoint model architecture differs from the config");
    store = req.resume->store;
  } else {
    store = models::init_model(cfg.model, req.kind, cfg.seed);
  }

  std::ofstream csv, timing;
  if (req.out_dir) {
    const auto path = *req.out_dir / "metrics.csv";
    const bool append = req.resume && std::filesystem::exists(path);
    csv.open(path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw UsageError("cannot write " + path.string());
    if (!append) csv << "step,epoch,lambda,lr,loss,recon,kl,t_mean\n";
    const auto tpath = *req.out_dir / "timing.csv";
    const bool tappend = req.resume && std::filesystem::exists(tpath);
    timing.open(tpath, tappend ? std::ios::app : std::ios::trunc);
    if (!tappend) timing << "step,wallclock_ms\n";
  }
  if (req.progress)
    std::cerr << to_string(req.kind) << ": " << store.parameter_count("den.") << " denoiser and "
              << store.parameter_count("rec.") << " recognizer parameters\n";

  const AnnealSchedule anneal{sched.anneal_steps};
  const diff::AdamOptions adam = cfg.optimizer.adam();
  const auto clock0 = std::chrono::steady_clock::now();

  TrainResult result;
  result.best_store = store;
  bool have_best = false;
  double epoch_sum = 0.0;
  std::size_t epoch_count = 0;
  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  std::vector<TokenSequence> batch(sched.batch);

  for (std::size_t h = store.step_count(); h < sched.total_steps; ++h) {
    const std::size_t epoch = h / sched.steps_per_epoch;
    const std::size_t offset = (h % sched.steps_per_epoch) * sched.batch;
    if (epoch != order_epoch) {
      order = epoch_order(req.data.size(), cfg.seed, epoch);
      order_epoch = epoch;
    }
    for (std::size_t b = 0; b < sched.batch; ++b) batch[b] = req.data[order[offset + b]];

    DrawStreams draws = DrawStreams::derive(cfg.seed, static_cast<std::uint32_t>(h));
    diff::Graph g;
    const objective::BatchLoss bl =
        objective::batch_loss(g, store, cfg.model, req.kind, batch, h, anneal, cfg.training.t_min, draws);
    const double loss = g.value(bl.loss).item();
    const double lr = cfg.optimizer.cosine ? diff::cosine_lr(h, sched.total_steps, cfg.optimizer.lr0)
                                           : cfg.optimizer.lr0;
    const diff::GradMap grads = diff::backward(g, bl.loss, store);

    if (!std::isfinite(loss) || !finite_grads(grads)) {
      if (req.out_dir) {
        json dump = {{"step", h},       {"epoch", epoch},         {"loss", loss},
                     {"recon", bl.mean.recon}, {"kl", bl.mean.kl}, {"lambda", bl.mean.lambda},
                     {"lr", lr},        {"config_hash", config_hash(cfg)}};
        json idx = json::array();
        for (std::size_t b = 0; b < sched.batch; ++b) idx.push_back(order[offset + b]);
        dump["batch_indices"] = idx;
        write_json(*req.out_dir / "nan_dump.json", dump);
      }
      throw NumericalError("train: non-finite loss or gradient at step " + std::to_string(h));
    }

    if (csv.is_open() && h % static_cast<std::size_t>(cfg.training.log_every) == 0)
      csv << h << ',' << epoch << ',' << data::format_double(bl.mean.lambda) << ',' << data::format_double(lr)
          << ',' << data::format_double(loss) << ',' << data::format_double(bl.mean.recon) << ','
          << data::format_double(bl.mean.kl) << ',' << data::format_double(bl.mean.t) << '\n';
    if (timing.is_open() && h % static_cast<std::size_t>(cfg.training.log_every) == 0)
      timing << h << ','
             << std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - clock0).count()
             << '\n';

    diff::adam_step(store, grads, lr, adam);
    ++result.steps_run;
    epoch_sum += loss;
    ++epoch_count;

    if ((h + 1) % sched.steps_per_epoch == 0) {
      const double mean = epoch_sum / static_cast<double>(epoch_count);
      if (!have_best || mean < result.best_epoch_loss) {
        result.best_epoch_loss = mean;
        result.best_store = store;
        have_best = true;
      }
      if (req.progress) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
        std::cerr << to_string(req.kind) << " epoch " << epoch + 1 << '/' << cfg.training.epochs
                  << " loss " << mean << " lambda " << bl.mean.lambda << " elapsed " << secs << "s\n";
      }
      epoch_sum = 0.0;
      epoch_count = 0;
    }
  }
  if (!have_best) result.best_store = store;
  result.final_store = std::move(store);

  if (req.out_dir) {
    diff::save_checkpoint(*req.out_dir / "checkpoint_final.json", result.final_store,
                          checkpoint_meta(cfg, req.kind, result.final_store, "final"));
    json best_meta = checkpoint_meta(cfg, req.kind, result.best_store, "best");
    if (have_best) best_meta["epoch_loss"] = result.best_epoch_loss;
    diff::save_checkpoint(*req.out_dir / "checkpoint_best.json", result.best_store, best_meta);
  }
  return result;
}

}  // namespace vadd::cli
