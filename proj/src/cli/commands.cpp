#include "vadd/cli/commands.hpp"

#include <cmath>
#include <iostream>

#include "vadd/cli/io.hpp"
#include "vadd/cli/oracle.hpp"
#include "vadd/cli/train.hpp"
#include "vadd/datagen.hpp"
#include "vadd/error.hpp"
#include "vadd/eval.hpp"
#include "vadd/sampler.hpp"

namespace vadd::cli {

using nlohmann::json;
namespace fs = std::filesystem;

RunConfig base_config(const CommandOptions& opts) {
  RunConfig cfg = opts.config ? load_config(*opts.config) : RunConfig{};
  if (opts.threads) cfg.threads = *opts.threads;
  validate(cfg);
  return cfg;
}

namespace {

diff::Checkpoint require_checkpoint(const CommandOptions& opts) {
  if (!opts.checkpoint) throw UsageError("--checkpoint is required");
  return diff::load_checkpoint(*opts.checkpoint);
}

std::vector<TokenSequence> generate_samples(const diff::Checkpoint& ckpt, const RunConfig& ckpt_cfg, int T,
                                            std::size_t n, std::uint64_t seed, int threads) {
  sampler::SamplerOptions so;
  so.shared_latent = ckpt_cfg.sampling.shared_latent;
  so.threads = threads;
  return sampler::generate(T, n, seed, ckpt.store, ckpt_cfg.model, so);
}

}  // namespace

int cmd_gen_data(const CommandOptions& opts) {
  RunConfig cfg = base_config(opts);
  if (opts.dataset) cfg.dataset.name = data::parse_dataset_name(*opts.dataset);
  if (opts.n) {
    if (*opts.n == 0) throw UsageError("--n must be >= 1");
    cfg.dataset.n = *opts.n;
  }
  if (opts.seed) cfg.dataset.seed = *opts.seed;
  if (opts.board) cfg.dataset.board = *opts.board;
  validate(cfg);
  const fs::path out = resolve_out_dir(opts.out, "data");
  const data::Dataset ds = data::make_dataset(cfg.dataset);
  data::write_points_csv(out / "points.csv", ds.points);
  data::write_tokens_csv(out / "tokens.csv", ds.tokens);
  write_json(out / "manifest.json", data::manifest(cfg.dataset));
  std::cout << "wrote " << ds.tokens.size() << " samples to " << out.string() << '\n';
  return kExitOk;
}

int cmd_train(const CommandOptions& opts) {
  RunConfig cfg = base_config(opts);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.epochs) cfg.training.epochs = *opts.epochs;
  validate(cfg);
  const ModelKind kind = parse_model_kind(opts.model.value_or("vadd"));
  const fs::path out = resolve_out_dir(opts.out, std::string("train_") + to_string(kind));
  const fs::path data_path = opts.data ? fs::path(*opts.data) : out / "tokens.csv";
  if (!fs::exists(data_path)) throw UsageError("training data not found: " + data_path.string());
  const auto tokens = data::read_tokens_csv(data_path, cfg.model.vocab);

  TrainRequest req;
  req.config = cfg;
  req.kind = kind;
  req.data = tokens;
  req.out_dir = out;
  req.progress = true;
  if (opts.resume) req.resume = diff::load_checkpoint(*opts.resume);
  const TrainResult r = train(req);
  std::cout << "trained " << to_string(kind) << " for " << r.steps_run << " steps; checkpoints in "
            << out.string() << '\n';
  return kExitOk;
}

int cmd_sample(const CommandOptions& opts) {
  const RunConfig base = base_config(opts);
  const diff::Checkpoint ckpt = require_checkpoint(opts);
  const RunConfig ckpt_cfg = config_from_checkpoint(ckpt);
  const int T = opts.steps.empty() ? base.sampling.steps.front() : opts.steps.front();
  if (T < 1) throw UsageError("--steps must be >= 1");
  const std::size_t n = opts.n.value_or(base.sampling.n_samples);
  if (n == 0) throw UsageError("--n must be >= 1");
  const std::uint64_t seed = opts.seed.value_or(base.seed);
  const fs::path out = resolve_out_dir(opts.out, "samples");

  const auto samples = generate_samples(ckpt, ckpt_cfg, T, n, seed, base.threads);
  data::write_tokens_csv(out / "samples.csv", samples);
  if (ckpt_cfg.model.seq_len == 2) {
    const auto hist = eval::Histogram2D::from_tokens(samples, ckpt_cfg.model.vocab);
    write_heatmap_ppm(out / "heatmap.ppm", hist);
    write_counts_csv(out / "counts.csv", hist);
  }
  std::cout << "wrote " << samples.size() << " samples (T=" << T << ") to " << out.string() << '\n';
  return kExitOk;
}

int cmd_eval(const CommandOptions& opts) {
  const RunConfig base = base_config(opts);
  const diff::Checkpoint ckpt = require_checkpoint(opts);
  const RunConfig ckpt_cfg = config_from_checkpoint(ckpt);
  if (!opts.truth) throw UsageError("--truth is required");
  const auto truth = data::read_tokens_csv(*opts.truth, ckpt_cfg.model.vocab);
  if (truth.empty()) throw UsageError("ground-truth file has no samples");
  const std::vector<int> Ts = opts.steps.empty() ? base.sampling.steps : opts.steps;
  for (int T : Ts)
    if (T < 1) throw UsageError("--steps must be >= 1");
  const std::size_t n = opts.n.value_or(base.sampling.n_samples);
  if (n == 0) throw UsageError("--n must be >= 1");
  const std::uint64_t seed = opts.seed.value_or(base.seed);
  const fs::path out = resolve_out_dir(opts.out, "eval");

  const auto truth_hist = eval::Histogram2D::from_tokens(truth, ckpt_cfg.model.vocab);
  json js = json::object();
  for (int T : Ts) {
    const auto samples = generate_samples(ckpt, ckpt_cfg, T, n, seed, base.threads);
    js[std::to_string(T)] =
        eval::js_divergence(eval::Histogram2D::from_tokens(samples, ckpt_cfg.model.vocab), truth_hist);
  }
  eval::NllOptions no;
  no.K = base.eval.K;
  no.n_time_pairs = base.eval.n_time_pairs;
  no.seed = seed;
  no.threads = base.threads;
  no.t_min = ckpt_cfg.training.t_min;
  const std::size_t m = std::min(base.eval.nll_sequences, truth.size());
  const eval::NllResult nll =
      eval::nll(std::span(truth.data(), m), ckpt.store, ckpt_cfg.model, no);
  if (!std::isfinite(nll.mean)) throw NumericalError("eval: non-finite NLL");

  const json metrics = {{"js", js},
                        {"nll", nll.mean},
                        {"nll_std_error", nll.std_error},
                        {"nll_sequences", m},
                        {"K", no.K},
                        {"n_time_pairs", no.n_time_pairs},
                        {"n_samples", n},
                        {"seed", seed},
                        {"model", to_string(kind_from_checkpoint(ckpt))},
                        {"config_hash", ckpt.meta.value("config_hash", std::string())}};
  write_json(out / "metrics.json", metrics);
  std::cout << metrics.dump(2) << '\n';
  return kExitOk;
}

int cmd_oracle(const CommandOptions& opts) {
  const RunConfig cfg = base_config(opts);
  const OracleScope scope = parse_oracle_scope(opts.scope.value_or("all"));
  const fs::path out = resolve_out_dir(opts.out, "oracle");
  const json report = run_oracles(scope, cfg.model, opts.seed.value_or(cfg.seed));
  write_json(out / "report.json", report);
  for (const auto& [name, r] : report.at("suites").items())
    std::cout << name << ": " << (r.at("pass").get<bool>() ? "pass" : "FAIL") << ' ' << r.dump() << '\n';
  return report.at("pass").get<bool>() ? kExitOk : kExitCheckFailed;
}

}  // namespace vadd::cli
