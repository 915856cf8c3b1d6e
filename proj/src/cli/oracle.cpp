#include "vadd/cli/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "vadd/cli/config.hpp"
#include "vadd/cli/train.hpp"
#include "vadd/datagen.hpp"
#include "vadd/diff/grad_check.hpp"
#include "vadd/error.hpp"
#include "vadd/eval.hpp"
#include "vadd/objective.hpp"

namespace vadd::cli {

using nlohmann::json;

OracleScope parse_oracle_scope(const std::string& name) {
  if (name == "posterior") return OracleScope::posterior;
  if (name == "gradcheck") return OracleScope::gradcheck;
  if (name == "bounds") return OracleScope::bounds;
  if (name == "masking") return OracleScope::masking;
  if (name == "all") return OracleScope::all;
  throw UsageError("unknown oracle scope '" + name + "'");
}

json posterior_suite() {
  constexpr int V = 5;
  double max_err = 0.0;
  int checks = 0;
  for (int i = 1; i <= 9; ++i) {
    for (int j = 1; j <= 9; ++j) {
      const double s = i / 10.0, t = j / 10.0;
      if (!(s < t)) continue;
      for (int x0 = 0; x0 < V; ++x0) {
        for (int xt = 0; xt <= V; ++xt) {
          const auto got = masking::posterior_probs(xt, x0, s, t, V);
          const auto want = eval::posterior_oracle(x0, xt, s, t, V);
          for (std::size_t k = 0; k < got.size(); ++k) max_err = std::max(max_err, std::abs(got[k] - want[k]));
          ++checks;
        }
      }
    }
  }
  return {{"pass", max_err < 1e-12}, {"max_abs_err", max_err}, {"tolerance", 1e-12}, {"cases", checks}};
}

json gradcheck_suite(const ModelConfig& cfg, std::uint64_t seed, int probes) {
  data::DatasetSpec spec;
  spec.n = 4;
  spec.seed = seed;
  const auto ds = data::make_dataset(spec);
  json out = {{"tolerance", 1e-3}};
  bool pass = true;
  for (ModelKind kind : {ModelKind::vadd, ModelKind::mdlm}) {
    diff::ParamStore store = models::init_model(cfg, kind, seed);
    const AnnealSchedule anneal{0};
    auto forward = [&](diff::Graph& g) {
      DrawStreams draws = DrawStreams::derive(seed, 0);
      return objective::batch_loss(g, store, cfg, kind, ds.tokens, 1, anneal, kDefaultTMin, draws).loss;
    };
    Rng rng(seed, Stream::test, kind == ModelKind::vadd ? 1u : 2u);
    const diff::GradCheckResult r = diff::grad_check(forward, store, probes, rng);
    pass = pass && r.max_rel_error < 1e-3;
    out[to_string(kind)] = {{"max_rel_err", r.max_rel_error}, {"probes", r.probes}};
  }
  out["pass"] = pass;
  return out;
}

json bounds_suite(std::uint64_t seed, int cases) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.dataset.n = 2000;
  cfg.dataset.seed = seed;
  cfg.model.width = 64;
  cfg.model.time_features = 128;
  cfg.training.epochs = 2;
  cfg.training.batch = 64;
  cfg.training.anneal_epochs = 1;
  cfg.optimizer.lr0 = 1e-3;
  const auto ds = data::make_dataset(cfg.dataset);
  TrainRequest req;
  req.config = cfg;
  req.kind = ModelKind::vadd;
  req.data = ds.tokens;
  const TrainResult trained = train(req);

  constexpr int kDraws = 200;
  Rng rng(seed, Stream::test, 3);
  int held = 0;
  double worst = -INFINITY;
  for (int c = 0; c < cases; ++c) {
    const TokenSequence& x0 = ds.tokens[rng.below(ds.tokens.size())];
    const double t = rng.uniform(0.05, 1.0);
    const TokenSequence xt = masking::forward_mask(x0, t, rng);
    const auto terms = eval::delbo_draws(x0, xt, t, kDraws, rng, trained.final_store, cfg.model);
    double mean = 0.0;
    for (double v : terms) mean += v;
    mean /= kDraws;
    double ss = 0.0;
    for (double v : terms) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / (kDraws - 1) / kDraws);
    const double logp = eval::quadrature_logp(x0, xt, t, trained.final_store, cfg.model);
    const double excess = mean - 3.0 * se - logp;
    worst = std::max(worst, excess);
    if (excess <= 1e-12) ++held;
  }
  const double frac = static_cast<double>(held) / cases;
  return {{"pass", frac >= 0.95}, {"fraction_held", frac}, {"cases", cases}, {"worst_excess", worst}};
}

json masking_suite(std::uint64_t seed) {
  Rng rng(seed, Stream::test, 4);
  const double p = eval::mask_count_test(0.5, 100, 10000, rng);
  return {{"pass", p > 0.001}, {"p_value", p}, {"threshold", 0.001}};
}

json run_oracles(OracleScope scope, const ModelConfig& cfg, std::uint64_t seed) {
  json suites = json::object();
  const bool all = scope == OracleScope::all;
  if (all || scope == OracleScope::posterior) suites["posterior"] = posterior_suite();
  if (all || scope == OracleScope::gradcheck) suites["gradcheck"] = gradcheck_suite(cfg, seed);
  if (all || scope == OracleScope::bounds) suites["bounds"] = bounds_suite(seed);
  if (all || scope == OracleScope::masking) suites["masking"] = masking_suite(seed);
  bool pass = true;
  for (const auto& [_, r] : suites.items()) pass = pass && r.at("pass").get<bool>();
  return {{"pass", pass}, {"suites", suites}};
}

}  // namespace vadd::cli
