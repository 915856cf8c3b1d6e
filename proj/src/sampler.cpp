#include "vadd/sampler.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

#include "vadd/diff/graph.hpp"
#include "vadd/error.hpp"
#include "vadd/parallel.hpp"

namespace vadd::sampler {

TimeGrid::TimeGrid(int steps) {
  if (steps < 1) throw UsageError("time grid: need at least one step");
  times_.resize(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) times_[static_cast<std::size_t>(i)] = static_cast<double>(i) / steps;
}

int sample_categorical(std::span<const double> probs, double u) {
  double cdf = 0.0;
  int last_positive = -1;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > 0.0) last_positive = static_cast<int>(j);
    cdf += probs[j];
    if (u < cdf) return static_cast<int>(j);
  }
  if (last_positive < 0) throw UsageError("sample_categorical: no positive mass");
  return last_positive;
}

TokenSequence transition_step(const TokenSequence& xt, double s, double t, std::span<const double> mu, Rng& rng) {
  if (!(s < t)) throw UsageError("transition_step: requires s < t");
  const auto V = static_cast<std::size_t>(xt.vocab);
  if (mu.size() != xt.size() * V) throw UsageError("transition_step: mu must be N x V");
  const double as = LinearSchedule::alpha(s), at = LinearSchedule::alpha(t);
  const double unmask = (as - at) / (1.0 - at);
  TokenSequence out = xt;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (!xt.is_masked(i)) continue;
    if (rng.uniform() < unmask) out.tokens[i] = sample_categorical(mu.subspan(i * V, V), rng.uniform());
  }
  return out;
}

namespace {

/// Runs the reverse chain on a block of sequences sharing one forward pass
/// per step. `latent` / `categorical` hold one generator per sequence.
void run_chain(int steps, const diff::ParamStore& store, const ModelConfig& cfg, std::vector<Rng>& latent,
               std::vector<Rng>& categorical, const SamplerOptions& opts, std::vector<TokenSequence>& seqs) {
  const TimeGrid grid(steps);
  const std::size_t B = seqs.size();
  const auto d = static_cast<std::size_t>(cfg.latent_dim);
  const auto V = static_cast<std::size_t>(cfg.vocab);
  const auto N = static_cast<std::size_t>(cfg.seq_len);
  const bool with_latent = models::has_latent_pathway(store);

  diff::Tensor shared_z({B, d});
  if (with_latent && opts.shared_latent)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < d; ++j) shared_z.at(b, j) = latent[b].normal();

  for (int i = steps; i >= 1; --i) {
    const double t = grid[i], s = grid[i - 1];
    std::vector<std::size_t> active;
    for (std::size_t b = 0; b < B; ++b)
      if (seqs[b].masked_count() > 0) active.push_back(b);

    std::vector<TokenSequence> xs;
    xs.reserve(active.size());
    for (std::size_t b : active) xs.push_back(seqs[b]);
    diff::Tensor z({active.size(), d});
    if (with_latent) {
      for (std::size_t a = 0; a < active.size(); ++a)
        for (std::size_t j = 0; j < d; ++j)
          z.at(a, j) = opts.shared_latent ? shared_z.at(active[a], j) : latent[active[a]].normal();
    }
    if (active.empty()) continue;

    diff::Graph g;
    const std::vector<double> ts(active.size(), t);
    std::optional<diff::NodeId> zn;
    if (with_latent) zn = g.constant(std::move(z));
    diff::Tensor mu = g.value(models::denoiser_log_probs(g, store, cfg, xs, ts, zn));
    for (double& v : mu.data()) v = std::exp(v);

    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t b = active[a];
      TokenSequence next = transition_step(seqs[b], s, t, std::span(mu.data()).subspan(a * N * V, N * V),
                                           categorical[b]);
      for (std::size_t p = 0; p < N; ++p)
        if (!seqs[b].is_masked(p) && next.tokens[p] != seqs[b].tokens[p])
          throw std::logic_error("sampler: an unmasked token changed");
      seqs[b] = std::move(next);
    }
  }
  for (const TokenSequence& x : seqs)
    if (x.masked_count() != 0) throw std::logic_error("sampler: chain ended with masked tokens");
}

}  // namespace

TokenSequence ancestral(int steps, const diff::ParamStore& store, const ModelConfig& cfg, Rng& latent_rng,
                        Rng& categorical_rng, const SamplerOptions& opts) {
  std::vector<Rng> lat{latent_rng}, cat{categorical_rng};
  std::vector<TokenSequence> seqs{TokenSequence::all_masked(static_cast<std::size_t>(cfg.seq_len), cfg.vocab)};
  run_chain(steps, store, cfg, lat, cat, opts, seqs);
  latent_rng = lat[0];
  categorical_rng = cat[0];
  return seqs[0];
}

TokenSequence vadd_ancestral(int steps, const diff::ParamStore& store, const ModelConfig& cfg, Rng& latent_rng,
                             Rng& categorical_rng, const SamplerOptions& opts) {
  if (!models::has_latent_pathway(store)) throw ConfigError("vadd_ancestral: model has no latent pathway");
  return ancestral(steps, store, cfg, latent_rng, categorical_rng, opts);
}

TokenSequence mdlm_ancestral(int steps, const diff::ParamStore& store, const ModelConfig& cfg,
                             Rng& categorical_rng) {
  if (models::has_latent_pathway(store)) throw ConfigError("mdlm_ancestral: model has a latent pathway");
  Rng unused(0, Stream::latent, 0);
  return ancestral(steps, store, cfg, unused, categorical_rng);
}

std::vector<TokenSequence> generate(int steps, std::size_t n, std::uint64_t seed, const diff::ParamStore& store,
                                    const ModelConfig& cfg, const SamplerOptions& opts, std::uint32_t first_index) {
  std::vector<TokenSequence> out(n);
  parallel_for(n, opts.threads, opts.chunk, [&](std::size_t begin, std::size_t end) {
    std::vector<Rng> lat, cat;
    std::vector<TokenSequence> seqs;
    for (std::size_t k = begin; k < end; ++k) {
      const auto sub = static_cast<std::uint32_t>(first_index + k);
      lat.emplace_back(seed, Stream::latent, sub);
      cat.emplace_back(seed, Stream::categorical, sub);
      seqs.push_back(TokenSequence::all_masked(static_cast<std::size_t>(cfg.seq_len), cfg.vocab));
    }
    run_chain(steps, store, cfg, lat, cat, opts, seqs);
    for (std::size_t k = begin; k < end; ++k) out[k] = std::move(seqs[k - begin]);
  });
  return out;
}

}  // namespace vadd::sampler
