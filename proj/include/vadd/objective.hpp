#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vadd/diff/graph.hpp"
#include "vadd/masking.hpp"
#include "vadd/models.hpp"
#include "vadd/rng.hpp"

namespace vadd {

/// One element's share of the annealed bound. `recon` and `kl` already
/// carry the time weight, so total == recon - lambda * kl.
struct LossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  double t = 0.0;
  int n_masked = 0;
};

/// lambda_h = min(1, h / total_anneal_steps); zero steps means no annealing.
struct AnnealSchedule {
  std::size_t total_anneal_steps = 0;
};

double kl_anneal_weight(std::size_t h, const AnnealSchedule& anneal);

/// The three random streams an objective evaluation consumes. Keeping
/// them apart means the time and mask draws do not depend on whether a
/// latent is sampled, so VADD and MDLM estimates can share (t, x_t).
struct DrawStreams {
  Rng time;
  Rng mask;
  Rng latent;

  static DrawStreams derive(std::uint64_t seed, std::uint32_t substream);
};

namespace objective {

using diff::Graph;
using diff::NodeId;
using diff::ParamStore;

/// Per-sequence sum of log_mu[i, x0_i] over masked positions, [B].
/// Throws UsageError when xt and x0 disagree at an unmasked position.
NodeId masked_log_likelihood(Graph& g, std::span<const TokenSequence> x0, std::span<const TokenSequence> xt,
                             NodeId log_mu);
/// Value form for a single sequence; `log_mu` is [N x V].
double masked_log_likelihood(const TokenSequence& x0, const TokenSequence& xt, const diff::Tensor& log_mu);

/// KL(N(mean, std^2) || N(0, I)) per row, [B].
NodeId gauss_kl(Graph& g, const models::PosteriorNodes& post);
double gauss_kl(const models::GaussianPosterior& post);

/// Standard-normal log density, all constants kept.
double log_standard_normal(std::span<const double> z);
/// Log density of N(mean, std^2) at mean + std * eps.
double log_gaussian_reparam(std::span<const double> eps, std::span<const double> std);

double log_mean_exp(std::span<const double> values);

struct Terms {
  NodeId values;  // [B]
  std::vector<LossBreakdown> parts;
};

/// weight(t_b) * [log p(x0|xt,z) - lambda * KL] for each element, drawing
/// xt from the mask stream and one eps per element from the latent stream.
Terms delbo_terms(Graph& g, const ParamStore& store, const ModelConfig& cfg, std::span<const TokenSequence> x0,
                  std::span<const double> t, double lambda, DrawStreams& draws);

/// weight(t_b) * log p(x0|xt) for the latent-free denoiser.
Terms elbo_terms_mdlm(Graph& g, const ParamStore& store, const ModelConfig& cfg,
                      std::span<const TokenSequence> x0, std::span<const double> t, DrawStreams& draws);

/// Single-element value form of delbo_terms.
LossBreakdown delbo_term(const TokenSequence& x0, double t, DrawStreams& draws, const ParamStore& store,
                         const ModelConfig& cfg, double lambda);

/// B independent draws from Uniform(t_min, 1).
std::vector<double> sample_times(std::size_t n, double t_min, Rng& rng);

struct BatchLoss {
  NodeId loss;
  LossBreakdown mean;  // batch averages of the per-element parts
};

/// -(1/B) sum_b term_b with fresh t_b, masks and latents per element.
/// VADD uses lambda_h = kl_anneal_weight(h); MDLM ignores annealing.
BatchLoss batch_loss(Graph& g, const ParamStore& store, const ModelConfig& cfg, ModelKind kind,
                     std::span<const TokenSequence> x0, std::size_t h, const AnnealSchedule& anneal, double t_min,
                     DrawStreams& draws);

/// Importance-weighted bound: mean over n_time_pairs draws of (t, xt) of
/// weight(t) * logmeanexp_k [log p(x0|xt,z_k) + log p(z_k) - log r(z_k)].
double k_sample_delbo(const TokenSequence& x0, int K, int n_time_pairs, DrawStreams& draws,
                      const ParamStore& store, const ModelConfig& cfg, double t_min = kDefaultTMin);

/// The same estimator for several K from one pool of max(Ks) latent draws
/// per (x_t, t). Each K averages logmeanexp over the floor(max(Ks) / K)
/// disjoint consecutive blocks of the pool, so every block is an
/// independent K-sample estimate. When each K divides the next, the
/// results are nondecreasing in K for every realization of the draws.
/// Ks must be ascending.
std::vector<double> k_sample_delbo_nested(const TokenSequence& x0, std::span<const int> Ks, int n_time_pairs,
                                          DrawStreams& draws, const ParamStore& store, const ModelConfig& cfg,
                                          double t_min = kDefaultTMin);

/// Monte Carlo ELBO for an MDLM store over n_time_pairs draws of (t, xt).
double mdlm_elbo_estimate(const TokenSequence& x0, int n_time_pairs, DrawStreams& draws, const ParamStore& store,
                          const ModelConfig& cfg, double t_min = kDefaultTMin);

}  // namespace objective
}  // namespace vadd
