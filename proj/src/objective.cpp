#include "vadd/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vadd/diff/ops.hpp"
#include "vadd/error.hpp"

namespace vadd {

double kl_anneal_weight(std::size_t h, const AnnealSchedule& anneal) {
  if (anneal.total_anneal_steps == 0) return 1.0;
  return std::min(1.0, static_cast<double>(h) / static_cast<double>(anneal.total_anneal_steps));
}

DrawStreams DrawStreams::derive(std::uint64_t seed, std::uint32_t substream) {
  return {Rng(seed, Stream::time, substream), Rng(seed, Stream::mask, substream),
          Rng(seed, Stream::latent, substream)};
}

namespace objective {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

std::vector<long> masked_targets(std::span<const TokenSequence> x0, std::span<const TokenSequence> xt) {
  if (x0.size() != xt.size()) throw UsageError("masked_log_likelihood: batch sizes differ");
  std::vector<long> idx;
  for (std::size_t b = 0; b < x0.size(); ++b) {
    if (x0[b].size() != xt[b].size()) throw UsageError("masked_log_likelihood: sequence lengths differ");
    for (std::size_t i = 0; i < x0[b].size(); ++i) {
      if (xt[b].is_masked(i)) {
        idx.push_back(x0[b].tokens[i]);
      } else {
        if (xt[b].tokens[i] != x0[b].tokens[i])
          throw UsageError("masked_log_likelihood: xt is not a masking of x0");
        idx.push_back(-1);
      }
    }
  }
  return idx;
}

std::vector<TokenSequence> mask_batch(std::span<const TokenSequence> x0, std::span<const double> t, Rng& rng) {
  std::vector<TokenSequence> xt;
  xt.reserve(x0.size());
  for (std::size_t b = 0; b < x0.size(); ++b) xt.push_back(masking::forward_mask(x0[b], t[b], rng));
  return xt;
}

diff::Tensor weights_of(std::span<const double> t) {
  diff::Tensor w({t.size()});
  for (std::size_t b = 0; b < t.size(); ++b) w[b] = masking::loss_weight(t[b], 0.0);
  return w;
}

}  // namespace

NodeId masked_log_likelihood(Graph& g, std::span<const TokenSequence> x0, std::span<const TokenSequence> xt,
                             NodeId log_mu) {
  std::vector<long> idx = masked_targets(x0, xt);
  const std::size_t B = x0.size();
  if (B == 0) throw UsageError("masked_log_likelihood: empty batch");
  const std::size_t N = x0[0].size();
  const NodeId picked = diff::pick(g, log_mu, std::move(idx));
  return diff::row_sum(g, diff::reshape(g, picked, {B, N}));
}

double masked_log_likelihood(const TokenSequence& x0, const TokenSequence& xt, const diff::Tensor& log_mu) {
  Graph g;
  const NodeId lm = g.constant(log_mu);
  return g.value(masked_log_likelihood(g, std::span(&x0, 1), std::span(&xt, 1), lm))[0];
}

NodeId gauss_kl(Graph& g, const models::PosteriorNodes& post) {
  // 0.5 * sum_j (mean^2 + std^2 - 1 - 2 log std)
  NodeId inner = diff::add(g, diff::square(g, post.mean), diff::square(g, post.std));
  inner = diff::sub(g, diff::add_scalar(g, inner, -1.0), diff::scale(g, post.log_std, 2.0));
  return diff::scale(g, diff::row_sum(g, inner), 0.5);
}

double gauss_kl(const models::GaussianPosterior& post) {
  double kl = 0.0;
  for (std::size_t j = 0; j < post.mean.size(); ++j) {
    const double s = post.std[j];
    if (!(s > 0.0)) throw UsageError("gauss_kl: std must be positive");
    kl += 0.5 * (post.mean[j] * post.mean[j] + s * s - 1.0 - 2.0 * std::log(s));
  }
  return kl;
}

double log_standard_normal(std::span<const double> z) {
  double lp = 0.0;
  for (double v : z) lp += -0.5 * v * v - kHalfLog2Pi;
  return lp;
}

double log_gaussian_reparam(std::span<const double> eps, std::span<const double> std) {
  double lp = 0.0;
  for (std::size_t j = 0; j < eps.size(); ++j) lp += -0.5 * eps[j] * eps[j] - std::log(std[j]) - kHalfLog2Pi;
  return lp;
}

double log_mean_exp(std::span<const double> values) {
  if (values.empty()) throw UsageError("log_mean_exp: empty input");
  const double mx = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : values) s += std::exp(v - mx);
  return mx + std::log(s / static_cast<double>(values.size()));
}

Terms delbo_terms(Graph& g, const ParamStore& store, const ModelConfig& cfg, std::span<const TokenSequence> x0,
                  std::span<const double> t, double lambda, DrawStreams& draws) {
  if (x0.empty() || x0.size() != t.size()) throw UsageError("delbo_terms: need one time per sequence");
  const std::size_t B = x0.size();
  const auto d = static_cast<std::size_t>(cfg.latent_dim);
  std::vector<TokenSequence> xt = mask_batch(x0, t, draws.mask);

  const models::PosteriorNodes post = models::recognizer_forward(g, store, cfg, x0, xt, t);
  diff::Tensor eps({B, d});
  for (double& e : eps.data()) e = draws.latent.normal();
  const NodeId z = models::reparameterize(g, post, eps);
  const NodeId log_mu = models::denoiser_log_probs(g, store, cfg, xt, t, z);
  const NodeId ll = masked_log_likelihood(g, x0, xt, log_mu);
  const NodeId kl = gauss_kl(g, post);
  const diff::Tensor w = weights_of(t);
  const NodeId values = diff::mul_const(g, diff::sub(g, ll, diff::scale(g, kl, lambda)), w);

  Terms out{values, {}};
  out.parts.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    LossBreakdown& p = out.parts[b];
    p.recon = w[b] * g.value(ll)[b];
    p.kl = w[b] * g.value(kl)[b];
    p.lambda = lambda;
    p.total = p.recon - lambda * p.kl;
    p.t = t[b];
    p.n_masked = static_cast<int>(xt[b].masked_count());
  }
  return out;
}

Terms elbo_terms_mdlm(Graph& g, const ParamStore& store, const ModelConfig& cfg,
                      std::span<const TokenSequence> x0, std::span<const double> t, DrawStreams& draws) {
  if (x0.empty() || x0.size() != t.size()) throw UsageError("elbo_terms_mdlm: need one time per sequence");
  std::vector<TokenSequence> xt = mask_batch(x0, t, draws.mask);
  const NodeId log_mu = models::denoiser_log_probs(g, store, cfg, xt, t, std::nullopt);
  const NodeId ll = masked_log_likelihood(g, x0, xt, log_mu);
  const diff::Tensor w = weights_of(t);
  const NodeId values = diff::mul_const(g, ll, w);

  Terms out{values, {}};
  out.parts.resize(x0.size());
  for (std::size_t b = 0; b < x0.size(); ++b) {
    LossBreakdown& p = out.parts[b];
    p.recon = g.value(values)[b];
    p.total = p.recon;
    p.lambda = 0.0;
    p.t = t[b];
    p.n_masked = static_cast<int>(xt[b].masked_count());
  }
  return out;
}

LossBreakdown delbo_term(const TokenSequence& x0, double t, DrawStreams& draws, const ParamStore& store,
                         const ModelConfig& cfg, double lambda) {
  Graph g;
  const double times[1] = {t};
  return delbo_terms(g, store, cfg, std::span(&x0, 1), times, lambda, draws).parts[0];
}

std::vector<double> sample_times(std::size_t n, double t_min, Rng& rng) {
  std::vector<double> t(n);
  for (double& v : t) v = rng.uniform(t_min, 1.0);
  return t;
}

BatchLoss batch_loss(Graph& g, const ParamStore& store, const ModelConfig& cfg, ModelKind kind,
                     std::span<const TokenSequence> x0, std::size_t h, const AnnealSchedule& anneal, double t_min,
                     DrawStreams& draws) {
  if (x0.empty()) throw UsageError("batch_loss: empty batch");
  const std::vector<double> t = sample_times(x0.size(), t_min, draws.time);
  const Terms terms = kind == ModelKind::vadd
                          ? delbo_terms(g, store, cfg, x0, t, kl_anneal_weight(h, anneal), draws)
                          : elbo_terms_mdlm(g, store, cfg, x0, t, draws);
  BatchLoss out{diff::scale(g, diff::mean_all(g, terms.values), -1.0), {}};
  const double inv = 1.0 / static_cast<double>(x0.size());
  for (const LossBreakdown& p : terms.parts) {
    out.mean.recon += p.recon * inv;
    out.mean.kl += p.kl * inv;
    out.mean.total += p.total * inv;
    out.mean.t += p.t * inv;
    out.mean.n_masked += p.n_masked;
  }
  out.mean.lambda = terms.parts.front().lambda;
  return out;
}

namespace {

/// Log importance weights for K latents at one (t, xt).
std::vector<double> log_weights(const TokenSequence& x0, const TokenSequence& xt, double t, int K,
                                Rng& latent_rng, const ParamStore& store, const ModelConfig& cfg) {
  const models::GaussianPosterior post = models::recognize(x0, xt, t, store, cfg);
  const auto d = static_cast<std::size_t>(cfg.latent_dim);
  const auto Kz = static_cast<std::size_t>(K);
  diff::Tensor z({Kz, d});
  std::vector<double> lw(Kz);
  std::vector<double> eps(d);
  for (std::size_t k = 0; k < Kz; ++k) {
    for (std::size_t j = 0; j < d; ++j) {
      eps[j] = latent_rng.normal();
      z.at(k, j) = post.mean[j] + post.std[j] * eps[j];
    }
    lw[k] = log_standard_normal(std::span(z.data().data() + k * d, d)) - log_gaussian_reparam(eps, post.std);
  }
  if (xt.masked_count() == 0) return lw;

  constexpr std::size_t kChunk = 512;
  for (std::size_t begin = 0; begin < Kz; begin += kChunk) {
    const std::size_t n = std::min(kChunk, Kz - begin);
    Graph g;
    const std::vector<TokenSequence> xs(n, xt);
    const std::vector<TokenSequence> x0s(n, x0);
    diff::Tensor zc({n, d}, std::vector<double>(z.data().begin() + begin * d, z.data().begin() + (begin + n) * d));
    const NodeId lm = models::denoiser_log_probs_shared(g, store, cfg, xt, t, g.constant(std::move(zc)));
    const diff::Tensor& ll = g.value(masked_log_likelihood(g, x0s, xs, lm));
    for (std::size_t k = 0; k < n; ++k) lw[begin + k] += ll[k];
  }
  return lw;
}

}  // namespace

std::vector<double> k_sample_delbo_nested(const TokenSequence& x0, std::span<const int> Ks, int n_time_pairs,
                                          DrawStreams& draws, const ParamStore& store, const ModelConfig& cfg,
                                          double t_min) {
  if (Ks.empty() || n_time_pairs < 1) throw UsageError("k_sample_delbo: need K >= 1 and n_time_pairs >= 1");
  for (std::size_t i = 0; i < Ks.size(); ++i)
    if (Ks[i] < 1 || (i > 0 && Ks[i] < Ks[i - 1])) throw UsageError("k_sample_delbo: Ks must be ascending and >= 1");
  const int kmax = Ks.back();
  std::vector<double> acc(Ks.size(), 0.0);
  for (int p = 0; p < n_time_pairs; ++p) {
    const double t = draws.time.uniform(t_min, 1.0);
    const TokenSequence xt = masking::forward_mask(x0, t, draws.mask);
    const std::vector<double> lw = log_weights(x0, xt, t, kmax, draws.latent, store, cfg);
    const double w = masking::loss_weight(t, 0.0);
    for (std::size_t i = 0; i < Ks.size(); ++i) {
      const auto K = static_cast<std::size_t>(Ks[i]);
      const std::size_t blocks = lw.size() / K;
      double block_sum = 0.0;
      for (std::size_t b = 0; b < blocks; ++b) block_sum += log_mean_exp(std::span(lw.data() + b * K, K));
      acc[i] += w * block_sum / static_cast<double>(blocks);
    }
  }
  for (double& a : acc) a /= static_cast<double>(n_time_pairs);
  return acc;
}

double k_sample_delbo(const TokenSequence& x0, int K, int n_time_pairs, DrawStreams& draws,
                      const ParamStore& store, const ModelConfig& cfg, double t_min) {
  const int ks[1] = {K};
  return k_sample_delbo_nested(x0, ks, n_time_pairs, draws, store, cfg, t_min)[0];
}

double mdlm_elbo_estimate(const TokenSequence& x0, int n_time_pairs, DrawStreams& draws, const ParamStore& store,
                          const ModelConfig& cfg, double t_min) {
  if (n_time_pairs < 1) throw UsageError("mdlm_elbo_estimate: n_time_pairs must be >= 1");
  double acc = 0.0;
  for (int p = 0; p < n_time_pairs; ++p) {
    const double t = draws.time.uniform(t_min, 1.0);
    const TokenSequence xt = masking::forward_mask(x0, t, draws.mask);
    if (xt.masked_count() == 0) continue;
    const diff::Tensor log_mu = [&] {
      Graph g;
      const double ts[1] = {t};
      return g.value(models::denoiser_log_probs(g, store, cfg, std::span(&xt, 1), ts, std::nullopt));
    }();
    acc += masking::loss_weight(t, 0.0) * masked_log_likelihood(x0, xt, log_mu);
  }
  return acc / static_cast<double>(n_time_pairs);
}

}  // namespace objective
}  // namespace vadd
