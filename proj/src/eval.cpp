#include "vadd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "vadd/diff/graph.hpp"
#include "vadd/error.hpp"
#include "vadd/objective.hpp"
#include "vadd/parallel.hpp"

namespace vadd::eval {

Histogram2D::Histogram2D(int bins) : bins_(bins), counts_(static_cast<std::size_t>(bins) * bins, 0) {
  if (bins < 1) throw UsageError("histogram: bins must be >= 1");
}

Histogram2D Histogram2D::from_tokens(std::span<const TokenSequence> seqs, int bins) {
  Histogram2D h(bins);
  for (const TokenSequence& s : seqs) {
    if (s.size() != 2) throw UsageError("histogram: sequences must have two tokens");
    h.add(s.tokens[0], s.tokens[1]);
  }
  return h;
}

void Histogram2D::add(int a, int b) {
  if (a < 0 || b < 0 || a >= bins_ || b >= bins_) throw UsageError("histogram: token outside the grid");
  ++counts_[static_cast<std::size_t>(a * bins_ + b)];
  ++total_;
}

double js_divergence(const Histogram2D& p, const Histogram2D& q) {
  if (p.total() == 0 || q.total() == 0) throw UsageError("js_divergence: empty histogram");
  if (p.bins() != q.bins()) throw UsageError("js_divergence: histogram sizes differ");
  const double np = static_cast<double>(p.total()), nq = static_cast<double>(q.total());
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.counts().size(); ++i) {
    const double pi = static_cast<double>(p.counts()[i]) / np;
    const double qi = static_cast<double>(q.counts()[i]) / nq;
    const double m = 0.5 * (pi + qi);
    if (pi > 0.0) kl_p += pi * std::log(pi / m);
    if (qi > 0.0) kl_q += qi * std::log(qi / m);
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, std::numbers::ln2);
}

QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw UsageError("gauss_hermite: need at least one node");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    rule.nodes[static_cast<std::size_t>(i)] = std::numbers::sqrt2 * es.eigenvalues()(i);
    rule.weights[static_cast<std::size_t>(i)] = v0 * v0;
  }
  return rule;
}

namespace {

/// Each grid point of the tensor-product rule with its log weight.
void tensor_grid(const QuadratureRule& rule, int dim, std::vector<double>& points, std::vector<double>& log_w) {
  const std::size_t n = rule.nodes.size();
  std::size_t total = 1;
  for (int j = 0; j < dim; ++j) total *= n;
  points.assign(total * static_cast<std::size_t>(dim), 0.0);
  log_w.assign(total, 0.0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (int j = 0; j < dim; ++j) {
      const std::size_t k = rem % n;
      rem /= n;
      points[flat * static_cast<std::size_t>(dim) + static_cast<std::size_t>(j)] = rule.nodes[k];
      log_w[flat] += std::log(rule.weights[k]);
    }
  }
}

}  // namespace

double gauss_hermite_expectation(const std::function<double(std::span<const double>)>& f, int dim,
                                 int nodes_per_dim) {
  if (dim < 1 || dim > 3) throw UsageError("gauss_hermite_expectation: dimension must be 1..3");
  std::vector<double> pts, log_w;
  tensor_grid(gauss_hermite(nodes_per_dim), dim, pts, log_w);
  double acc = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i)
    acc += std::exp(log_w[i]) * f(std::span(pts.data() + i * static_cast<std::size_t>(dim),
                                            static_cast<std::size_t>(dim)));
  return acc;
}

double quadrature_logp(const TokenSequence& x0, const TokenSequence& xt, double t, const diff::ParamStore& store,
                       const ModelConfig& cfg, int nodes_per_dim) {
  if (!models::has_latent_pathway(store)) {
    diff::Graph g;
    const double ts[1] = {t};
    const auto lm = models::denoiser_log_probs(g, store, cfg, std::span(&xt, 1), ts, std::nullopt);
    return g.value(objective::masked_log_likelihood(g, std::span(&x0, 1), std::span(&xt, 1), lm))[0];
  }
  const int d = cfg.latent_dim;
  if (d < 1 || d > 3) throw UsageError("quadrature_logp: latent dimension must be at most 3");
  std::vector<double> pts, log_w;
  tensor_grid(gauss_hermite(nodes_per_dim), d, pts, log_w);
  const std::size_t n = log_w.size();

  diff::Graph g;
  const std::vector<TokenSequence> xs(n, xt), x0s(n, x0);
  const auto z = g.constant(diff::Tensor({n, static_cast<std::size_t>(d)}, pts));
  const auto lm = models::denoiser_log_probs_shared(g, store, cfg, xt, t, z);
  const diff::Tensor& ll = g.value(objective::masked_log_likelihood(g, x0s, xs, lm));
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) terms[i] = log_w[i] + ll[i];
  const double mx = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double v : terms) s += std::exp(v - mx);
  return mx + std::log(s);
}

std::vector<double> delbo_draws(const TokenSequence& x0, const TokenSequence& xt, double t, int M, Rng& rng,
                                const diff::ParamStore& store, const ModelConfig& cfg) {
  if (M < 1) throw UsageError("delbo_draws: need at least one draw");
  const models::GaussianPosterior post = models::recognize(x0, xt, t, store, cfg);
  const double kl = objective::gauss_kl(post);
  const auto d = static_cast<std::size_t>(cfg.latent_dim);
  const auto m = static_cast<std::size_t>(M);
  diff::Tensor z({m, d});
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < d; ++j) z.at(k, j) = post.mean[j] + post.std[j] * rng.normal();
  diff::Graph g;
  const std::vector<TokenSequence> xs(m, xt), x0s(m, x0);
  const auto lm = models::denoiser_log_probs_shared(g, store, cfg, xt, t, g.constant(z));
  const diff::Tensor& ll = g.value(objective::masked_log_likelihood(g, x0s, xs, lm));
  std::vector<double> out(m);
  for (std::size_t k = 0; k < m; ++k) out[k] = ll[k] - kl;
  return out;
}

std::vector<double> posterior_oracle(int x0_i, int xt_i, double s, double t, int vocab) {
  if (!(s < t)) throw UsageError("posterior_oracle: requires s < t");
  const double as = LinearSchedule::alpha(s), at = LinearSchedule::alpha(t);
  const int mask = vocab;
  // q(x_t | x_s): an unmasked x_s survives to t with probability alpha_t / alpha_s.
  auto forward_st = [&](int xs, int xt) {
    if (xs == mask) return xt == mask ? 1.0 : 0.0;
    if (xt == mask) return 1.0 - at / as;
    return xt == xs ? at / as : 0.0;
  };
  auto forward_0s = [&](int xs) {
    if (xs == mask) return 1.0 - as;
    return xs == x0_i ? as : 0.0;
  };
  std::vector<double> p(static_cast<std::size_t>(vocab) + 1);
  double z = 0.0;
  for (int xs = 0; xs <= vocab; ++xs) {
    p[static_cast<std::size_t>(xs)] = forward_st(xs, xt_i) * forward_0s(xs);
    z += p[static_cast<std::size_t>(xs)];
  }
  if (z == 0.0) {
    // x_t unmasked but different from x_0 has zero joint probability; the
    // reverse kernel still copies an unmasked token.
    std::fill(p.begin(), p.end(), 0.0);
    p[static_cast<std::size_t>(xt_i)] = 1.0;
    return p;
  }
  for (double& v : p) v /= z;
  return p;
}

double chi_square_sf(double statistic, double dof) {
  if (dof <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, statistic / 2.0);
}

double mask_count_test(double t, int N, int trials, Rng& rng) {
  if (trials < 1000) throw UsageError("mask_count_test: need at least 1000 trials");
  const double p_mask = 1.0 - LinearSchedule::alpha(t);
  const TokenSequence x0(std::vector<int>(static_cast<std::size_t>(N), 0), 1);
  std::vector<double> observed(static_cast<std::size_t>(N) + 1, 0.0);
  for (int k = 0; k < trials; ++k) observed[masking::forward_mask(x0, t, rng).masked_count()] += 1.0;
  if (p_mask <= 0.0 || p_mask >= 1.0) return 1.0;

  const boost::math::binomial_distribution<double> binom(N, p_mask);
  std::vector<double> expected(observed.size());
  for (std::size_t k = 0; k < expected.size(); ++k)
    expected[k] = trials * boost::math::pdf(binom, static_cast<double>(k));

  // Pool from both tails towards the mode until each bin expects >= 5.
  std::vector<std::pair<double, double>> bins;  // (observed, expected)
  const std::size_t mode = static_cast<std::size_t>(std::max_element(expected.begin(), expected.end()) -
                                                    expected.begin());
  auto pool = [&](auto first, auto last) {
    std::vector<std::pair<double, double>> out;
    double o = 0.0, e = 0.0;
    for (auto it = first; it != last; ++it) {
      o += observed[*it];
      e += expected[*it];
      if (e >= 5.0) {
        out.emplace_back(o, e);
        o = e = 0.0;
      }
    }
    return std::make_tuple(out, o, e);
  };
  std::vector<std::size_t> left, right;
  for (std::size_t k = 0; k < mode; ++k) left.push_back(k);
  for (std::size_t k = expected.size(); k-- > mode + 1;) right.push_back(k);
  auto [lbins, lo, le] = pool(left.begin(), left.end());
  auto [rbins, ro, re] = pool(right.begin(), right.end());
  bins.insert(bins.end(), lbins.begin(), lbins.end());
  bins.emplace_back(observed[mode] + lo + ro, expected[mode] + le + re);
  bins.insert(bins.end(), rbins.begin(), rbins.end());
  if (bins.size() < 2) return 1.0;

  double stat = 0.0;
  for (const auto& [o, e] : bins) stat += (o - e) * (o - e) / e;
  return chi_square_sf(stat, static_cast<double>(bins.size() - 1));
}

NllResult nll(std::span<const TokenSequence> tokens, const diff::ParamStore& store, const ModelConfig& cfg,
              const NllOptions& opts) {
  if (tokens.empty()) throw UsageError("nll: no sequences");
  NllResult out;
  out.per_sequence.resize(tokens.size());
  const bool latent = models::has_latent_pathway(store);
  parallel_for(tokens.size(), opts.threads, 16, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      DrawStreams draws = DrawStreams::derive(opts.seed, static_cast<std::uint32_t>(i));
      const double bound =
          latent ? objective::k_sample_delbo(tokens[i], opts.K, opts.n_time_pairs, draws, store, cfg, opts.t_min)
                 : objective::mdlm_elbo_estimate(tokens[i], opts.n_time_pairs, draws, store, cfg, opts.t_min);
      out.per_sequence[i] = -bound;
    }
  });
  double sum = 0.0;
  for (double v : out.per_sequence) sum += v;
  out.mean = sum / static_cast<double>(tokens.size());
  double ss = 0.0;
  for (double v : out.per_sequence) ss += (v - out.mean) * (v - out.mean);
  if (tokens.size() > 1)
    out.std_error = std::sqrt(ss / static_cast<double>(tokens.size() - 1) / static_cast<double>(tokens.size()));
  return out;
}

}  // namespace vadd::eval
