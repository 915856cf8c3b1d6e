#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vadd/diff/params.hpp"
#include "vadd/masking.hpp"
#include "vadd/models.hpp"
#include "vadd/rng.hpp"

namespace vadd::eval {

/// bins x bins counts over two-token sequences; cell (a, b) holds token
/// pairs (x0 = a, x1 = b) at index a * bins + b.
class Histogram2D {
 public:
  explicit Histogram2D(int bins = 100);
  static Histogram2D from_tokens(std::span<const TokenSequence> seqs, int bins);

  void add(int a, int b);
  int bins() const noexcept { return bins_; }
  std::uint64_t count(int a, int b) const { return counts_.at(static_cast<std::size_t>(a * bins_ + b)); }
  std::uint64_t total() const noexcept { return total_; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

 private:
  int bins_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// 0.5 KL(p||m) + 0.5 KL(q||m) in nats, m = (p + q) / 2, 0 log 0 = 0.
double js_divergence(const Histogram2D& p, const Histogram2D& q);

struct QuadratureRule {
  std::vector<double> nodes;    // standard-normal abscissae
  std::vector<double> weights;  // sum to 1
};

/// Gauss-Hermite rule for E[f(Z)], Z ~ N(0, 1), from the Golub-Welsch
/// eigenproblem of the physicists' Hermite recurrence.
QuadratureRule gauss_hermite(int n);

/// Tensor-product rule E[f(Z)] for Z ~ N(0, I_d).
double gauss_hermite_expectation(const std::function<double(std::span<const double>)>& f, int dim,
                                 int nodes_per_dim);

/// log p(x0 | xt, t) = log E_{z ~ N(0,I)} p(x0 | xt, z, t) by quadrature,
/// accumulated in log space. Latent-free stores are evaluated directly.
double quadrature_logp(const TokenSequence& x0, const TokenSequence& xt, double t, const diff::ParamStore& store,
                       const ModelConfig& cfg, int nodes_per_dim = 30);

/// M independent single-draw DELBO terms log p(x0 | xt, z, t) - KL(q || p)
/// at a fixed (x0, xt, t), z drawn from the recognizer by reparameterization.
std::vector<double> delbo_draws(const TokenSequence& x0, const TokenSequence& xt, double t, int M, Rng& rng,
                                const diff::ParamStore& store, const ModelConfig& cfg);

/// q(x_s | x_t, x_0) from Bayes' rule, enumerating all V+1 states of x_s.
std::vector<double> posterior_oracle(int x0_i, int xt_i, double s, double t, int vocab);

/// Chi-square goodness-of-fit of masked-token counts over `trials`
/// sequences of length N at time t against Binomial(N, 1 - alpha(t)),
/// pooling tail bins until every expected count is >= 5. Degenerate
/// t (all-zero or all-N counts) returns 1.
double mask_count_test(double t, int N, int trials, Rng& rng);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double statistic, double dof);

struct NllResult {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> per_sequence;
};

struct NllOptions {
  int K = 1000;
  int n_time_pairs = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  double t_min = kDefaultTMin;
};

/// Mean over sequences of -k_sample_delbo (VADD) or -ELBO (MDLM).
/// Sequence i draws from substream i, so two models evaluated with the same
/// seed see the same (t, xt) pairs.
NllResult nll(std::span<const TokenSequence> tokens, const diff::ParamStore& store, const ModelConfig& cfg,
              const NllOptions& opts);

}  // namespace vadd::eval
