#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vadd/diff/graph.hpp"
#include "vadd/diff/ops.hpp"
#include "vadd/error.hpp"
#include "vadd/models.hpp"
#include "vadd/objective.hpp"

using namespace vadd;

namespace {

ModelConfig tiny(int vocab = 9, int seq_len = 2) {
  ModelConfig cfg;
  cfg.vocab = vocab;
  cfg.seq_len = seq_len;
  cfg.width = 16;
  cfg.time_features = 8;
  return cfg;
}

/// Zeroes the last recognizer layer so every posterior is N(0, I).
void pin_recognizer(diff::ParamStore& store, const ModelConfig& cfg) {
  const std::string last = "rec.head." + std::to_string(cfg.head_layers - 1) + ".";
  store.get_mut(last + "W").fill(0.0);
  store.get_mut(last + "b").fill(0.0);
}

/// Zeroes the last readout layer so every row of mu is uniform.
void uniform_readout(diff::ParamStore& store, const ModelConfig& cfg) {
  const std::string last = "den.out." + std::to_string(cfg.readout_layers - 1) + ".";
  store.get_mut(last + "W").fill(0.0);
  store.get_mut(last + "b").fill(0.0);
}

diff::Tensor uniform_log_mu(std::size_t rows, int V) { return diff::Tensor({rows, static_cast<std::size_t>(V)}, -std::log(V)); }

}  // namespace

TEST_CASE("masked_log_likelihood examples") {
  const TokenSequence x0({4, 2}, 100);
  CHECK(objective::masked_log_likelihood(x0, x0, uniform_log_mu(2, 100)) == 0.0);
  CHECK(objective::masked_log_likelihood(x0, TokenSequence({4, 100}, 100), uniform_log_mu(2, 100)) ==
        doctest::Approx(std::log(0.01)).epsilon(1e-15));
  CHECK_THROWS_AS(objective::masked_log_likelihood(x0, TokenSequence({5, 100}, 100), uniform_log_mu(2, 100)),
                  UsageError);
}

TEST_CASE("masked_log_likelihood matches a product-then-log enumeration") {
  Rng rng(1, Stream::test);
  const int V = 6, N = 4;
  for (int trial = 0; trial < 20; ++trial) {
    diff::Tensor probs({N, V});
    for (int i = 0; i < N; ++i) {
      double s = 0.0;
      for (int j = 0; j < V; ++j) s += probs.at(i, j) = rng.uniform(0.05, 1.0);
      for (int j = 0; j < V; ++j) probs.at(i, j) /= s;
    }
    diff::Tensor log_mu = probs;
    for (double& v : log_mu.data()) v = std::log(v);
    std::vector<int> a(N), b(N);
    double prod = 1.0;
    for (int i = 0; i < N; ++i) {
      a[i] = static_cast<int>(rng.below(V));
      const bool masked = rng.uniform() < 0.5;
      b[i] = masked ? V : a[i];
      if (masked) prod *= probs.at(i, a[i]);
    }
    const TokenSequence x0(a, V), xt(b, V);
    CHECK(std::abs(objective::masked_log_likelihood(x0, xt, log_mu) - std::log(prod)) < 1e-12);
    diff::Graph g;
    const auto node = objective::masked_log_likelihood(g, std::span(&x0, 1), std::span(&xt, 1), g.constant(log_mu));
    CHECK(std::abs(g.value(node)[0] - std::log(prod)) < 1e-12);
  }
}

TEST_CASE("gauss_kl closed form") {
  CHECK(objective::gauss_kl(models::GaussianPosterior{{0.0, 0.0}, {1.0, 1.0}}) == 0.0);
  CHECK(objective::gauss_kl(models::GaussianPosterior{{1.0}, {1.0}}) == doctest::Approx(0.5).epsilon(1e-15));
  Rng rng(2, Stream::test);
  for (int k = 0; k < 100; ++k) {
    const models::GaussianPosterior p{{rng.normal(), rng.normal()}, {rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0)}};
    CHECK(objective::gauss_kl(p) >= 0.0);
  }
}

TEST_CASE("gauss_kl agrees with a Monte Carlo log-ratio average") {
  const models::GaussianPosterior p{{0.7, -1.2}, {0.6, 1.8}};
  Rng rng(3, Stream::test);
  const int n = 1000000;
  double s = 0.0, ss = 0.0;
  for (int k = 0; k < n; ++k) {
    double log_ratio = 0.0;
    for (int j = 0; j < 2; ++j) {
      const double e = rng.normal(), z = p.mean[j] + p.std[j] * e;
      const double log_r = -0.5 * e * e - std::log(p.std[j]) - 0.5 * std::log(2 * std::numbers::pi);
      const double log_p = -0.5 * z * z - 0.5 * std::log(2 * std::numbers::pi);
      log_ratio += log_r - log_p;
    }
    s += log_ratio;
    ss += log_ratio * log_ratio;
  }
  const double mean = s / n, se = std::sqrt((ss / n - mean * mean) / n);
  CHECK(std::abs(mean - objective::gauss_kl(p)) < 4 * se);
}

TEST_CASE("kl_anneal_weight") {
  const AnnealSchedule a{100};
  CHECK(kl_anneal_weight(0, a) == 0.0);
  CHECK(kl_anneal_weight(50, a) == 0.5);
  CHECK(kl_anneal_weight(100, a) == 1.0);
  CHECK(kl_anneal_weight(1000, a) == 1.0);
  CHECK(kl_anneal_weight(0, AnnealSchedule{0}) == 1.0);
  double prev = 0.0;
  for (std::size_t h = 0; h < 150; ++h) {
    CHECK(kl_anneal_weight(h, a) >= prev);
    prev = kl_anneal_weight(h, a);
  }
}

TEST_CASE("delbo_term at t = 1 with lambda = 0 is the full masked log-likelihood") {
  const ModelConfig cfg = tiny();
  const auto store = models::init_model(cfg, ModelKind::vadd, 4);
  const TokenSequence x0({3, 5}, cfg.vocab);
  DrawStreams draws = DrawStreams::derive(4, 0);
  const LossBreakdown b = objective::delbo_term(x0, 1.0, draws, store, cfg, 0.0);
  CHECK(b.n_masked == 2);
  CHECK(b.total == b.recon);
  CHECK(b.lambda == 0.0);
  // the recon term is weight(1) = 1 times a sum of two log-probabilities
  CHECK(b.recon < 0.0);
  CHECK(b.total == doctest::Approx(b.recon - b.lambda * b.kl).epsilon(1e-15));
}

TEST_CASE("delbo_term with no masked tokens reduces to the KL penalty") {
  const ModelConfig cfg = tiny();
  const auto store = models::init_model(cfg, ModelKind::vadd, 5);
  const TokenSequence x0({3, 5}, cfg.vocab);
  DrawStreams draws = DrawStreams::derive(5, 0);
  const LossBreakdown b = objective::delbo_term(x0, 1e-12, draws, store, cfg, 0.7);
  REQUIRE(b.n_masked == 0);
  CHECK(b.recon == 0.0);
  CHECK(b.kl > 0.0);
  CHECK(b.total == doctest::Approx(-0.7 * b.kl).epsilon(1e-14));
}

TEST_CASE("pinned recognizer contributes zero KL") {
  const ModelConfig cfg = tiny();
  auto store = models::init_model(cfg, ModelKind::vadd, 6);
  pin_recognizer(store, cfg);
  const TokenSequence x0({3, 5}, cfg.vocab);
  DrawStreams draws = DrawStreams::derive(6, 0);
  const LossBreakdown b = objective::delbo_term(x0, 0.6, draws, store, cfg, 1.0);
  CHECK(b.kl == 0.0);
  CHECK(b.total == b.recon);
}

TEST_CASE("MDLM ELBO term: uniform mu and no-mask cases") {
  const ModelConfig cfg = tiny(100, 1);
  auto store = models::init_model(cfg, ModelKind::mdlm, 7);
  uniform_readout(store, cfg);
  const TokenSequence x0({42}, 100);
  bool seen_masked = false, seen_clean = false;
  for (std::uint32_t sub = 0; sub < 64 && !(seen_masked && seen_clean); ++sub) {
    DrawStreams draws = DrawStreams::derive(7, sub);
    diff::Graph g;
    const double t[1] = {0.5};
    const auto terms = objective::elbo_terms_mdlm(g, store, cfg, std::span(&x0, 1), t, draws);
    const double v = g.value(terms.values)[0];
    if (terms.parts[0].n_masked == 1) {
      seen_masked = true;
      CHECK(v == doctest::Approx(2.0 * std::log(0.01)).epsilon(1e-13));
      CHECK(v == doctest::Approx(-9.2103).epsilon(1e-4));
    } else {
      seen_clean = true;
      CHECK(v == 0.0);
    }
  }
  CHECK(seen_masked);
  CHECK(seen_clean);
}

TEST_CASE("MDLM ELBO equals DELBO with lambda 0 and the z pathway zeroed") {
  const ModelConfig cfg = tiny();
  auto vadd_store = models::init_model(cfg, ModelKind::vadd, 8);
  vadd_store.get_mut("den.z.0.W").fill(0.0);
  vadd_store.get_mut("den.z.0.b").fill(0.0);
  auto mdlm_store = models::init_model(cfg, ModelKind::mdlm, 99);
  mdlm_store.copy_shared_from(vadd_store);
  Rng rng(8, Stream::test);
  std::vector<TokenSequence> x0;
  std::vector<double> t;
  for (int b = 0; b < 32; ++b) {
    x0.emplace_back(std::vector<int>{static_cast<int>(rng.below(9)), static_cast<int>(rng.below(9))}, 9);
    t.push_back(rng.uniform(kDefaultTMin, 1.0));
  }
  DrawStreams dv = DrawStreams::derive(8, 1), dm = DrawStreams::derive(8, 1);
  diff::Graph gv, gm;
  const auto a = objective::delbo_terms(gv, vadd_store, cfg, x0, t, 0.0, dv);
  const auto b = objective::elbo_terms_mdlm(gm, mdlm_store, cfg, x0, t, dm);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(std::abs(gv.value(a.values)[i] - gm.value(b.values)[i]) < 1e-10);
}

TEST_CASE("batch_loss: B = 1 is the negated DELBO term and lambda = 1 matches the unannealed bound") {
  const ModelConfig cfg = tiny();
  const auto store = models::init_model(cfg, ModelKind::vadd, 9);
  const TokenSequence x0({1, 8}, cfg.vocab);
  DrawStreams d1 = DrawStreams::derive(9, 3), d2 = DrawStreams::derive(9, 3);
  diff::Graph g;
  const auto bl = objective::batch_loss(g, store, cfg, ModelKind::vadd, std::span(&x0, 1), 10, AnnealSchedule{10},
                                        kDefaultTMin, d1);
  const double t = objective::sample_times(1, kDefaultTMin, d2.time)[0];
  const LossBreakdown single = objective::delbo_term(x0, t, d2, store, cfg, 1.0);
  CHECK(g.value(bl.loss).item() == -single.total);
  CHECK(bl.mean.lambda == 1.0);
  CHECK_THROWS_AS(objective::batch_loss(g, store, cfg, ModelKind::vadd, {}, 0, AnnealSchedule{1}, kDefaultTMin, d1),
                  UsageError);
}

TEST_CASE("identical elements with identical draws contribute identically") {
  const ModelConfig cfg = tiny();
  const auto store = models::init_model(cfg, ModelKind::vadd, 10);
  const TokenSequence x0({2, 2}, cfg.vocab);
  DrawStreams a = DrawStreams::derive(10, 5), b = DrawStreams::derive(10, 5);
  const auto la = objective::delbo_term(x0, 0.7, a, store, cfg, 0.5);
  const auto lb = objective::delbo_term(x0, 0.7, b, store, cfg, 0.5);
  CHECK(la.total == lb.total);
  CHECK(la.kl == lb.kl);
}

TEST_CASE("training overfits a point-mass dataset") {
  const ModelConfig cfg = tiny();
  for (ModelKind kind : {ModelKind::vadd, ModelKind::mdlm}) {
    auto store = models::init_model(cfg, kind, 11);
    const std::vector<TokenSequence> batch(32, TokenSequence({4, 7}, cfg.vocab));
    double first = 0.0, last = 0.0;
    for (std::size_t h = 0; h < 200; ++h) {
      DrawStreams draws = DrawStreams::derive(11, static_cast<std::uint32_t>(h));
      diff::Graph g;
      const auto bl = objective::batch_loss(g, store, cfg, kind, batch, h, AnnealSchedule{50}, kDefaultTMin, draws);
      const double loss = g.value(bl.loss).item();
      if (h == 0) first = loss;
      last = loss;
      diff::adam_step(store, diff::backward(g, bl.loss, store), 1e-2);
    }
    CAPTURE(to_string(kind));
    CHECK(first > 1.0);
    CHECK(last < 0.1);
  }
}

TEST_CASE("log_mean_exp") {
  const std::vector<double> same(10, -3.25);
  CHECK(objective::log_mean_exp(same) == doctest::Approx(-3.25).epsilon(1e-15));
  const std::vector<double> v{-1000.0, -1001.0};
  CHECK(objective::log_mean_exp(v) == doctest::Approx(-1000.0 + std::log((1 + std::exp(-1.0)) / 2)).epsilon(1e-14));
}

TEST_CASE("K = 1 sample DELBO is the single-sample importance estimator") {
  const ModelConfig cfg = tiny();
  const auto store = models::init_model(cfg, ModelKind::vadd, 12);
  const TokenSequence x0({6, 1}, cfg.vocab);
  for (std::uint32_t sub = 0; sub < 10; ++sub) {
    DrawStreams a = DrawStreams::derive(12, sub), b = DrawStreams::derive(12, sub);
    const double got = objective::k_sample_delbo(x0, 1, 1, a, store, cfg);
    const double t = b.time.uniform(kDefaultTMin, 1.0);
    const TokenSequence xt = masking::forward_mask(x0, t, b.mask);
    const auto post = models::recognize(x0, xt, t, store, cfg);
    std::vector<double> z(2);
    double log_ratio = 0.0;
    for (int j = 0; j < 2; ++j) {
      const double e = b.latent.normal();
      z[j] = post.mean[j] + post.std[j] * e;
      log_ratio += (-0.5 * z[j] * z[j]) - (-0.5 * e * e - std::log(post.std[j]));
    }
    const double ll = objective::masked_log_likelihood(x0, xt, [&] {
      auto mu = models::denoise(xt, z, t, store, cfg);
      for (double& v : mu.data()) v = std::log(v);
      return mu;
    }());
    CHECK(got == doctest::Approx((ll + log_ratio) / t).epsilon(1e-10));
  }
}

TEST_CASE("nested K-sample DELBO is nondecreasing in K") {
  const ModelConfig cfg = tiny();
  const auto store = models::init_model(cfg, ModelKind::vadd, 13);
  Rng rng(13, Stream::test);
  const std::vector<int> Ks{1, 10, 100};
  std::vector<double> mean(3, 0.0);
  for (std::uint32_t i = 0; i < 100; ++i) {
    const TokenSequence x0({static_cast<int>(rng.below(9)), static_cast<int>(rng.below(9))}, 9);
    DrawStreams d = DrawStreams::derive(13, i);
    const auto v = objective::k_sample_delbo_nested(x0, Ks, 5, d, store, cfg);
    CHECK(v[0] <= v[1]);
    CHECK(v[1] <= v[2]);
    for (int k = 0; k < 3; ++k) mean[k] += v[k] / 100.0;
  }
  CHECK(mean[0] <= mean[1]);
  CHECK(mean[1] <= mean[2]);
  const int bad[2] = {10, 1};
  DrawStreams d = DrawStreams::derive(13, 0);
  CHECK_THROWS_AS(objective::k_sample_delbo_nested(TokenSequence({1, 1}, 9), bad, 1, d, store, cfg), UsageError);
}

TEST_CASE("nested estimator at the largest K matches the single-K estimator") {
  const ModelConfig cfg = tiny();
  const auto store = models::init_model(cfg, ModelKind::vadd, 14);
  const TokenSequence x0({3, 7}, 9);
  const std::vector<int> Ks{1, 5, 20};
  DrawStreams a = DrawStreams::derive(14, 2), b = DrawStreams::derive(14, 2);
  const auto nested = objective::k_sample_delbo_nested(x0, Ks, 4, a, store, cfg);
  CHECK(nested[2] == objective::k_sample_delbo(x0, 20, 4, b, store, cfg));
}
