#include <doctest.h>

#include <cmath>
#include <numbers>

#include "vadd/datagen.hpp"
#include "vadd/error.hpp"
#include "vadd/eval.hpp"
#include "vadd/models.hpp"

using namespace vadd;

namespace {

ModelConfig tiny(int vocab, int seq_len, int latent_dim = 2) {
  ModelConfig cfg;
  cfg.vocab = vocab;
  cfg.seq_len = seq_len;
  cfg.latent_dim = latent_dim;
  cfg.width = 16;
  cfg.time_features = 8;
  return cfg;
}

void zero_prefix(diff::ParamStore& store, const std::string& prefix) {
  for (const auto& [name, _] : store.entries())
    if (name.rfind(prefix, 0) == 0) store.get_mut(name).fill(0.0);
}

}  // namespace

TEST_CASE("js_divergence: identical, disjoint and guarded inputs") {
  eval::Histogram2D p(4), q(4), empty(4);
  p.add(0, 0);
  p.add(1, 2);
  q.add(0, 0);
  q.add(1, 2);
  CHECK(eval::js_divergence(p, q) == 0.0);
  eval::Histogram2D r(4);
  r.add(3, 3);
  CHECK(eval::js_divergence(p, r) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK_THROWS_AS(eval::js_divergence(p, empty), UsageError);
  CHECK_THROWS_AS(eval::js_divergence(empty, p), UsageError);
}

TEST_CASE("js_divergence: two-bin hand computation") {
  eval::Histogram2D p(2), q(2);
  p.add(0, 0);
  p.add(0, 1);
  for (int k = 0; k < 3; ++k) q.add(0, 0);
  q.add(0, 1);
  const double m0 = 0.625, m1 = 0.375;
  const double kl_p = 0.5 * std::log(0.5 / m0) + 0.5 * std::log(0.5 / m1);
  const double kl_q = 0.75 * std::log(0.75 / m0) + 0.25 * std::log(0.25 / m1);
  CHECK(std::abs(eval::js_divergence(p, q) - 0.5 * (kl_p + kl_q)) < 1e-12);
  CHECK(eval::js_divergence(p, q) == eval::js_divergence(q, p));
}

TEST_CASE("js_divergence stays in [0, ln 2] and is symmetric on random histograms") {
  Rng rng(1, Stream::test);
  for (int k = 0; k < 20; ++k) {
    eval::Histogram2D p(5), q(5);
    for (int i = 0; i < 50; ++i) p.add(static_cast<int>(rng.below(5)), static_cast<int>(rng.below(3)));
    for (int i = 0; i < 70; ++i) q.add(static_cast<int>(rng.below(2)), static_cast<int>(rng.below(5)));
    const double a = eval::js_divergence(p, q);
    CHECK(a >= 0.0);
    CHECK(a <= std::numbers::ln2);
    CHECK(std::abs(a - eval::js_divergence(q, p)) < 1e-15);
  }
}

TEST_CASE("histogram totals count contributing samples") {
  std::vector<TokenSequence> s{TokenSequence({1, 2}, 100), TokenSequence({1, 2}, 100), TokenSequence({99, 0}, 100)};
  const auto h = eval::Histogram2D::from_tokens(s, 100);
  CHECK(h.total() == 3);
  CHECK(h.count(1, 2) == 2);
  CHECK(h.count(99, 0) == 1);
  CHECK_THROWS_AS(eval::Histogram2D::from_tokens(std::vector<TokenSequence>{TokenSequence({1, 100}, 100)}, 100),
                  UsageError);
}

TEST_CASE("split halves of a ground-truth pool sit at the sampling-noise floor") {
  data::DatasetSpec spec;
  spec.seed = 5;
  spec.n = 100000;
  const auto tokens = data::make_dataset(spec).tokens;
  const std::span<const TokenSequence> all(tokens);
  const auto a = eval::Histogram2D::from_tokens(all.subspan(0, 50000), 100);
  const auto b = eval::Histogram2D::from_tokens(all.subspan(50000), 100);
  // Small-deviation expansion: E[JS] ~ (k / 8) (1/n1 + 1/n2) with k = 5000 occupied bins.
  const double floor = 5000.0 / 8.0 * (2.0 / 50000.0);
  const double js = eval::js_divergence(a, b);
  CHECK(js < 0.035);
  CHECK(std::abs(js - floor) < 0.15 * floor);
}

TEST_CASE("Gauss-Hermite rule integrates Gaussian moments") {
  const auto rule = eval::gauss_hermite(30);
  double w = 0.0, m2 = 0.0, m4 = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    w += rule.weights[i];
    m2 += rule.weights[i] * std::pow(rule.nodes[i], 2);
    m4 += rule.weights[i] * std::pow(rule.nodes[i], 4);
  }
  CHECK(std::abs(w - 1.0) < 1e-13);
  CHECK(std::abs(m2 - 1.0) < 1e-12);
  CHECK(std::abs(m4 - 3.0) < 1e-11);
}

TEST_CASE("Gauss-Hermite: E[exp(z - z^2/2)] = e^(1/4) / sqrt 2") {
  const double exact = std::exp(0.25) / std::sqrt(2.0);
  const double got =
      eval::gauss_hermite_expectation([](std::span<const double> z) { return std::exp(z[0] - 0.5 * z[0] * z[0]); }, 1, 30);
  CHECK(std::abs(got - exact) / exact < 1e-8);
  const double two_d = eval::gauss_hermite_expectation(
      [](std::span<const double> z) { return std::exp(z[0] - 0.5 * z[0] * z[0]) * std::exp(z[1] - 0.5 * z[1] * z[1]); },
      2, 30);
  CHECK(std::abs(two_d - exact * exact) / (exact * exact) < 1e-8);
}

TEST_CASE("quadrature_logp: z-independent denoiser gives the plain log-likelihood") {
  const ModelConfig cfg = tiny(9, 2);
  auto store = models::init_model(cfg, ModelKind::vadd, 2);
  zero_prefix(store, "den.z.");
  const TokenSequence x0({3, 4}, 9), xt({3, 9}, 9);
  const double t = 0.6;
  const double z[2] = {0.0, 0.0};
  auto mu = models::denoise(xt, z, t, store, cfg);
  const double plain = std::log(mu.at(1, 4));
  CHECK(std::abs(eval::quadrature_logp(x0, xt, t, store, cfg) - plain) < 1e-10);
}

TEST_CASE("quadrature_logp: latent-free store and dimension guard") {
  const ModelConfig cfg = tiny(9, 2);
  const auto mdlm = models::init_model(cfg, ModelKind::mdlm, 3);
  const TokenSequence x0({3, 4}, 9), xt({9, 9}, 9);
  auto mu = models::denoise(xt, {}, 0.5, mdlm, cfg);
  CHECK(std::abs(eval::quadrature_logp(x0, xt, 0.5, mdlm, cfg) - std::log(mu.at(0, 3) * mu.at(1, 4))) < 1e-12);
  const ModelConfig wide = tiny(9, 2, 4);
  const auto big = models::init_model(wide, ModelKind::vadd, 3);
  CHECK_THROWS_AS(eval::quadrature_logp(x0, xt, 0.5, big, wide), UsageError);
}

TEST_CASE("quadrature_logp upper-bounds single-draw DELBO terms") {
  const ModelConfig cfg = tiny(9, 2);
  const auto store = models::init_model(cfg, ModelKind::vadd, 4);
  Rng rng(4, Stream::test);
  for (int c = 0; c < 10; ++c) {
    const TokenSequence x0({static_cast<int>(rng.below(9)), static_cast<int>(rng.below(9))}, 9);
    const TokenSequence xt({9, c % 2 ? 9 : x0.tokens[1]}, 9);
    const auto terms = eval::delbo_draws(x0, xt, 0.5, 2000, rng, store, cfg);
    double mean = 0.0, ss = 0.0;
    for (double v : terms) mean += v / 2000.0;
    for (double v : terms) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / 1999.0 / 2000.0);
    CHECK(mean <= eval::quadrature_logp(x0, xt, 0.5, store, cfg) + 3 * se);
  }
}

TEST_CASE("posterior_oracle cases") {
  const auto unmasked = eval::posterior_oracle(2, 2, 0.3, 0.7, 5);
  for (int k = 0; k <= 5; ++k) CHECK(unmasked[k] == (k == 2 ? 1.0 : 0.0));
  const auto inconsistent = eval::posterior_oracle(2, 4, 0.3, 0.7, 5);
  CHECK(inconsistent[4] == 1.0);
  const auto near = eval::posterior_oracle(2, 5, 0.7 - 1e-9, 0.7, 5);
  CHECK(near[5] > 1.0 - 1e-8);
  CHECK_THROWS_AS(eval::posterior_oracle(2, 5, 0.7, 0.7, 5), UsageError);
}

TEST_CASE("mask_count_test: degenerate endpoints and the half-masked case") {
  Rng rng(6, Stream::test);
  CHECK(eval::mask_count_test(0.0, 100, 1000, rng) == 1.0);
  CHECK(eval::mask_count_test(1.0, 100, 1000, rng) == 1.0);
  CHECK(eval::mask_count_test(0.5, 100, 10000, rng) > 0.001);
  CHECK_THROWS_AS(eval::mask_count_test(0.5, 100, 999, rng), UsageError);
}

TEST_CASE("chi_square_sf reference values") {
  CHECK(eval::chi_square_sf(0.0, 3) == doctest::Approx(1.0));
  // chi-square with 2 dof has survival exp(-x/2)
  CHECK(eval::chi_square_sf(4.0, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-13));
  CHECK(eval::chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-10));
}

TEST_CASE("nll: point-mass model gives zero and uniform model gives 2 ln 100") {
  const ModelConfig cfg = tiny(100, 2);
  std::vector<TokenSequence> pool(200, TokenSequence({12, 80}, 100));

  auto point = models::init_model(cfg, ModelKind::vadd, 8);
  zero_prefix(point, "den.out.4.");
  zero_prefix(point, "rec.head.1.");
  auto& b = point.get_mut("den.out.4.b");
  b[12] = 60.0;
  b[100 + 80] = 60.0;
  eval::NllOptions opts;
  opts.K = 10;
  opts.n_time_pairs = 20;
  opts.seed = 8;
  const auto r = eval::nll(pool, point, cfg, opts);
  CHECK(std::abs(r.mean) < 1e-10);

  auto uniform = models::init_model(cfg, ModelKind::mdlm, 9);
  zero_prefix(uniform, "den.out.4.");
  std::vector<TokenSequence> many(10000, TokenSequence({12, 80}, 100));
  eval::NllOptions u;
  u.n_time_pairs = 100;
  u.seed = 9;
  const auto ru = eval::nll(many, uniform, cfg, u);
  CHECK(std::abs(ru.mean - 2.0 * std::log(100.0)) < 0.05);
  CHECK(std::abs(ru.mean - 2.0 * std::log(100.0)) < 4 * ru.std_error);
}

TEST_CASE("nll is deterministic across thread counts") {
  const ModelConfig cfg = tiny(9, 2);
  const auto store = models::init_model(cfg, ModelKind::vadd, 10);
  std::vector<TokenSequence> pool;
  Rng rng(10, Stream::test);
  for (int i = 0; i < 40; ++i)
    pool.emplace_back(std::vector<int>{static_cast<int>(rng.below(9)), static_cast<int>(rng.below(9))}, 9);
  eval::NllOptions a;
  a.K = 20;
  a.n_time_pairs = 5;
  a.seed = 10;
  eval::NllOptions b = a;
  b.threads = 3;
  CHECK(eval::nll(pool, store, cfg, a).per_sequence == eval::nll(pool, store, cfg, b).per_sequence);
}
