#include <doctest.h>

#include <cmath>

#include "vadd/error.hpp"
#include "vadd/eval.hpp"
#include "vadd/masking.hpp"

using namespace vadd;

TEST_CASE("token sequences validate their range") {
  CHECK_NOTHROW(TokenSequence({0, 99, 100}, 100));
  CHECK_THROWS(TokenSequence({101}, 100));
  CHECK_THROWS(TokenSequence({-1}, 100));
  const auto m = TokenSequence::all_masked(3, 10);
  CHECK(m.masked_count() == 3);
  CHECK(m.mask_id() == 10);
}

TEST_CASE("linear schedule") {
  CHECK(LinearSchedule::alpha(0.0) == 1.0);
  CHECK(LinearSchedule::alpha(1.0) == 0.0);
  CHECK(LinearSchedule::alpha(0.3) > LinearSchedule::alpha(0.31));
  CHECK(LinearSchedule::alpha_prime(0.4) == -1.0);
  CHECK(LinearSchedule::weight(0.25) == 4.0);
}

TEST_CASE("forward_mask endpoints") {
  Rng rng(1, Stream::test);
  const TokenSequence x0({3, 1, 4, 1, 5}, 10);
  CHECK(masking::forward_mask(x0, 0.0, rng) == x0);
  CHECK(masking::forward_mask(x0, 1.0, rng).masked_count() == 5);
}

TEST_CASE("forward_mask keeps unmasked tokens and rejects masked input") {
  Rng rng(2, Stream::test);
  const TokenSequence x0({3, 1, 4, 1, 5, 9, 2, 6}, 10);
  for (int k = 0; k < 200; ++k) {
    const auto xt = masking::forward_mask(x0, 0.6, rng);
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK((xt.is_masked(i) || xt.tokens[i] == x0.tokens[i]));
  }
  CHECK_THROWS_AS(masking::forward_mask(TokenSequence({1, 10}, 10), 0.5, rng), UsageError);
}

TEST_CASE("forward_mask masked count is Binomial(100, 0.5)") {
  Rng rng(3, Stream::test);
  CHECK(eval::mask_count_test(0.5, 100, 10000, rng) > 0.001);
}

TEST_CASE("forward_mask per-token rate is 1 - alpha_t") {
  Rng rng(4, Stream::test);
  const TokenSequence x0(std::vector<int>(50, 2), 5);
  const double t = 0.3;
  double masked = 0.0;
  const int trials = 4000;
  for (int k = 0; k < trials; ++k) masked += static_cast<double>(masking::forward_mask(x0, t, rng).masked_count());
  const double n = 50.0 * trials;
  const double se = std::sqrt(t * (1 - t) / n);
  CHECK(std::abs(masked / n - t) < 4 * se);
}

TEST_CASE("posterior_probs examples") {
  const auto a = masking::posterior_probs(7, 2, 0.2, 0.6, 10);
  for (int k = 0; k <= 10; ++k) CHECK(a[k] == (k == 7 ? 1.0 : 0.0));
  const auto b = masking::posterior_probs(10, 2, 0.0, 0.6, 10);
  CHECK(b[10] == 0.0);
  CHECK(b[2] == doctest::Approx(1.0).epsilon(1e-15));
  // alpha_s = 0.8, alpha_t = 0.5
  const auto c = masking::posterior_probs(10, 2, 0.2, 0.5, 10);
  CHECK(c[10] == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(c[2] == doctest::Approx(0.6).epsilon(1e-14));
  CHECK_THROWS_AS(masking::posterior_probs(10, 2, 0.5, 0.5, 10), UsageError);
  CHECK_THROWS_AS(masking::posterior_probs(10, 2, 0.6, 0.5, 10), UsageError);
}

TEST_CASE("posterior_probs is a distribution matching Bayes enumeration") {
  constexpr int V = 5;
  for (int i = 1; i <= 9; ++i) {
    for (int j = i + 1; j <= 9; ++j) {
      const double s = i / 10.0, t = j / 10.0;
      for (int x0 = 0; x0 < V; ++x0) {
        for (int xt = 0; xt <= V; ++xt) {
          const auto p = masking::posterior_probs(xt, x0, s, t, V);
          const auto q = eval::posterior_oracle(x0, xt, s, t, V);
          double sum = 0.0;
          for (int k = 0; k <= V; ++k) {
            CHECK(p[k] >= 0.0);
            CHECK(std::abs(p[k] - q[k]) < 1e-12);
            sum += p[k];
          }
          CHECK(std::abs(sum - 1.0) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("forward kernels compose: q(xt|xs) o q(xs|x0) = q(xt|x0) at V = 3") {
  constexpr int V = 3, M = V;
  auto q0 = [](double t, int x0, int x) {  // q(x_t = x | x_0)
    const double a = 1.0 - t;
    return x == M ? 1.0 - a : (x == x0 ? a : 0.0);
  };
  auto qst = [](double s, double t, int xs, int x) {  // q(x_t = x | x_s)
    const double r = (1.0 - t) / (1.0 - s);
    if (xs == M) return x == M ? 1.0 : 0.0;
    return x == M ? 1.0 - r : (x == xs ? r : 0.0);
  };
  for (double s : {0.1, 0.4, 0.7}) {
    for (double t : {0.5, 0.8, 0.95}) {
      if (!(s < t)) continue;
      for (int x0 = 0; x0 < V; ++x0) {
        for (int x = 0; x <= V; ++x) {
          double composed = 0.0;
          for (int xs = 0; xs <= V; ++xs) composed += qst(s, t, xs, x) * q0(s, x0, xs);
          CHECK(std::abs(composed - q0(t, x0, x)) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("loss_weight clamps small times") {
  CHECK(masking::loss_weight(0.5) == 2.0);
  CHECK(masking::loss_weight(1.0) == 1.0);
  CHECK(masking::loss_weight(1e-9, 1e-5) == doctest::Approx(1e5).epsilon(1e-12));
}

TEST_CASE("mask_indicator") {
  CHECK(masking::mask_indicator(TokenSequence::all_masked(3, 7)) == std::vector<int>{1, 1, 1});
  CHECK(masking::mask_indicator(TokenSequence({1, 2, 3}, 7)) == std::vector<int>{0, 0, 0});
  CHECK(masking::mask_indicator(TokenSequence({3, 7, 5}, 7)) == std::vector<int>{0, 1, 0});
}
