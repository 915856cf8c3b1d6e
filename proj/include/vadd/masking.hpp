#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "vadd/rng.hpp"

namespace vadd {

/// N category indices over classes 0..V-1; the value V is the mask state.
struct TokenSequence {
  std::vector<int> tokens;
  int vocab = 0;

  TokenSequence() = default;
  TokenSequence(std::vector<int> t, int v);
  static TokenSequence all_masked(std::size_t n, int vocab);

  int mask_id() const noexcept { return vocab; }
  std::size_t size() const noexcept { return tokens.size(); }
  bool is_masked(std::size_t i) const { return tokens[i] == vocab; }
  std::size_t masked_count() const noexcept;
  bool operator==(const TokenSequence&) const = default;
};

/// alpha(t) = 1 - t.
struct LinearSchedule {
  static double alpha(double t) noexcept { return 1.0 - t; }
  static double alpha_prime(double) noexcept { return -1.0; }
  /// -alpha'(t) / (1 - alpha(t)).
  static double weight(double t) noexcept { return 1.0 / t; }
};

inline constexpr double kDefaultTMin = 1e-5;

namespace masking {

/// Each token independently becomes the mask with probability 1 - alpha(t),
/// drawing one uniform per position in index order.
TokenSequence forward_mask(const TokenSequence& x0, double t, Rng& rng);

/// q(x_s^i | x_t^i, x_0^i) as a length V+1 vector (index V is the mask).
std::vector<double> posterior_probs(int xt_i, int x0_i, double s, double t, int vocab);

/// 1 / max(t, t_min) for the linear schedule.
double loss_weight(double t, double t_min = kDefaultTMin);

std::vector<int> mask_indicator(const TokenSequence& xt);

}  // namespace masking
}  // namespace vadd
