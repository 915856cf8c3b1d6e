#include "vadd/masking.hpp"

#include <algorithm>
#include <string>

#include "vadd/error.hpp"

namespace vadd {

TokenSequence::TokenSequence(std::vector<int> t, int v) : tokens(std::move(t)), vocab(v) {
  for (int tok : tokens)
    if (tok < 0 || tok > vocab) throw UsageError("token " + std::to_string(tok) + " outside [0, V]");
}

TokenSequence TokenSequence::all_masked(std::size_t n, int vocab) {
  return TokenSequence(std::vector<int>(n, vocab), vocab);
}

std::size_t TokenSequence::masked_count() const noexcept {
  return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), vocab));
}

namespace masking {

TokenSequence forward_mask(const TokenSequence& x0, double t, Rng& rng) {
  if (t < 0.0 || t > 1.0) throw UsageError("forward_mask: t outside [0, 1]");
  const double keep = LinearSchedule::alpha(t);
  TokenSequence xt = x0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (x0.is_masked(i)) throw UsageError("forward_mask: input already contains a mask token");
    if (rng.uniform() >= keep) xt.tokens[i] = x0.mask_id();
  }
  return xt;
}

std::vector<double> posterior_probs(int xt_i, int x0_i, double s, double t, int vocab) {
  if (!(s < t)) throw UsageError("posterior_probs: requires s < t");
  std::vector<double> p(static_cast<std::size_t>(vocab) + 1, 0.0);
  if (xt_i != vocab) {
    p[static_cast<std::size_t>(xt_i)] = 1.0;
    return p;
  }
  const double as = LinearSchedule::alpha(s), at = LinearSchedule::alpha(t);
  p[static_cast<std::size_t>(vocab)] = (1.0 - as) / (1.0 - at);
  p[static_cast<std::size_t>(x0_i)] += (as - at) / (1.0 - at);
  return p;
}

double loss_weight(double t, double t_min) { return LinearSchedule::weight(std::max(t, t_min)); }

std::vector<int> mask_indicator(const TokenSequence& xt) {
  std::vector<int> bits(xt.size());
  for (std::size_t i = 0; i < xt.size(); ++i) bits[i] = xt.is_masked(i) ? 1 : 0;
  return bits;
}

}  // namespace masking
}  // namespace vadd
