#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vadd/diff/params.hpp"
#include "vadd/masking.hpp"
#include "vadd/models.hpp"
#include "vadd/rng.hpp"

namespace vadd::sampler {

/// t_i = i / T for i = 0..T.
class TimeGrid {
 public:
  explicit TimeGrid(int steps);
  int steps() const noexcept { return static_cast<int>(times_.size()) - 1; }
  double operator[](int i) const { return times_.at(static_cast<std::size_t>(i)); }
  const std::vector<double>& times() const noexcept { return times_; }

 private:
  std::vector<double> times_;
};

/// Inverse-CDF draw: the first index whose running sum (accumulated left
/// to right) exceeds u. Falls back to the last index with positive mass.
int sample_categorical(std::span<const double> probs, double u);

/// One reverse step from time t to s < t. `mu` is N rows of V clean-token
/// probabilities. Per masked position (in index order) one uniform decides
/// whether to unmask, then one more picks the category.
TokenSequence transition_step(const TokenSequence& xt, double s, double t, std::span<const double> mu, Rng& rng);

struct SamplerOptions {
  /// Draw one z per sample and reuse it at every step instead of a fresh
  /// prior draw per step.
  bool shared_latent = false;
  int threads = 1;
  std::size_t chunk = 1024;
};

/// Ancestral sampling for one sequence. The latent stream is only used
/// when the store has a z pathway.
TokenSequence ancestral(int steps, const diff::ParamStore& store, const ModelConfig& cfg, Rng& latent_rng,
                        Rng& categorical_rng, const SamplerOptions& opts = {});

TokenSequence vadd_ancestral(int steps, const diff::ParamStore& store, const ModelConfig& cfg, Rng& latent_rng,
                             Rng& categorical_rng, const SamplerOptions& opts = {});
TokenSequence mdlm_ancestral(int steps, const diff::ParamStore& store, const ModelConfig& cfg,
                             Rng& categorical_rng);

/// Samples `n` sequences. Sample k uses substream `first_index + k` of
/// the latent and categorical streams, so output does not depend on
/// chunking or thread count.
std::vector<TokenSequence> generate(int steps, std::size_t n, std::uint64_t seed, const diff::ParamStore& store,
                                    const ModelConfig& cfg, const SamplerOptions& opts = {},
                                    std::uint32_t first_index = 0);

}  // namespace vadd::sampler
