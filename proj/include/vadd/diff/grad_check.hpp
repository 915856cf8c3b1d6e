#pragma once

#include <functional>

#include "vadd/diff/graph.hpp"
#include "vadd/rng.hpp"

namespace vadd::diff {

struct GradCheckOptions {
  double step = 1e-4;
  /// Denominator floor in the relative error |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-8;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int probes = 0;
};

/// Builds a fresh graph with `forward` (which must return a scalar node and
/// be deterministic), differentiates it, then compares against central
/// differences at `n_probes` coordinates drawn uniformly over all entries
/// of `store`. The store is restored exactly afterwards.
GradCheckResult grad_check(const std::function<NodeId(Graph&)>& forward, ParamStore& store, int n_probes,
                           Rng& rng, const GradCheckOptions& opts = {});

}  // namespace vadd::diff
