#include "vadd/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace vadd::diff {

namespace {

double evaluate(const std::function<NodeId(Graph&)>& forward) {
  Graph g;
  return g.value(forward(g)).item();
}

}  // namespace

GradCheckResult grad_check(const std::function<NodeId(Graph&)>& forward, ParamStore& store, int n_probes,
                           Rng& rng, const GradCheckOptions& opts) {
  GradMap analytic;
  {
    Graph g;
    const NodeId loss = forward(g);
    analytic = backward(g, loss, store);
  }

  std::vector<std::string> names;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& [name, t] : store.entries()) {
    names.push_back(name);
    offsets.push_back(total);
    total += t.size();
  }

  GradCheckResult result;
  for (int probe = 0; probe < n_probes && total > 0; ++probe) {
    const std::size_t flat = rng.below(total);
    const std::size_t k = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                                   offsets.begin()) - 1;
    const std::size_t i = flat - offsets[k];
    double& coord = store.get_mut(names[k])[i];
    const double saved = coord;
    coord = saved + opts.step;
    const double up = evaluate(forward);
    coord = saved - opts.step;
    const double down = evaluate(forward);
    coord = saved;

    const double numeric = (up - down) / (2.0 * opts.step);
    const double a = analytic.at(names[k])[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
    ++result.probes;
  }
  return result;
}

}  // namespace vadd::diff
