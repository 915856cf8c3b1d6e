#include "vadd/diff/params.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "vadd/error.hpp"

namespace vadd::diff {

void ParamStore::add(const std::string& name, Tensor init) {
  if (entries_.count(name)) throw ConfigError("param store: duplicate parameter '" + name + "'");
  adam_m_.emplace(name, Tensor(init.shape()));
  adam_v_.emplace(name, Tensor(init.shape()));
  entries_.emplace(name, std::move(init));
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("param store: no parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get_mut(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("param store: no parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

std::size_t ParamStore::parameter_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_)
    if (name.rfind(prefix, 0) == 0) n += t.size();
  return n;
}

void ParamStore::restore_optimizer(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v,
                                   std::size_t step_count) {
  for (const auto& [name, t] : entries_) {
    auto im = m.find(name);
    auto iv = v.find(name);
    if (im == m.end() || iv == v.end() || !im->second.same_shape(t) || !iv->second.same_shape(t))
      throw ConfigError("param store: optimizer state does not match parameter '" + name + "'");
  }
  adam_m_ = std::move(m);
  adam_v_ = std::move(v);
  step_count_ = step_count;
}

std::size_t ParamStore::copy_shared_from(const ParamStore& other) {
  std::size_t copied = 0;
  for (auto& [name, t] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end()) continue;
    if (!it->second.same_shape(t)) throw ConfigError("param store: shape mismatch copying '" + name + "'");
    t = it->second;
    ++copied;
  }
  return copied;
}

void adam_step(ParamStore& store, const GradMap& grads, double lr, const AdamOptions& opts) {
  for (const auto& [name, p] : store.entries_) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ConfigError("adam: no gradient for '" + name + "'");
    if (!it->second.same_shape(p)) throw ConfigError("adam: gradient shape mismatch for '" + name + "'");
  }
  const double t = static_cast<double>(store.step_count_ + 1);
  const double c1 = 1.0 - std::pow(opts.beta1, t);
  const double c2 = 1.0 - std::pow(opts.beta2, t);
  for (auto& [name, p] : store.entries_) {
    const Tensor& g = grads.at(name);
    Tensor& m = store.adam_m_.at(name);
    Tensor& v = store.adam_v_.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + opts.weight_decay * p[i];
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * gi;
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * gi * gi;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts.eps);
    }
  }
  ++store.step_count_;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * frac));
}

namespace {

nlohmann::json tensor_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"values", t.values()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  auto shape = j.at("shape").get<std::vector<std::size_t>>();
  auto values = j.at("values").get<std::vector<double>>();
  return Tensor(std::move(shape), std::move(values));
}

nlohmann::json tensor_map_json(const std::map<std::string, Tensor>& m) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, t] : m) out[name] = tensor_json(t);
  return out;
}

}  // namespace

nlohmann::json to_json(const ParamStore& store, const nlohmann::json& meta, bool with_optimizer) {
  nlohmann::json doc;
  doc["meta"] = meta;
  doc["meta"]["step_count"] = store.step_count();
  doc["params"] = tensor_map_json(store.entries());
  if (with_optimizer) {
    doc["optimizer"] = {{"m", tensor_map_json(store.adam_m())}, {"v", tensor_map_json(store.adam_v())}};
  }
  return doc;
}

ParamStore from_json(const nlohmann::json& doc) {
  ParamStore store;
  for (const auto& [name, j] : doc.at("params").items()) store.add(name, tensor_from_json(j));
  const std::size_t steps = doc.at("meta").value("step_count", std::size_t{0});
  std::map<std::string, Tensor> m, v;
  if (doc.contains("optimizer")) {
    for (const auto& [name, j] : doc.at("optimizer").at("m").items()) m.emplace(name, tensor_from_json(j));
    for (const auto& [name, j] : doc.at("optimizer").at("v").items()) v.emplace(name, tensor_from_json(j));
  } else {
    for (const auto& [name, t] : store.entries()) {
      m.emplace(name, Tensor(t.shape()));
      v.emplace(name, Tensor(t.shape()));
    }
  }
  store.restore_optimizer(std::move(m), std::move(v), steps);
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const nlohmann::json& meta,
                     bool with_optimizer) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("checkpoint: cannot write " + path.string());
  out << to_json(store, meta, with_optimizer).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("checkpoint: cannot open " + path.string());
  try {
    nlohmann::json doc = nlohmann::json::parse(in);
    Checkpoint ck{from_json(doc), doc.at("meta")};
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("checkpoint: corrupt file " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw UsageError("checkpoint: inconsistent file " + path.string() + ": " + e.what());
  }
}

}  // namespace vadd::diff
