#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "vadd/diff/tensor.hpp"

namespace vadd::diff {

using GradMap = std::map<std::string, Tensor>;

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Named trainable tensors plus the Adam state that belongs to them.
class ParamStore {
 public:
  /// Throws ConfigError on a duplicate name.
  void add(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get_mut(const std::string& name);

  const std::map<std::string, Tensor>& entries() const noexcept { return entries_; }
  const std::map<std::string, Tensor>& adam_m() const noexcept { return adam_m_; }
  const std::map<std::string, Tensor>& adam_v() const noexcept { return adam_v_; }

  std::size_t step_count() const noexcept { return step_count_; }
  std::size_t parameter_count() const noexcept;
  std::size_t parameter_count(const std::string& prefix) const;

  /// Replaces Adam moments and step counter (used when resuming).
  void restore_optimizer(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v,
                         std::size_t step_count);

  /// Copies parameter values (not optimizer state) from `other` for every
  /// name both stores share. Returns the number of tensors copied.
  std::size_t copy_shared_from(const ParamStore& other);

 private:
  friend void adam_step(ParamStore&, const GradMap&, double, const AdamOptions&);

  std::map<std::string, Tensor> entries_;
  std::map<std::string, Tensor> adam_m_;
  std::map<std::string, Tensor> adam_v_;
  std::size_t step_count_ = 0;
};

/// Bias-corrected Adam update, in place. `grads` must cover every entry.
void adam_step(ParamStore& store, const GradMap& grads, double lr, const AdamOptions& opts = {});

/// 0.5 * lr0 * (1 + cos(pi * step / total)); 0 once step passes total.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

/// Checkpoint document:
///   {"meta": {...}, "params": {name: {"shape": [...], "values": [...]}},
///    "optimizer": {"m": {...}, "v": {...}}}
/// Doubles are written in shortest round-trip form, so load(save(x)) is
/// bit-exact and save(load(save(x))) is byte-identical.
nlohmann::json to_json(const ParamStore& store, const nlohmann::json& meta, bool with_optimizer = true);
ParamStore from_json(const nlohmann::json& doc);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const nlohmann::json& meta, bool with_optimizer = true);

struct Checkpoint {
  ParamStore store;
  nlohmann::json meta;
};

/// Throws UsageError for a missing, unparsable or inconsistent file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vadd::diff
