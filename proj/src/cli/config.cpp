#include "vadd/cli/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "vadd/error.hpp"

namespace vadd::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + where + "." + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + where + "." + key + "'");
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

}  // namespace

json to_json(const ModelConfig& m) {
  return {{"vocab", m.vocab},
          {"seq_len", m.seq_len},
          {"latent_dim", m.latent_dim},
          {"width", m.width},
          {"time_features", m.time_features},
          {"time_layers", m.time_layers},
          {"readout_layers", m.readout_layers},
          {"trunk_layers", m.trunk_layers},
          {"head_layers", m.head_layers},
          {"log_std_clamp", m.log_std_clamp},
          {"embedding_init_std", m.embedding_init_std}};
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, "model",
                 {"vocab", "seq_len", "latent_dim", "width", "time_features", "time_layers", "readout_layers",
                  "trunk_layers", "head_layers", "log_std_clamp", "embedding_init_std"});
  ModelConfig m;
  read(j, "vocab", m.vocab, "model");
  read(j, "seq_len", m.seq_len, "model");
  read(j, "latent_dim", m.latent_dim, "model");
  read(j, "width", m.width, "model");
  read(j, "time_features", m.time_features, "model");
  read(j, "time_layers", m.time_layers, "model");
  read(j, "readout_layers", m.readout_layers, "model");
  read(j, "trunk_layers", m.trunk_layers, "model");
  read(j, "head_layers", m.head_layers, "model");
  read(j, "log_std_clamp", m.log_std_clamp, "model");
  read(j, "embedding_init_std", m.embedding_init_std, "model");
  return m;
}

json to_json(const RunConfig& c) {
  return {{"dataset",
           {{"name", data::to_string(c.dataset.name)},
            {"n", c.dataset.n},
            {"seed", c.dataset.seed},
            {"board", c.dataset.board},
            {"bin_width", c.dataset.bin_width}}},
          {"model", to_json(c.model)},
          {"optimizer",
           {{"lr0", c.optimizer.lr0},
            {"cosine", c.optimizer.cosine},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"weight_decay", c.optimizer.weight_decay}}},
          {"training",
           {{"epochs", c.training.epochs},
            {"batch", c.training.batch},
            {"anneal_epochs", c.training.anneal_epochs},
            {"t_min", c.training.t_min},
            {"log_every", c.training.log_every}}},
          {"sampling",
           {{"steps", c.sampling.steps},
            {"n_samples", c.sampling.n_samples},
            {"shared_latent", c.sampling.shared_latent}}},
          {"eval",
           {{"K", c.eval.K}, {"n_time_pairs", c.eval.n_time_pairs}, {"nll_sequences", c.eval.nll_sequences}}},
          {"seed", c.seed},
          {"threads", c.threads}};
}

RunConfig config_from_json(const json& j) {
  reject_unknown(j, "", {"dataset", "model", "optimizer", "training", "sampling", "eval", "seed", "threads"});
  RunConfig c;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d, "dataset", {"name", "n", "seed", "board", "bin_width"});
    if (d.contains("name")) {
      std::string name;
      read(d, "name", name, "dataset");
      try {
        c.dataset.name = data::parse_dataset_name(name);
      } catch (const UsageError& e) {
        throw ConfigError(e.what());
      }
    }
    read(d, "n", c.dataset.n, "dataset");
    read(d, "seed", c.dataset.seed, "dataset");
    read(d, "board", c.dataset.board, "dataset");
    read(d, "bin_width", c.dataset.bin_width, "dataset");
  }
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o, "optimizer", {"lr0", "cosine", "beta1", "beta2", "eps", "weight_decay"});
    read(o, "lr0", c.optimizer.lr0, "optimizer");
    read(o, "cosine", c.optimizer.cosine, "optimizer");
    read(o, "beta1", c.optimizer.beta1, "optimizer");
    read(o, "beta2", c.optimizer.beta2, "optimizer");
    read(o, "eps", c.optimizer.eps, "optimizer");
    read(o, "weight_decay", c.optimizer.weight_decay, "optimizer");
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    reject_unknown(t, "training", {"epochs", "batch", "anneal_epochs", "t_min", "log_every"});
    read(t, "epochs", c.training.epochs, "training");
    read(t, "batch", c.training.batch, "training");
    read(t, "anneal_epochs", c.training.anneal_epochs, "training");
    read(t, "t_min", c.training.t_min, "training");
    read(t, "log_every", c.training.log_every, "training");
  }
  if (j.contains("sampling")) {
    const json& s = j.at("sampling");
    reject_unknown(s, "sampling", {"steps", "n_samples", "shared_latent"});
    read(s, "steps", c.sampling.steps, "sampling");
    read(s, "n_samples", c.sampling.n_samples, "sampling");
    read(s, "shared_latent", c.sampling.shared_latent, "sampling");
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown(e, "eval", {"K", "n_time_pairs", "nll_sequences"});
    read(e, "K", c.eval.K, "eval");
    read(e, "n_time_pairs", c.eval.n_time_pairs, "eval");
    read(e, "nll_sequences", c.eval.nll_sequences, "eval");
  }
  read(j, "seed", c.seed, "");
  read(j, "threads", c.threads, "");
  validate(c);
  return c;
}

void validate(const RunConfig& c) {
  require(c.dataset.n >= 1, "dataset.n must be >= 1");
  require(c.dataset.board >= 1, "dataset.board must be >= 1");
  require(c.dataset.bin_width > 0.0 && c.dataset.bin_width <= 1.0, "dataset.bin_width must be in (0, 1]");
  require(c.model.vocab >= 1 && c.model.seq_len >= 1, "model.vocab and model.seq_len must be >= 1");
  require(c.model.latent_dim >= 1, "model.latent_dim must be >= 1");
  require(c.model.width >= 1 && c.model.time_features >= 2 && c.model.time_features % 2 == 0,
          "model.width must be >= 1 and model.time_features even");
  require(c.model.time_layers >= 1 && c.model.readout_layers >= 1 && c.model.trunk_layers >= 1 &&
              c.model.head_layers >= 1,
          "layer counts must be >= 1");
  require(c.optimizer.lr0 > 0.0, "optimizer.lr0 must be positive");
  require(c.optimizer.beta1 >= 0.0 && c.optimizer.beta1 < 1.0 && c.optimizer.beta2 >= 0.0 &&
              c.optimizer.beta2 < 1.0,
          "optimizer betas must be in [0, 1)");
  require(c.training.epochs >= 1 && c.training.batch >= 1, "training.epochs and training.batch must be >= 1");
  require(c.training.anneal_epochs >= 0, "training.anneal_epochs must be >= 0");
  require(c.training.t_min > 0.0 && c.training.t_min < 1.0, "training.t_min must be in (0, 1)");
  require(c.training.log_every >= 1, "training.log_every must be >= 1");
  require(!c.sampling.steps.empty(), "sampling.steps must not be empty");
  for (int T : c.sampling.steps) require(T >= 1, "sampling.steps entries must be >= 1");
  require(c.sampling.n_samples >= 1, "sampling.n_samples must be >= 1");
  require(c.eval.K >= 1 && c.eval.n_time_pairs >= 1 && c.eval.nll_sequences >= 1, "eval sizes must be >= 1");
  require(c.threads >= 1, "threads must be >= 1");
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace vadd::cli
