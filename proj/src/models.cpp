#include "vadd/models.hpp"

#include <cmath>
#include <string>

#include "vadd/diff/ops.hpp"
#include "vadd/error.hpp"

namespace vadd {

const char* to_string(ModelKind kind) { return kind == ModelKind::vadd ? "vadd" : "mdlm"; }

ModelKind parse_model_kind(const std::string& name) {
  if (name == "vadd") return ModelKind::vadd;
  if (name == "mdlm") return ModelKind::mdlm;
  throw UsageError("unknown model '" + name + "' (expected vadd or mdlm)");
}

namespace models {

namespace {

std::string layer_name(const std::string& prefix, int i, const char* part) {
  return prefix + "." + std::to_string(i) + "." + part;
}

void init_linear(ParamStore& store, const std::string& prefix, int i, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor W({in, out});
  for (double& v : W.data()) v = rng.uniform(-bound, bound);
  Tensor b({out});
  for (double& v : b.data()) v = rng.uniform(-bound, bound);
  store.add(layer_name(prefix, i, "W"), std::move(W));
  store.add(layer_name(prefix, i, "b"), std::move(b));
}

void init_mlp(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out,
              int layers, Rng& rng) {
  for (int i = 0; i < layers; ++i) {
    const std::size_t fan_in = i == 0 ? in : hidden;
    const std::size_t fan_out = i == layers - 1 ? out : hidden;
    init_linear(store, prefix, i, fan_in, fan_out, rng);
  }
}

void init_embedding(ParamStore& store, const std::string& name, const ModelConfig& cfg, Rng& rng) {
  const std::size_t rows = static_cast<std::size_t>(cfg.seq_len) * static_cast<std::size_t>(cfg.vocab + 1);
  Tensor table({rows, static_cast<std::size_t>(cfg.width)});
  for (double& v : table.data()) v = cfg.embedding_init_std * rng.normal();
  store.add(name, std::move(table));
}

/// Linear layers with ELU between them (none after the last).
NodeId mlp(Graph& g, const ParamStore& store, const std::string& prefix, int layers, NodeId x) {
  NodeId h = x;
  for (int i = 0; i < layers; ++i) {
    h = diff::linear(g, h, g.parameter(store, layer_name(prefix, i, "W")),
                     g.parameter(store, layer_name(prefix, i, "b")));
    if (i + 1 < layers) h = diff::elu(g, h);
  }
  return h;
}

/// Row index into the per-position embedding table for every token.
std::vector<std::size_t> embedding_rows(std::span<const TokenSequence> seqs, const ModelConfig& cfg) {
  std::vector<std::size_t> rows;
  rows.reserve(seqs.size() * static_cast<std::size_t>(cfg.seq_len));
  for (const TokenSequence& s : seqs) {
    if (s.size() != static_cast<std::size_t>(cfg.seq_len) || s.vocab != cfg.vocab)
      throw UsageError("model input does not match the configured sequence length / vocabulary");
    for (std::size_t j = 0; j < s.size(); ++j)
      rows.push_back(j * static_cast<std::size_t>(cfg.vocab + 1) + static_cast<std::size_t>(s.tokens[j]));
  }
  return rows;
}

}  // namespace

Tensor sinusoidal_features(std::span<const double> t, int n_features) {
  if (n_features < 2 || n_features % 2 != 0) throw ConfigError("sinusoidal_features: need an even width");
  const std::size_t half = static_cast<std::size_t>(n_features) / 2;
  Tensor out({t.size(), static_cast<std::size_t>(n_features)});
  for (std::size_t b = 0; b < t.size(); ++b) {
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
      const double arg = freq * t[b] * 1000.0;
      out.at(b, k) = std::sin(arg);
      out.at(b, half + k) = std::cos(arg);
    }
  }
  return out;
}

void init_denoiser(ParamStore& store, const ModelConfig& cfg, bool with_latent, Rng& rng) {
  const auto W = static_cast<std::size_t>(cfg.width);
  init_embedding(store, "den.tok_emb", cfg, rng);
  init_mlp(store, "den.time", static_cast<std::size_t>(cfg.time_features), W, W, cfg.time_layers, rng);
  if (with_latent) init_mlp(store, "den.z", static_cast<std::size_t>(cfg.latent_dim), W, W, 1, rng);
  init_mlp(store, "den.out", W, W, static_cast<std::size_t>(cfg.seq_len * cfg.vocab), cfg.readout_layers, rng);
}

void init_recognizer(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const auto W = static_cast<std::size_t>(cfg.width);
  init_embedding(store, "rec.tok_emb", cfg, rng);
  init_mlp(store, "rec.time", static_cast<std::size_t>(cfg.time_features), W, W, cfg.time_layers, rng);
  init_mlp(store, "rec.trunk", W, W, W, cfg.trunk_layers, rng);
  init_mlp(store, "rec.head", W, W, static_cast<std::size_t>(2 * cfg.latent_dim), cfg.head_layers, rng);
}

ParamStore init_model(const ModelConfig& cfg, ModelKind kind, std::uint64_t seed) {
  ParamStore store;
  Rng den_rng(seed, Stream::init, 0);
  init_denoiser(store, cfg, kind == ModelKind::vadd, den_rng);
  if (kind == ModelKind::vadd) {
    Rng rec_rng(seed, Stream::init, 1);
    init_recognizer(store, cfg, rec_rng);
  }
  return store;
}

bool has_latent_pathway(const ParamStore& store) { return store.contains("den.z.0.W"); }

NodeId time_embed(Graph& g, const ParamStore& store, const ModelConfig& cfg, const std::string& prefix,
                  std::span<const double> t) {
  const NodeId feats = g.constant(sinusoidal_features(t, cfg.time_features));
  return mlp(g, store, prefix + ".time", cfg.time_layers, feats);
}

NodeId denoiser_log_probs(Graph& g, const ParamStore& store, const ModelConfig& cfg,
                          std::span<const TokenSequence> xt, std::span<const double> t,
                          std::optional<NodeId> z) {
  if (xt.size() != t.size()) throw UsageError("denoiser: one time per sequence required");
  if (z.has_value() != has_latent_pathway(store))
    throw ConfigError(z ? "denoiser: latent given to a model without a z pathway"
                        : "denoiser: model has a z pathway but no latent was given");
  const std::size_t B = xt.size();
  NodeId h = diff::embedding_bag(g, g.parameter(store, "den.tok_emb"), embedding_rows(xt, cfg),
                                 static_cast<std::size_t>(cfg.seq_len));
  h = diff::add(g, h, time_embed(g, store, cfg, "den", t));
  if (z) h = diff::add(g, h, mlp(g, store, "den.z", 1, *z));
  const NodeId logits = mlp(g, store, "den.out", cfg.readout_layers, h);
  const NodeId rows = diff::reshape(g, logits, {B * static_cast<std::size_t>(cfg.seq_len),
                                                static_cast<std::size_t>(cfg.vocab)});
  return diff::log_softmax_rows(g, rows);
}

NodeId denoiser_log_probs_shared(Graph& g, const ParamStore& store, const ModelConfig& cfg,
                                 const TokenSequence& xt, double t, NodeId z) {
  if (!has_latent_pathway(store)) throw ConfigError("denoiser: latent given to a model without a z pathway");
  const std::size_t K = g.value(z).rows();
  const double times[1] = {t};
  NodeId base = diff::embedding_bag(g, g.parameter(store, "den.tok_emb"), embedding_rows(std::span(&xt, 1), cfg),
                                    static_cast<std::size_t>(cfg.seq_len));
  base = diff::add(g, base, time_embed(g, store, cfg, "den", times));
  const NodeId h = diff::add(g, diff::gather_rows(g, base, std::vector<std::size_t>(K, 0)),
                             mlp(g, store, "den.z", 1, z));
  const NodeId logits = mlp(g, store, "den.out", cfg.readout_layers, h);
  const NodeId rows = diff::reshape(g, logits, {K * static_cast<std::size_t>(cfg.seq_len),
                                                static_cast<std::size_t>(cfg.vocab)});
  return diff::log_softmax_rows(g, rows);
}

Tensor denoise(const TokenSequence& xt, std::span<const double> z, double t, const ParamStore& store,
               const ModelConfig& cfg) {
  Graph g;
  std::optional<NodeId> zn;
  if (!z.empty()) zn = g.constant(Tensor({1, z.size()}, std::vector<double>(z.begin(), z.end())));
  const double times[1] = {t};
  Tensor mu = g.value(denoiser_log_probs(g, store, cfg, std::span(&xt, 1), times, zn));
  for (double& v : mu.data()) v = std::exp(v);
  return mu;
}

PosteriorNodes recognizer_forward(Graph& g, const ParamStore& store, const ModelConfig& cfg,
                                  std::span<const TokenSequence> x0, std::span<const TokenSequence> xt,
                                  std::span<const double> t, bool swap_branches) {
  if (x0.size() != xt.size() || x0.size() != t.size())
    throw UsageError("recognizer: x0, xt and t must have the same batch size");
  for (std::size_t b = 0; b < x0.size(); ++b)
    if (x0[b].size() != xt[b].size()) throw UsageError("recognizer: x0 and xt lengths differ");
  const std::size_t B = x0.size();
  const auto d = static_cast<std::size_t>(cfg.latent_dim);
  const NodeId table = g.parameter(store, "rec.tok_emb");
  const auto per_row = static_cast<std::size_t>(cfg.seq_len);
  const NodeId te = time_embed(g, store, cfg, "rec", t);
  const NodeId h0 = diff::add(g, te, diff::embedding_bag(g, table, embedding_rows(x0, cfg), per_row));
  const NodeId ht = diff::add(g, te, diff::embedding_bag(g, table, embedding_rows(xt, cfg), per_row));
  const NodeId stacked = swap_branches ? diff::concat_rows(g, ht, h0) : diff::concat_rows(g, h0, ht);
  const NodeId trunk = mlp(g, store, "rec.trunk", cfg.trunk_layers, stacked);
  const NodeId first = diff::slice_rows(g, trunk, 0, B);
  const NodeId second = diff::slice_rows(g, trunk, B, 2 * B);
  const NodeId avg = diff::scale(g, diff::add(g, first, second), 0.5);
  const NodeId head = mlp(g, store, "rec.head", cfg.head_layers, avg);
  PosteriorNodes out{};
  out.mean = diff::slice_cols(g, head, 0, d);
  out.log_std = diff::clamp(g, diff::slice_cols(g, head, d, 2 * d), -cfg.log_std_clamp, cfg.log_std_clamp);
  out.std = diff::exp(g, out.log_std);
  return out;
}

GaussianPosterior recognize(const TokenSequence& x0, const TokenSequence& xt, double t, const ParamStore& store,
                            const ModelConfig& cfg, bool swap_branches) {
  Graph g;
  const double times[1] = {t};
  const PosteriorNodes p = recognizer_forward(g, store, cfg, std::span(&x0, 1), std::span(&xt, 1), times,
                                              swap_branches);
  const auto& m = g.value(p.mean).values();
  const auto& s = g.value(p.std).values();
  return {m, s};
}

LatentDraw sample_latent(const GaussianPosterior& post, Rng& rng) {
  LatentDraw out;
  out.eps.resize(post.mean.size());
  out.z.resize(post.mean.size());
  for (std::size_t j = 0; j < post.mean.size(); ++j) {
    out.eps[j] = rng.normal();
    out.z[j] = post.mean[j] + post.std[j] * out.eps[j];
  }
  return out;
}

NodeId reparameterize(Graph& g, const PosteriorNodes& post, const Tensor& eps) {
  return diff::add(g, post.mean, diff::mul_const(g, post.std, eps));
}

}  // namespace models
}  // namespace vadd
