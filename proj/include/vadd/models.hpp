#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vadd/diff/graph.hpp"
#include "vadd/diff/params.hpp"
#include "vadd/masking.hpp"
#include "vadd/rng.hpp"

namespace vadd {

enum class ModelKind { vadd, mdlm };

const char* to_string(ModelKind kind);
/// Throws UsageError for anything other than "vadd" / "mdlm".
ModelKind parse_model_kind(const std::string& name);

/// MLP toy architecture. Layer counts are numbers of linear layers; an MLP
/// listed with channel widths [a, b, c] has two.
struct ModelConfig {
  int vocab = 100;
  int seq_len = 2;
  int latent_dim = 2;
  int width = 512;
  int time_features = 1024;
  int time_layers = 2;
  int readout_layers = 5;
  int trunk_layers = 5;
  int head_layers = 2;
  double log_std_clamp = 7.0;
  double embedding_init_std = 0.02;
};

namespace models {

using diff::Graph;
using diff::NodeId;
using diff::ParamStore;
using diff::Tensor;

/// [B x F] table: column k < F/2 is sin(w_k * 1000 t), column F/2 + k is
/// cos(w_k * 1000 t), with w_k = 10000^(-k / (F/2)).
Tensor sinusoidal_features(std::span<const double> t, int n_features);

/// Parameters under "den." (token embedding, time MLP, optional z MLP,
/// readout MLP).
void init_denoiser(ParamStore& store, const ModelConfig& cfg, bool with_latent, Rng& rng);
/// Parameters under "rec." (token embedding, time MLP, shared trunk, head).
void init_recognizer(ParamStore& store, const ModelConfig& cfg, Rng& rng);
/// Fresh parameters for a VADD (denoiser + recognizer) or MDLM model.
ParamStore init_model(const ModelConfig& cfg, ModelKind kind, std::uint64_t seed);

bool has_latent_pathway(const ParamStore& store);

/// Sinusoidal features followed by the time MLP under `prefix`. [B x W].
NodeId time_embed(Graph& g, const ParamStore& store, const ModelConfig& cfg, const std::string& prefix,
                  std::span<const double> t);

/// Log of the denoiser's clean-token distribution, [B*N x V]; row
/// b*N + i belongs to position i of sequence b. `z` is a [B x d] node and
/// must be given exactly when the store has a latent pathway.
NodeId denoiser_log_probs(Graph& g, const ParamStore& store, const ModelConfig& cfg,
                          std::span<const TokenSequence> xt, std::span<const double> t,
                          std::optional<NodeId> z);

/// mu(x_t, z, t) as N rows of V probabilities. Pass an empty `z` for MDLM.
/// Same network for one (xt, t) shared by every row of z [K x d]: the
/// token and time embeddings are computed once. Output is [K*N x V].
NodeId denoiser_log_probs_shared(Graph& g, const ParamStore& store, const ModelConfig& cfg,
                                 const TokenSequence& xt, double t, NodeId z);

Tensor denoise(const TokenSequence& xt, std::span<const double> z, double t, const ParamStore& store,
               const ModelConfig& cfg);

struct PosteriorNodes {
  NodeId mean;     // [B x d]
  NodeId log_std;  // [B x d], clamped
  NodeId std;      // [B x d]
};

/// Siamese recognizer: the shared trunk sees emb(t)+emb(x0) and
/// emb(t)+emb(xt) as one stacked batch; the head reads the average of the
/// two branch outputs. `swap_branches` stacks xt first.
PosteriorNodes recognizer_forward(Graph& g, const ParamStore& store, const ModelConfig& cfg,
                                  std::span<const TokenSequence> x0, std::span<const TokenSequence> xt,
                                  std::span<const double> t, bool swap_branches = false);

struct GaussianPosterior {
  std::vector<double> mean;
  std::vector<double> std;
};

GaussianPosterior recognize(const TokenSequence& x0, const TokenSequence& xt, double t, const ParamStore& store,
                            const ModelConfig& cfg, bool swap_branches = false);

struct LatentDraw {
  std::vector<double> z;
  std::vector<double> eps;
};

/// z = mean + std * eps with eps ~ N(0, I).
LatentDraw sample_latent(const GaussianPosterior& post, Rng& rng);

/// Reparameterized z node from fixed noise `eps` [B x d].
NodeId reparameterize(Graph& g, const PosteriorNodes& post, const Tensor& eps);

}  // namespace models
}  // namespace vadd
