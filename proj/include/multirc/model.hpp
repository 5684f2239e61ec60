#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "multirc/rng.hpp"
#include "multirc/tensor.hpp"

namespace multirc {

struct ModelConfig {
  std::size_t window = 32;  // h
  std::size_t d_model = 32;
  std::size_t heads = 4;
  std::size_t blocks = 3;
  std::size_t ff_width = 64;
  std::size_t base_patch = 2;  // P_1
  std::size_t scales = 3;      // a
  double dropout = 0.1;
  /// One transformer stack for every scale (per-scale embeddings are kept).
  bool share_scales = false;

  void validate() const;
  std::size_t padded_window() const;
  std::size_t patch_size(std::size_t scale) const { return base_patch << scale; }
  std::size_t patch_count(std::size_t scale) const { return padded_window() / patch_size(scale); }
  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear xavier(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams identity(std::size_t width);
  Tensor forward(const Tensor& x) const;
};

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training with dropout > 0
  /// When set, receives attention weights of every block, appended in order.
  std::vector<std::vector<double>>* attention_probs = nullptr;
};

/// Pre-norm transformer block: x + MHA(LN(x)), then x + FFN(LN(x)).
struct TransformerBlock {
  LayerNormParams ln1;
  Linear qkv;
  Linear proj;
  LayerNormParams ln2;
  Linear ff1;
  Linear ff2;

  static TransformerBlock create(const ModelConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x, std::size_t seq_len, const ModelConfig& cfg, const ForwardOptions& opts) const;
};

struct ScaleEmbedding {
  Linear patch;  // P_p -> d_model
  Tensor pos;    // N_p x d_model, learned
};

/// Multi-scale encoder/decoder. Items are univariate windows (channel
/// independence); batches are stacked along rows.
class MultiRCModel {
 public:
  MultiRCModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// Patches [B*N_p, P_p] -> [B*N_p, d_model].
  Tensor embed(std::size_t scale, const Tensor& patches) const;
  /// Embedded sequences -> representations z_p, same shape.
  Tensor encode(std::size_t scale, const Tensor& embedded, const ForwardOptions& opts = {}) const;
  /// embed + encode for every scale.
  std::vector<Tensor> represent(const std::vector<Tensor>& patches, const ForwardOptions& opts = {}) const;
  /// Per-scale representations -> reconstruction [B, h].
  Tensor decode(const std::vector<Tensor>& reps, std::size_t batch) const;

  /// Parameters in declaration order; handles share storage with the model.
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  /// Index of the transformer stack serving `scale`.
  std::size_t stack_for(std::size_t scale) const { return cfg_.share_scales ? 0 : scale; }

 private:
  ModelConfig cfg_;
  std::vector<ScaleEmbedding> embeddings_;
  std::vector<std::vector<TransformerBlock>> stacks_;
  Linear dec_hidden_;
  Linear dec_out_;
};

/// Deep copy of every parameter value (for best-epoch snapshots).
std::vector<std::vector<double>> snapshot_parameters(const MultiRCModel& model);
void restore_parameters(MultiRCModel& model, const std::vector<std::vector<double>>& values);
/// FNV-1a over parameter bytes; used to assert that evaluation mutates nothing.
std::uint64_t parameter_hash(const MultiRCModel& model);

// Checkpoint layout (little-endian):
//   "MRC1" | u32 config byte length | config as key=value lines |
//   u32 tensor count | per tensor: u32 name length, name, u32 rank,
//   u64 dims[rank], float64 payload.
void save_checkpoint(const std::filesystem::path& path, const MultiRCModel& model);
MultiRCModel load_checkpoint(const std::filesystem::path& path);
std::string model_config_text(const ModelConfig& cfg);
ModelConfig parse_model_config_text(const std::string& text);

}  // namespace multirc
