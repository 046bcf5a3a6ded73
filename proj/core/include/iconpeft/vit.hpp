#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "iconpeft/adapters.hpp"
#include "iconpeft/ops.hpp"
#include "iconpeft/tensor.hpp"

namespace iconpeft {

struct ViTConfig {
  int64_t image_size = 32;  // H == W
  int64_t patch_size = 4;
  int64_t in_channels = 3;
  int64_t embed_dim = 64;
  int64_t depth = 4;
  int64_t num_heads = 4;
  double mlp_ratio = 4.0;
  int64_t num_classes = 8;
  double ln_eps = 1e-5;

  int64_t grid() const { return image_size / patch_size; }
  int64_t tokens() const { return grid() * grid(); }
  int64_t head_dim() const { return embed_dim / num_heads; }
  int64_t mlp_hidden() const {
    return static_cast<int64_t>(mlp_ratio * static_cast<double>(embed_dim));
  }
  void validate() const;
};

template <class S>
struct LayerNormParams {
  Tensor<S> weight, bias;
  double eps = 1e-5;
};

template <class S>
struct LinearParams {
  Tensor<S> weight;  // [in, out]
  Tensor<S> bias;    // [out]
};

template <class S>
Tensor<S> linear(const Tensor<S>& x, const LinearParams<S>& l);

// One pre-norm encoder layer: attention and MLP sub-blocks, each inside a
// residual connection, plus whatever adapter the recipe attached.
template <class S>
struct Block {
  LayerNormParams<S> ln1, ln2;
  LinearParams<S> q, k, v, o;
  LinearParams<S> fc1, fc2;
  int64_t num_heads = 1;
  AdapterRecipe recipe;

  std::optional<LoraPair<S>> q_lora, v_lora;
  std::optional<IconAdapter<S>> icon;
  std::optional<BottleneckAdapter<S>> adapter_attn;  // Houlsby pair, attention side
  std::optional<BottleneckAdapter<S>> adapter_mlp;   // Houlsby pair, MLP side
  std::optional<BottleneckAdapter<S>> adaptformer;

  // Multi-head self-attention on the normalized input plus residual. When
  // attn_avg is non-null it receives a detached head-averaged [B, M, M]
  // attention matrix for rollout.
  Tensor<S> attention_sub_block(const Tensor<S>& x_in,
                                Tensor<S>* attn_avg = nullptr) const;

  Tensor<S> mlp_sub_block(const Tensor<S>& x_res) const;

  Tensor<S> forward(const Tensor<S>& x_in, Tensor<S>* attn_avg = nullptr) const;
};

enum class WeightInit {
  Seeded,  // per-name seeded normals
  Zeros,   // shape-only use (parameter accounting)
};

template <class S>
class VisionTransformer {
 public:
  VisionTransformer(const ViTConfig& cfg, const AdapterRecipe& recipe,
                    uint64_t seed, WeightInit init = WeightInit::Seeded);

  // Non-overlapping patches, linear embedding, learnable positional offsets.
  Tensor<S> patch_embed(const Tensor<S>& images) const;

  // images [B, C, H, W] -> logits [B, num_classes]. If block_attn is
  // non-null it collects one detached head-averaged [B, M, M] matrix per
  // block for attention rollout.
  Tensor<S> forward(const Tensor<S>& images,
                    std::vector<Tensor<S>>* block_attn = nullptr) const;

  const ViTConfig& config() const { return cfg_; }
  const AdapterRecipe& recipe() const { return recipe_; }
  uint64_t seed() const { return seed_; }
  ParameterRegistry<S>& registry() { return registry_; }
  const ParameterRegistry<S>& registry() const { return registry_; }
  std::vector<Block<S>>& blocks() { return blocks_; }
  const std::vector<Block<S>>& blocks() const { return blocks_; }
  Tensor<S>& pos_embed() { return pos_embed_; }

 private:
  ViTConfig cfg_;
  AdapterRecipe recipe_;
  uint64_t seed_ = 0;
  LinearParams<S> patch_;
  Tensor<S> pos_embed_;  // [M, D]
  std::vector<Block<S>> blocks_;
  LayerNormParams<S> norm_;
  LinearParams<S> head_;
  ParameterRegistry<S> registry_;
};

// Head-averaged attention matrix of one sample, row-stochastic.
template <class S>
struct AttentionRecord {
  int64_t tokens = 0;
  std::vector<S> matrix;  // row-major tokens x tokens
};

// Slices the per-block [B, M, M] capture down to one sample's records.
template <class S>
std::vector<AttentionRecord<S>> records_for_sample(
    const std::vector<Tensor<S>>& block_attn, int64_t sample);

// Mixes each layer with the identity (residual path), renormalizes rows and
// multiplies across layers, last layer leftmost. Returns row-major M x M.
template <class S>
std::vector<S> attention_rollout(const std::vector<AttentionRecord<S>>& records);

}  // namespace iconpeft
