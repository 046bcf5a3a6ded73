#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iconpeft/ops.hpp"
#include "iconpeft/tensor.hpp"

namespace iconpeft {

enum class AdapterKind {
  Icon,
  BottleneckSequential,  // Houlsby-style, one after each sub-block transform
  AdaptformerParallel,
  Lora,
  BitFit,
  LnOnly,
  LinearProbe,
  Full,
  Frozen,
};

enum class Placement { Sequential, Parallel };

const char* to_string(AdapterKind k);
const char* to_string(Placement p);
AdapterKind adapter_kind_from_string(std::string_view s);
Placement placement_from_string(std::string_view s);

// Which PEFT method to attach and how. placement / kernel_size / eq6_literal
// only apply to the icon kind; they are ignored (with a warning) otherwise.
struct AdapterRecipe {
  AdapterKind kind = AdapterKind::Icon;
  int64_t bottleneck_dim = 64;
  int64_t kernel_size = 3;
  Placement placement = Placement::Sequential;
  double gamma_init = 1.0;
  // Literal form of the adapted MLP sub-block output: gamma * x_A + attn
  // residual, with the MLP branch reaching the output only through the
  // adapter. When false the plain MLP term is added back as well.
  bool eq6_literal = true;
  int64_t lora_rank = 8;

  // Throws ConfigError on bad fields; returns human-readable warnings for
  // fields that the chosen kind ignores.
  std::vector<std::string> validate() const;
};

enum class ParamOwner { Backbone, Adapter, Head };

const char* to_string(ParamOwner o);

template <class S>
struct ParamEntry {
  std::string name;
  bool trainable = false;
  ParamOwner owner = ParamOwner::Backbone;
  bool weight_decay = true;  // decoupled decay eligibility
  Tensor<S> tensor;
};

enum class CountScope { All, Trainable, BackboneTrainable };

// Every model parameter exactly once, in deterministic construction order.
// Source of truth for counting, freezing and optimization.
template <class S>
class ParameterRegistry {
 public:
  void add(std::string name, Tensor<S> tensor, ParamOwner owner, bool decay);
  const std::vector<ParamEntry<S>>& entries() const { return entries_; }
  std::vector<ParamEntry<S>>& entries() { return entries_; }
  const ParamEntry<S>* find(std::string_view name) const;
  ParamEntry<S>* find(std::string_view name);
  void set_trainable(std::string_view name, bool on);

 private:
  std::vector<ParamEntry<S>> entries_;
};

template <class S>
int64_t count_parameters(const ParameterRegistry<S>& reg, CountScope scope);

template <class S>
double trainable_ratio_percent(const ParameterRegistry<S>& reg);

// Marks the recipe's trainable set in the registry and syncs each tensor's
// requires_grad flag. Everything else stays frozen.
template <class S>
void apply_freeze_policy(ParameterRegistry<S>& reg, const AdapterRecipe& recipe);

// Re-draws parameters from seeded normals (per-name streams). Used by the
// gradient checker, where zero-initialized up-projections would hide entire
// branches from the check.
template <class S>
void randomize_params(ParameterRegistry<S>& reg, uint64_t seed, double sigma,
                      bool trainable_only = true);

// Copies values between registries where names and shapes match. Returns the
// number of entries copied; the owner filter restricts the destination side
// (e.g. initialize a fresh task model from a pretrained backbone).
template <class S>
int64_t copy_matching_params(const ParameterRegistry<S>& src,
                             ParameterRegistry<S>& dst,
                             std::optional<ParamOwner> owner_filter = {});

// --- Adapter modules ------------------------------------------------------

// Input-conditioned adapter: bottleneck around a per-sample channel-wise
// dynamic convolution on the token grid.
template <class S>
struct IconAdapter {
  Tensor<S> down_w, down_b;  // D x d, d
  Tensor<S> kgen_w, kgen_b;  // d x d*K*K, d*K*K
  Tensor<S> up_w, up_b;      // d x D, D
  Tensor<S> gamma;           // [1]
  int64_t grid_h = 0;
  int64_t grid_w = 0;
  int64_t kernel_size = 3;
  int64_t bottleneck_dim = 0;
};

// x_hat: [B, Hh, Wh, d] -> kernels [B, d, K, K]. Global average pool over the
// grid followed by one linear map, one kernel per channel per sample.
template <class S>
Tensor<S> generate_kernels(const Tensor<S>& x_hat, const IconAdapter<S>& a);

// x: [B, M, D] -> x_A: [B, M, D] (un-scaled; the caller applies gamma).
template <class S>
Tensor<S> icon_forward(const Tensor<S>& x, const IconAdapter<S>& a);

template <class S>
struct BottleneckAdapter {
  Tensor<S> down_w, down_b;  // D x d, d
  Tensor<S> up_w, up_b;      // d x D, D
  Tensor<S> scale;           // [1]; only defined for the adaptformer variant
};

// Down-project, GeLU, up-project. The caller adds the result to its host
// branch (and applies the learnable scale where the recipe has one).
template <class S>
Tensor<S> bottleneck_forward(const Tensor<S>& x, const BottleneckAdapter<S>& a);

template <class S>
struct LoraPair {
  Tensor<S> a;  // D x r
  Tensor<S> b;  // r x D
};

// (W + A.B) x as x@W + (x@A)@B; bias is the caller's business.
template <class S>
Tensor<S> lora_apply(const Tensor<S>& x, const Tensor<S>& w, const LoraPair<S>& lp);

// Closed-form trainable-parameter count of one icon adapter at the given
// dims; mirrors what the registry reports for a built model.
int64_t icon_adapter_param_count(int64_t embed_dim, int64_t bottleneck_dim,
                                 int64_t kernel_size);

}  // namespace iconpeft
