#include "iconpeft/adapters.hpp"

#include <algorithm>

#include "iconpeft/conv.hpp"

namespace iconpeft {

const char* to_string(AdapterKind k) {
  switch (k) {
    case AdapterKind::Icon: return "icon";
    case AdapterKind::BottleneckSequential: return "bottleneck_sequential";
    case AdapterKind::AdaptformerParallel: return "adaptformer_parallel";
    case AdapterKind::Lora: return "lora";
    case AdapterKind::BitFit: return "bitfit";
    case AdapterKind::LnOnly: return "ln_only";
    case AdapterKind::LinearProbe: return "linear_probe";
    case AdapterKind::Full: return "full";
    case AdapterKind::Frozen: return "frozen";
  }
  return "?";
}

const char* to_string(Placement p) {
  return p == Placement::Sequential ? "sequential" : "parallel";
}

const char* to_string(ParamOwner o) {
  switch (o) {
    case ParamOwner::Backbone: return "backbone";
    case ParamOwner::Adapter: return "adapter";
    case ParamOwner::Head: return "head";
  }
  return "?";
}

AdapterKind adapter_kind_from_string(std::string_view s) {
  for (AdapterKind k :
       {AdapterKind::Icon, AdapterKind::BottleneckSequential,
        AdapterKind::AdaptformerParallel, AdapterKind::Lora, AdapterKind::BitFit,
        AdapterKind::LnOnly, AdapterKind::LinearProbe, AdapterKind::Full,
        AdapterKind::Frozen}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown adapter kind '" + std::string(s) + "'");
}

Placement placement_from_string(std::string_view s) {
  if (s == "sequential") return Placement::Sequential;
  if (s == "parallel") return Placement::Parallel;
  throw ConfigError("unknown placement '" + std::string(s) + "'");
}

std::vector<std::string> AdapterRecipe::validate() const {
  if (bottleneck_dim < 1) {
    throw ConfigError("recipe: bottleneck_dim must be >= 1, got " +
                      std::to_string(bottleneck_dim));
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("recipe: kernel_size must be odd and >= 1, got " +
                      std::to_string(kernel_size));
  }
  if (lora_rank < 1) {
    throw ConfigError("recipe: lora_rank must be >= 1, got " +
                      std::to_string(lora_rank));
  }
  std::vector<std::string> warnings;
  if (kind != AdapterKind::Icon) {
    if (placement != Placement::Sequential) {
      warnings.push_back(std::string("recipe: placement is ignored for kind '") +
                         to_string(kind) + "'");
    }
    if (kernel_size != 3) {
      warnings.push_back(std::string("recipe: kernel_size is ignored for kind '") +
                         to_string(kind) + "'");
    }
  }
  return warnings;
}

template <class S>
void ParameterRegistry<S>::add(std::string name, Tensor<S> tensor,
                               ParamOwner owner, bool decay) {
  if (find(name) != nullptr) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  ParamEntry<S> e;
  e.name = std::move(name);
  e.tensor = std::move(tensor);
  e.owner = owner;
  e.weight_decay = decay;
  e.trainable = false;
  entries_.push_back(std::move(e));
}

template <class S>
const ParamEntry<S>* ParameterRegistry<S>::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <class S>
ParamEntry<S>* ParameterRegistry<S>::find(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <class S>
void ParameterRegistry<S>::set_trainable(std::string_view name, bool on) {
  ParamEntry<S>* e = find(name);
  if (!e) throw ConfigError("no parameter named '" + std::string(name) + "'");
  e->trainable = on;
  e->tensor.set_requires_grad(on);
}

template <class S>
int64_t count_parameters(const ParameterRegistry<S>& reg, CountScope scope) {
  int64_t n = 0;
  for (const auto& e : reg.entries()) {
    switch (scope) {
      case CountScope::All:
        n += e.tensor.numel();
        break;
      case CountScope::Trainable:
        if (e.trainable) n += e.tensor.numel();
        break;
      case CountScope::BackboneTrainable:
        if (e.trainable && e.owner == ParamOwner::Backbone) n += e.tensor.numel();
        break;
    }
  }
  return n;
}

template <class S>
double trainable_ratio_percent(const ParameterRegistry<S>& reg) {
  const int64_t total = count_parameters(reg, CountScope::All);
  const int64_t trainable = count_parameters(reg, CountScope::Trainable);
  return total == 0 ? 0.0
                    : 100.0 * static_cast<double>(trainable) /
                          static_cast<double>(total);
}

namespace {

bool last_segment_is(std::string_view name, std::string_view seg) {
  const size_t dot = name.rfind('.');
  return (dot == std::string_view::npos ? name : name.substr(dot + 1)) == seg;
}

bool has_segment(std::string_view name, std::string_view seg) {
  size_t start = 0;
  while (start <= name.size()) {
    size_t dot = name.find('.', start);
    if (dot == std::string_view::npos) dot = name.size();
    if (name.substr(start, dot - start) == seg) return true;
    start = dot + 1;
  }
  return false;
}

bool is_layer_norm_param(std::string_view name) {
  return has_segment(name, "ln1") || has_segment(name, "ln2") ||
         has_segment(name, "norm");
}

bool recipe_trains(const AdapterRecipe& recipe, std::string_view name,
                   ParamOwner owner) {
  switch (recipe.kind) {
    case AdapterKind::Frozen:
      return false;
    case AdapterKind::Full:
      return true;
    case AdapterKind::LinearProbe:
      return owner == ParamOwner::Head;
    case AdapterKind::Icon:
    case AdapterKind::BottleneckSequential:
    case AdapterKind::AdaptformerParallel:
    case AdapterKind::Lora:
      return owner == ParamOwner::Head || owner == ParamOwner::Adapter;
    case AdapterKind::BitFit:
      return owner == ParamOwner::Head ||
             (owner == ParamOwner::Backbone && last_segment_is(name, "bias"));
    case AdapterKind::LnOnly:
      return owner == ParamOwner::Head ||
             (owner == ParamOwner::Backbone && is_layer_norm_param(name));
  }
  return false;
}

}  // namespace

template <class S>
void apply_freeze_policy(ParameterRegistry<S>& reg, const AdapterRecipe& recipe) {
  for (auto& e : reg.entries()) {
    e.trainable = recipe_trains(recipe, e.name, e.owner);
    e.tensor.set_requires_grad(e.trainable);
  }
}

template <class S>
void randomize_params(ParameterRegistry<S>& reg, uint64_t seed, double sigma,
                      bool trainable_only) {
  for (auto& e : reg.entries()) {
    if (trainable_only && !e.trainable) continue;
    SeededRng rng(derive_seed(seed, e.name));
    for (S& v : e.tensor.data()) v = static_cast<S>(rng.normal() * sigma);
  }
}

template <class S>
int64_t copy_matching_params(const ParameterRegistry<S>& src,
                             ParameterRegistry<S>& dst,
                             std::optional<ParamOwner> owner_filter) {
  int64_t copied = 0;
  for (auto& e : dst.entries()) {
    if (owner_filter && e.owner != *owner_filter) continue;
    const ParamEntry<S>* s = src.find(e.name);
    if (!s || s->tensor.shape() != e.tensor.shape()) continue;
    std::copy(s->tensor.data().begin(), s->tensor.data().end(),
              e.tensor.data().begin());
    ++copied;
  }
  return copied;
}

int64_t icon_adapter_param_count(int64_t d_model, int64_t d, int64_t k) {
  const int64_t down = d_model * d + d;
  const int64_t kgen = d * (d * k * k) + d * k * k;
  const int64_t up = d * d_model + d_model;
  return down + kgen + up + 1;  // +1 for gamma
}

// --- forward paths ---------------------------------------------------------

template <class S>
Tensor<S> generate_kernels(const Tensor<S>& x_hat, const IconAdapter<S>& a) {
  if (x_hat.ndim() != 4 || x_hat.dim(3) != a.bottleneck_dim) {
    throw ShapeError("generate_kernels: expected [B, Hh, Wh, d] with d = " +
                     std::to_string(a.bottleneck_dim) + ", got " +
                     shape_str(x_hat.shape()));
  }
  const int64_t b = x_hat.dim(0);
  const int64_t cells = x_hat.dim(1) * x_hat.dim(2);
  const int64_t d = a.bottleneck_dim;
  const int64_t k = a.kernel_size;
  Tensor<S> flat = reshape(x_hat, {b, cells, d});
  Tensor<S> pooled = mean_axis(flat, 1);                    // [B, d]
  Tensor<S> raw = add(matmul(pooled, a.kgen_w), a.kgen_b);  // [B, d*K*K]
  return reshape(raw, {b, d, k, k});
}

template <class S>
Tensor<S> icon_forward(const Tensor<S>& x, const IconAdapter<S>& a) {
  const int64_t b = x.dim(0);
  const int64_t m = x.dim(1);
  if (m != a.grid_h * a.grid_w) {
    throw ConfigError("icon_forward: token count " + std::to_string(m) +
                      " is not the configured " + std::to_string(a.grid_h) +
                      "x" + std::to_string(a.grid_w) + " grid");
  }
  const int64_t d = a.bottleneck_dim;
  Tensor<S> h = add(matmul(x, a.down_w), a.down_b);          // [B, M, d]
  Tensor<S> x_hat = reshape(h, {b, a.grid_h, a.grid_w, d});  // token grid
  Tensor<S> kernels = generate_kernels(x_hat, a);
  Tensor<S> chw = permute(x_hat, {0, 3, 1, 2});              // [B, d, Hh, Wh]
  Tensor<S> conv = conv2d_depthwise_dynamic(chw, kernels);
  Tensor<S> hwc = permute(conv, {0, 2, 3, 1});
  Tensor<S> tokens = reshape(hwc, {b, m, d});
  Tensor<S> act = gelu(tokens);
  return add(matmul(act, a.up_w), a.up_b);  // [B, M, D]
}

template <class S>
Tensor<S> bottleneck_forward(const Tensor<S>& x, const BottleneckAdapter<S>& a) {
  Tensor<S> h = gelu(add(matmul(x, a.down_w), a.down_b));
  return add(matmul(h, a.up_w), a.up_b);
}

template <class S>
Tensor<S> lora_apply(const Tensor<S>& x, const Tensor<S>& w, const LoraPair<S>& lp) {
  const int64_t d_in = w.dim(0);
  if (lp.a.dim(1) > d_in) {
    throw ConfigError("lora_apply: rank " + std::to_string(lp.a.dim(1)) +
                      " exceeds projection width " + std::to_string(d_in));
  }
  Tensor<S> base = matmul(x, w);
  Tensor<S> delta = matmul(matmul(x, lp.a), lp.b);
  return add(base, delta);
}

#define ICONPEFT_INSTANTIATE_ADAPTERS(S)                                       \
  template class ParameterRegistry<S>;                                         \
  template int64_t count_parameters<S>(const ParameterRegistry<S>&, CountScope); \
  template double trainable_ratio_percent<S>(const ParameterRegistry<S>&);     \
  template void apply_freeze_policy<S>(ParameterRegistry<S>&,                  \
                                       const AdapterRecipe&);                  \
  template void randomize_params<S>(ParameterRegistry<S>&, uint64_t, double,   \
                                    bool);                                     \
  template int64_t copy_matching_params<S>(const ParameterRegistry<S>&,        \
                                           ParameterRegistry<S>&,              \
                                           std::optional<ParamOwner>);         \
  template Tensor<S> generate_kernels<S>(const Tensor<S>&, const IconAdapter<S>&); \
  template Tensor<S> icon_forward<S>(const Tensor<S>&, const IconAdapter<S>&); \
  template Tensor<S> bottleneck_forward<S>(const Tensor<S>&,                   \
                                           const BottleneckAdapter<S>&);       \
  template Tensor<S> lora_apply<S>(const Tensor<S>&, const Tensor<S>&,         \
                                   const LoraPair<S>&);

ICONPEFT_INSTANTIATE_ADAPTERS(float)
ICONPEFT_INSTANTIATE_ADAPTERS(double)

}  // namespace iconpeft
