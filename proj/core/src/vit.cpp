#include "iconpeft/vit.hpp"

#include <cmath>

namespace iconpeft {

void ViTConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || in_channels <= 0 || embed_dim <= 0 ||
      depth <= 0 || num_heads <= 0 || num_classes <= 0) {
    throw ConfigError("model: all extents must be positive");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("model: image_size " + std::to_string(image_size) +
                      " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("model: embed_dim " + std::to_string(embed_dim) +
                      " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (mlp_hidden() < 1) throw ConfigError("model: mlp_ratio too small");
  if (ln_eps <= 0) throw ConfigError("model: ln_eps must be > 0");
}

template <class S>
Tensor<S> linear(const Tensor<S>& x, const LinearParams<S>& l) {
  return add(matmul(x, l.weight), l.bias);
}

namespace {

template <class S>
Tensor<S> apply_ln(const Tensor<S>& x, const LayerNormParams<S>& ln) {
  return layer_norm(x, ln.weight, ln.bias, ln.eps);
}

// Detached head average of attn [B, H, M, M] -> [B, M, M]. Plain compute,
// never taped.
template <class S>
Tensor<S> head_average(const Tensor<S>& attn) {
  const int64_t b = attn.dim(0);
  const int64_t h = attn.dim(1);
  const int64_t mm = attn.dim(2) * attn.dim(3);
  Tensor<S> out = Tensor<S>::zeros({b, attn.dim(2), attn.dim(3)});
  const S* pa = attn.data_ptr();
  S* po = out.data_ptr();
  const S inv = S(1) / static_cast<S>(h);
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t hi = 0; hi < h; ++hi) {
      const S* src = pa + (bi * h + hi) * mm;
      S* dst = po + bi * mm;
      for (int64_t i = 0; i < mm; ++i) dst[i] += src[i];
    }
  }
  for (int64_t i = 0; i < b * mm; ++i) po[i] *= inv;
  return out;
}

}  // namespace

template <class S>
Tensor<S> Block<S>::attention_sub_block(const Tensor<S>& x_in,
                                        Tensor<S>* attn_avg) const {
  const int64_t b = x_in.dim(0);
  const int64_t m = x_in.dim(1);
  const int64_t d = x_in.dim(2);
  const int64_t dh = d / num_heads;

  Tensor<S> h = apply_ln(x_in, ln1);
  Tensor<S> qv = q_lora ? add(lora_apply(h, q.weight, *q_lora), q.bias)
                        : linear(h, q);
  Tensor<S> kv = linear(h, k);
  Tensor<S> vv = v_lora ? add(lora_apply(h, v.weight, *v_lora), v.bias)
                        : linear(h, v);

  auto to_heads = [&](const Tensor<S>& t) {
    return permute(reshape(t, {b, m, num_heads, dh}), {0, 2, 1, 3});
  };
  Tensor<S> qh = to_heads(qv);
  Tensor<S> kh = to_heads(kv);
  Tensor<S> vh = to_heads(vv);

  Tensor<S> logits = scale(matmul(qh, permute(kh, {0, 1, 3, 2})),
                           1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor<S> attn = softmax(logits);  // [B, H, M, M]
  if (attn_avg) *attn_avg = head_average(attn);

  Tensor<S> ctx = matmul(attn, vh);                       // [B, H, M, dh]
  Tensor<S> merged = reshape(permute(ctx, {0, 2, 1, 3}), {b, m, d});
  Tensor<S> out = linear(merged, o);
  if (adapter_attn) out = add(out, bottleneck_forward(out, *adapter_attn));
  return add(out, x_in);
}

template <class S>
Tensor<S> Block<S>::mlp_sub_block(const Tensor<S>& x_res) const {
  Tensor<S> h = apply_ln(x_res, ln2);
  Tensor<S> mlp_out = linear(gelu(linear(h, fc1)), fc2);  // x-tilde

  if (icon) {
    if (recipe.placement == Placement::Sequential) {
      Tensor<S> xa = mul(icon_forward(mlp_out, *icon), icon->gamma);
      if (recipe.eq6_literal) return add(xa, x_res);
      return add(add(mlp_out, xa), x_res);
    }
    // Parallel: the adapter reads the same normalized input as the MLP
    // branch and its scaled output joins the residual sum.
    Tensor<S> xa = mul(icon_forward(h, *icon), icon->gamma);
    return add(add(mlp_out, xa), x_res);
  }
  if (adapter_mlp) {
    Tensor<S> with = add(mlp_out, bottleneck_forward(mlp_out, *adapter_mlp));
    return add(with, x_res);
  }
  if (adaptformer) {
    Tensor<S> delta = mul(bottleneck_forward(h, *adaptformer), adaptformer->scale);
    return add(add(mlp_out, delta), x_res);
  }
  return add(mlp_out, x_res);
}

template <class S>
Tensor<S> Block<S>::forward(const Tensor<S>& x_in, Tensor<S>* attn_avg) const {
  return mlp_sub_block(attention_sub_block(x_in, attn_avg));
}

namespace {

template <class S>
Tensor<S> init_tensor(Shape shape, uint64_t seed, std::string_view name,
                      double sigma, WeightInit init) {
  if (init == WeightInit::Zeros || sigma == 0.0) {
    return Tensor<S>::zeros(std::move(shape));
  }
  return Tensor<S>::randn(std::move(shape), derive_seed(seed, name), sigma);
}

bool decays(std::string_view name) {
  const size_t dot = name.rfind('.');
  const std::string_view last =
      dot == std::string_view::npos ? name : name.substr(dot + 1);
  if (last == "bias" || last == "gamma" || last == "scale") return false;
  // LayerNorm affine params never decay.
  return !(name.find("ln1.") != std::string_view::npos ||
           name.find("ln2.") != std::string_view::npos ||
           name.rfind("norm.", 0) == 0);
}

constexpr double kInitSigma = 0.02;
// Adapter down-projections start wider than the backbone init: they read
// residual-branch features whose magnitude is far below 1 at this scale, and
// a 0.02-sigma draw leaves the adapter's early gradients too small to train
// on a desk budget. Zero-impact starts are untouched (up-projections stay 0).
constexpr double kAdapterDownSigma = 0.3;

}  // namespace

template <class S>
VisionTransformer<S>::VisionTransformer(const ViTConfig& cfg,
                                        const AdapterRecipe& recipe,
                                        uint64_t seed, WeightInit init)
    : cfg_(cfg), recipe_(recipe), seed_(seed) {
  cfg_.validate();
  recipe_.validate();
  const int64_t d = cfg_.embed_dim;
  const int64_t m = cfg_.tokens();
  const int64_t patch_in = cfg_.patch_size * cfg_.patch_size * cfg_.in_channels;
  const int64_t hidden = cfg_.mlp_hidden();
  const int64_t ad = recipe_.bottleneck_dim;
  const int64_t kk = recipe_.kernel_size;
  if (recipe_.kind == AdapterKind::Lora && recipe_.lora_rank > d) {
    throw ConfigError("recipe: lora_rank " + std::to_string(recipe_.lora_rank) +
                      " exceeds embed_dim " + std::to_string(d));
  }
  // Eq. 3 rearranges all M tokens onto the patch grid; with no class token
  // M == grid*grid by construction, checked here anyway.
  if (recipe_.kind == AdapterKind::Icon && m != cfg_.grid() * cfg_.grid()) {
    throw ConfigError("model: token count is not a spatial grid");
  }

  auto reg = [&](const std::string& name, Tensor<S> t, ParamOwner owner) {
    registry_.add(name, t, owner, decays(name));
    return t;
  };
  auto make = [&](const std::string& name, Shape shape, double sigma,
                  ParamOwner owner) {
    return reg(name, init_tensor<S>(std::move(shape), seed, name, sigma, init),
               owner);
  };

  patch_.weight = make("patch_embed.weight", {patch_in, d}, kInitSigma,
                       ParamOwner::Backbone);
  patch_.bias = make("patch_embed.bias", {d}, 0.0, ParamOwner::Backbone);
  pos_embed_ = make("pos_embed", {m, d}, kInitSigma, ParamOwner::Backbone);

  blocks_.reserve(static_cast<size_t>(cfg_.depth));
  for (int64_t bi = 0; bi < cfg_.depth; ++bi) {
    const std::string base = "blocks." + std::to_string(bi) + ".";
    Block<S> blk;
    blk.num_heads = cfg_.num_heads;
    blk.recipe = recipe_;
    blk.ln1.eps = cfg_.ln_eps;
    blk.ln2.eps = cfg_.ln_eps;
    blk.ln1.weight = reg(base + "ln1.weight", Tensor<S>::full({d}, S(1)),
                         ParamOwner::Backbone);
    blk.ln1.bias = make(base + "ln1.bias", {d}, 0.0, ParamOwner::Backbone);
    for (auto [proj, lp] : {std::pair{"q", &blk.q}, std::pair{"k", &blk.k},
                            std::pair{"v", &blk.v}, std::pair{"o", &blk.o}}) {
      const std::string pn = base + "attn." + proj + ".";
      lp->weight = make(pn + "weight", {d, d}, kInitSigma, ParamOwner::Backbone);
      lp->bias = make(pn + "bias", {d}, 0.0, ParamOwner::Backbone);
    }
    if (recipe_.kind == AdapterKind::Lora) {
      const int64_t r = recipe_.lora_rank;
      blk.q_lora = LoraPair<S>{
          make(base + "attn.q.lora_a", {d, r}, kInitSigma, ParamOwner::Adapter),
          make(base + "attn.q.lora_b", {r, d}, 0.0, ParamOwner::Adapter)};
      blk.v_lora = LoraPair<S>{
          make(base + "attn.v.lora_a", {d, r}, kInitSigma, ParamOwner::Adapter),
          make(base + "attn.v.lora_b", {r, d}, 0.0, ParamOwner::Adapter)};
    }
    if (recipe_.kind == AdapterKind::BottleneckSequential) {
      BottleneckAdapter<S> a;
      a.down_w = make(base + "adapter_attn.down.weight", {d, ad},
                      kAdapterDownSigma, ParamOwner::Adapter);
      a.down_b = make(base + "adapter_attn.down.bias", {ad}, 0.0, ParamOwner::Adapter);
      a.up_w = make(base + "adapter_attn.up.weight", {ad, d}, 0.0, ParamOwner::Adapter);
      a.up_b = make(base + "adapter_attn.up.bias", {d}, 0.0, ParamOwner::Adapter);
      blk.adapter_attn = std::move(a);
    }
    blk.ln2.weight = reg(base + "ln2.weight", Tensor<S>::full({d}, S(1)),
                         ParamOwner::Backbone);
    blk.ln2.bias = make(base + "ln2.bias", {d}, 0.0, ParamOwner::Backbone);
    blk.fc1.weight = make(base + "mlp.fc1.weight", {d, hidden}, kInitSigma,
                          ParamOwner::Backbone);
    blk.fc1.bias = make(base + "mlp.fc1.bias", {hidden}, 0.0, ParamOwner::Backbone);
    blk.fc2.weight = make(base + "mlp.fc2.weight", {hidden, d}, kInitSigma,
                          ParamOwner::Backbone);
    blk.fc2.bias = make(base + "mlp.fc2.bias", {d}, 0.0, ParamOwner::Backbone);

    if (recipe_.kind == AdapterKind::Icon) {
      IconAdapter<S> a;
      a.grid_h = cfg_.grid();
      a.grid_w = cfg_.grid();
      a.kernel_size = kk;
      a.bottleneck_dim = ad;
      a.down_w = make(base + "adapter.down.weight", {d, ad},
                      kAdapterDownSigma, ParamOwner::Adapter);
      a.down_b = make(base + "adapter.down.bias", {ad}, 0.0, ParamOwner::Adapter);
      a.kgen_w = make(base + "adapter.kgen.weight", {ad, ad * kk * kk},
                      kInitSigma, ParamOwner::Adapter);
      // The generated kernels start at the identity stencil: the dynamic
      // convolution is then a pass-through and the whole adapter behaves
      // like a plain bottleneck until the generator learns otherwise.
      a.kgen_b = make(base + "adapter.kgen.bias", {ad * kk * kk}, 0.0,
                      ParamOwner::Adapter);
      if (init == WeightInit::Seeded) {
        for (int64_t c = 0; c < ad; ++c) {
          a.kgen_b.data()[c * kk * kk + (kk * kk) / 2] = S(1);
        }
      }
      a.up_w = make(base + "adapter.up.weight", {ad, d}, 0.0, ParamOwner::Adapter);
      a.up_b = make(base + "adapter.up.bias", {d}, 0.0, ParamOwner::Adapter);
      a.gamma = reg(base + "adapter.gamma",
                    Tensor<S>::full({1}, static_cast<S>(recipe_.gamma_init)),
                    ParamOwner::Adapter);
      blk.icon = std::move(a);
    } else if (recipe_.kind == AdapterKind::BottleneckSequential) {
      BottleneckAdapter<S> a;
      a.down_w = make(base + "adapter_mlp.down.weight", {d, ad},
                      kAdapterDownSigma, ParamOwner::Adapter);
      a.down_b = make(base + "adapter_mlp.down.bias", {ad}, 0.0, ParamOwner::Adapter);
      a.up_w = make(base + "adapter_mlp.up.weight", {ad, d}, 0.0, ParamOwner::Adapter);
      a.up_b = make(base + "adapter_mlp.up.bias", {d}, 0.0, ParamOwner::Adapter);
      blk.adapter_mlp = std::move(a);
    } else if (recipe_.kind == AdapterKind::AdaptformerParallel) {
      BottleneckAdapter<S> a;
      a.down_w = make(base + "adapter.down.weight", {d, ad},
                      kAdapterDownSigma, ParamOwner::Adapter);
      a.down_b = make(base + "adapter.down.bias", {ad}, 0.0, ParamOwner::Adapter);
      a.up_w = make(base + "adapter.up.weight", {ad, d}, 0.0, ParamOwner::Adapter);
      a.up_b = make(base + "adapter.up.bias", {d}, 0.0, ParamOwner::Adapter);
      a.scale = reg(base + "adapter.scale", Tensor<S>::full({1}, S(1)),
                    ParamOwner::Adapter);
      blk.adaptformer = std::move(a);
    }
    blocks_.push_back(std::move(blk));
  }

  norm_.eps = cfg_.ln_eps;
  norm_.weight = reg("norm.weight", Tensor<S>::full({d}, S(1)), ParamOwner::Backbone);
  norm_.bias = make("norm.bias", {d}, 0.0, ParamOwner::Backbone);
  head_.weight = make("head.weight", {d, cfg_.num_classes}, kInitSigma,
                      ParamOwner::Head);
  head_.bias = make("head.bias", {cfg_.num_classes}, 0.0, ParamOwner::Head);

  apply_freeze_policy(registry_, recipe_);
}

template <class S>
Tensor<S> VisionTransformer<S>::patch_embed(const Tensor<S>& images) const {
  if (images.ndim() != 4 || images.dim(1) != cfg_.in_channels ||
      images.dim(2) != cfg_.image_size || images.dim(3) != cfg_.image_size) {
    throw ConfigError("patch_embed: images " + shape_str(images.shape()) +
                      " do not match the configured " +
                      std::to_string(cfg_.in_channels) + "x" +
                      std::to_string(cfg_.image_size) + "x" +
                      std::to_string(cfg_.image_size));
  }
  const int64_t b = images.dim(0);
  const int64_t g = cfg_.grid();
  const int64_t p = cfg_.patch_size;
  const int64_t c = cfg_.in_channels;
  Tensor<S> t = reshape(images, {b, c, g, p, g, p});
  t = permute(t, {0, 2, 4, 1, 3, 5});             // [B, g, g, C, P, P]
  t = reshape(t, {b, g * g, c * p * p});          // [B, M, P^2 C]
  return add(linear(t, patch_), pos_embed_);
}

template <class S>
Tensor<S> VisionTransformer<S>::forward(const Tensor<S>& images,
                                        std::vector<Tensor<S>>* block_attn) const {
  Tensor<S> x = patch_embed(images);
  if (block_attn) block_attn->clear();
  for (const Block<S>& blk : blocks_) {
    if (block_attn) {
      Tensor<S> avg;
      x = blk.forward(x, &avg);
      block_attn->push_back(std::move(avg));
    } else {
      x = blk.forward(x);
    }
  }
  x = layer_norm(x, norm_.weight, norm_.bias, norm_.eps);
  x = mean_axis(x, 1);  // pool over tokens
  return linear(x, head_);
}

template <class S>
std::vector<AttentionRecord<S>> records_for_sample(
    const std::vector<Tensor<S>>& block_attn, int64_t sample) {
  std::vector<AttentionRecord<S>> out;
  out.reserve(block_attn.size());
  for (const Tensor<S>& t : block_attn) {
    const int64_t m = t.dim(1);
    AttentionRecord<S> rec;
    rec.tokens = m;
    const S* base = t.data_ptr() + sample * m * m;
    rec.matrix.assign(base, base + m * m);
    out.push_back(std::move(rec));
  }
  return out;
}

template <class S>
std::vector<S> attention_rollout(const std::vector<AttentionRecord<S>>& records) {
  if (records.empty()) {
    throw Error("attention_rollout: need at least one record");
  }
  const int64_t m = records.front().tokens;
  for (const auto& rec : records) {
    if (rec.tokens != m ||
        rec.matrix.size() != static_cast<size_t>(m) * static_cast<size_t>(m)) {
      throw Error("attention_rollout: records must all be square M x M");
    }
    for (int64_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < m; ++j) {
        s += static_cast<double>(rec.matrix[static_cast<size_t>(i * m + j)]);
      }
      if (std::abs(s - 1.0) > 1e-4) {
        throw Error("attention_rollout: record row " + std::to_string(i) +
                    " sums to " + std::to_string(s) + ", not 1");
      }
    }
  }

  // Residual mixing, then renormalize so each layer stays row-stochastic.
  auto mixed = [&](const AttentionRecord<S>& rec) {
    std::vector<double> a(static_cast<size_t>(m) * static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (int64_t j = 0; j < m; ++j) {
        double v = 0.5 * static_cast<double>(
                             rec.matrix[static_cast<size_t>(i * m + j)]) +
                   (i == j ? 0.5 : 0.0);
        a[static_cast<size_t>(i * m + j)] = v;
        row += v;
      }
      for (int64_t j = 0; j < m; ++j) a[static_cast<size_t>(i * m + j)] /= row;
    }
    return a;
  };

  std::vector<double> result = mixed(records.front());
  std::vector<double> next(result.size());
  for (size_t l = 1; l < records.size(); ++l) {
    const std::vector<double> a = mixed(records[l]);  // layer l mixes last
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int64_t k2 = 0; k2 < m; ++k2) {
          acc += a[static_cast<size_t>(i * m + k2)] *
                 result[static_cast<size_t>(k2 * m + j)];
        }
        next[static_cast<size_t>(i * m + j)] = acc;
      }
    }
    std::swap(result, next);
  }
  std::vector<S> out(result.size());
  for (size_t i = 0; i < result.size(); ++i) out[i] = static_cast<S>(result[i]);
  return out;
}

#define ICONPEFT_INSTANTIATE_VIT(S)                                           \
  template Tensor<S> linear<S>(const Tensor<S>&, const LinearParams<S>&);     \
  template struct Block<S>;                                                   \
  template class VisionTransformer<S>;                                        \
  template std::vector<AttentionRecord<S>> records_for_sample<S>(             \
      const std::vector<Tensor<S>>&, int64_t);                                \
  template std::vector<S> attention_rollout<S>(                               \
      const std::vector<AttentionRecord<S>>&);

ICONPEFT_INSTANTIATE_VIT(float)
ICONPEFT_INSTANTIATE_VIT(double)

}  // namespace iconpeft
