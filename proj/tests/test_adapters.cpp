#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "iconpeft/config.hpp"
#include "iconpeft/vit.hpp"

using namespace iconpeft;

namespace {

ViTConfig small_cfg() {
  ViTConfig cfg;
  cfg.image_size = 16;
  cfg.patch_size = 4;
  cfg.in_channels = 3;
  cfg.embed_dim = 16;
  cfg.depth = 2;
  cfg.num_heads = 2;
  cfg.mlp_ratio = 2.0;
  cfg.num_classes = 4;
  return cfg;
}

AdapterRecipe make_recipe(AdapterKind kind) {
  AdapterRecipe r;
  r.kind = kind;
  r.bottleneck_dim = 8;
  r.lora_rank = 4;
  return r;
}

template <class S>
bool bit_equal(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

double erf_gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("recipe validation and warnings") {
  AdapterRecipe r;
  r.kernel_size = 4;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r = AdapterRecipe{};
  r.bottleneck_dim = 0;
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r = AdapterRecipe{};
  r.kind = AdapterKind::BitFit;
  r.placement = Placement::Parallel;
  r.kernel_size = 5;
  CHECK(r.validate().size() == 2);  // both fields ignored for bitfit
  CHECK(adapter_kind_from_string("icon") == AdapterKind::Icon);
  CHECK_THROWS_AS(adapter_kind_from_string("nope"), ConfigError);
}

TEST_CASE("registry rejects duplicates and keeps the counting identity") {
  ParameterRegistry<float> reg;
  reg.add("a", Tensor<float>::zeros({2, 2}), ParamOwner::Backbone, true);
  CHECK_THROWS_AS(
      reg.add("a", Tensor<float>::zeros({2}), ParamOwner::Backbone, true),
      ConfigError);
  reg.add("b", Tensor<float>::zeros({3}), ParamOwner::Head, false);
  reg.set_trainable("b", true);
  const int64_t all = count_parameters(reg, CountScope::All);
  const int64_t trainable = count_parameters(reg, CountScope::Trainable);
  int64_t frozen = 0;
  for (const auto& e : reg.entries()) {
    if (!e.trainable) frozen += e.tensor.numel();
  }
  CHECK(all == 7);
  CHECK(trainable == 3);
  CHECK(trainable + frozen == all);
}

TEST_CASE("icon adapter with zero up-projection contributes exactly zero") {
  VisionTransformer<double> model(small_cfg(), make_recipe(AdapterKind::Icon), 3);
  const IconAdapter<double>& a = *model.blocks()[0].icon;
  Tensor<double> x = Tensor<double>::randn({2, 16, 16}, 5);
  Tensor<double> xa = icon_forward(x, a);
  CHECK(xa.shape() == Shape{2, 16, 16});
  for (int64_t i = 0; i < xa.numel(); ++i) CHECK(xa.data()[i] == 0.0);
}

TEST_CASE("icon forward keeps the token shape") {
  ViTConfig cfg;  // tiny: M=64, D=64
  AdapterRecipe r = make_recipe(AdapterKind::Icon);
  r.bottleneck_dim = 64;
  VisionTransformer<double> model(cfg, r, 7);
  randomize_params(model.registry(), 11, 0.05);
  Tensor<double> x = Tensor<double>::randn({2, 64, 64}, 13);
  CHECK(icon_forward(x, *model.blocks()[0].icon).shape() == Shape{2, 64, 64});
}

TEST_CASE("tiny icon instance matches a straight-line oracle") {
  // B=1, M=4 (2x2 grid), D=8, d=2, K=3, all weights random.
  const int64_t D = 8;
  const int64_t d = 2;
  const int64_t K = 3;
  IconAdapter<double> a;
  a.grid_h = 2;
  a.grid_w = 2;
  a.kernel_size = K;
  a.bottleneck_dim = d;
  a.down_w = Tensor<double>::randn({D, d}, 101, 0.5);
  a.down_b = Tensor<double>::randn({d}, 102, 0.5);
  a.kgen_w = Tensor<double>::randn({d, d * K * K}, 103, 0.5);
  a.kgen_b = Tensor<double>::randn({d * K * K}, 104, 0.5);
  a.up_w = Tensor<double>::randn({d, D}, 105, 0.5);
  a.up_b = Tensor<double>::randn({D}, 106, 0.5);
  a.gamma = Tensor<double>::scalar(1.0);
  Tensor<double> x = Tensor<double>::randn({1, 4, D}, 107);

  Tensor<double> got = icon_forward(x, a);

  // Step 1: down-projection.
  double h[4][2];
  for (int64_t m = 0; m < 4; ++m) {
    for (int64_t j = 0; j < d; ++j) {
      double acc = a.down_b.data()[j];
      for (int64_t i = 0; i < D; ++i) {
        acc += x.data()[m * D + i] * a.down_w.data()[i * d + j];
      }
      h[m][j] = acc;
    }
  }
  // Step 2: kernel generation from the pooled grid.
  double pooled[2] = {0, 0};
  for (int64_t m = 0; m < 4; ++m) {
    pooled[0] += h[m][0] / 4.0;
    pooled[1] += h[m][1] / 4.0;
  }
  double kernels[2][3][3];
  for (int64_t c = 0; c < d; ++c) {
    for (int64_t u = 0; u < K; ++u) {
      for (int64_t v = 0; v < K; ++v) {
        const int64_t col = c * K * K + u * K + v;
        double acc = a.kgen_b.data()[col];
        for (int64_t i = 0; i < d; ++i) {
          acc += pooled[i] * a.kgen_w.data()[i * d * K * K + col];
        }
        kernels[c][u][v] = acc;
      }
    }
  }
  // Step 3: channel-wise conv on the 2x2 grid (token m = gy*2+gx).
  double conv[4][2];
  for (int64_t c = 0; c < d; ++c) {
    for (int64_t gy = 0; gy < 2; ++gy) {
      for (int64_t gx = 0; gx < 2; ++gx) {
        double acc = 0;
        for (int64_t u = 0; u < K; ++u) {
          for (int64_t v = 0; v < K; ++v) {
            const int64_t y = gy + u - 1;
            const int64_t xx = gx + v - 1;
            if (y < 0 || y >= 2 || xx < 0 || xx >= 2) continue;
            acc += h[y * 2 + xx][c] * kernels[c][u][v];
          }
        }
        conv[gy * 2 + gx][c] = acc;
      }
    }
  }
  // Steps 4-5: GeLU then up-projection.
  for (int64_t m = 0; m < 4; ++m) {
    for (int64_t j = 0; j < D; ++j) {
      double acc = a.up_b.data()[j];
      for (int64_t c = 0; c < d; ++c) {
        acc += erf_gelu(conv[m][c]) * a.up_w.data()[c * D + j];
      }
      CHECK(got.data()[m * D + j] == doctest::Approx(acc).epsilon(1e-5));
    }
  }
}

TEST_CASE("generate_kernels properties") {
  const int64_t d = 4;
  IconAdapter<double> a;
  a.grid_h = 2;
  a.grid_w = 2;
  a.kernel_size = 3;
  a.bottleneck_dim = d;
  a.kgen_w = Tensor<double>::randn({d, d * 9}, 301, 0.3);
  a.kgen_b = Tensor<double>::randn({d * 9}, 302, 0.3);

  SUBCASE("identical samples produce identical kernels bit-exactly") {
    Tensor<double> one = Tensor<double>::randn({1, 2, 2, d}, 303);
    Tensor<double> two = Tensor<double>::zeros({2, 2, 2, d});
    for (int64_t i = 0; i < one.numel(); ++i) {
      two.data()[i] = one.data()[i];
      two.data()[one.numel() + i] = one.data()[i];
    }
    Tensor<double> k = generate_kernels(two, a);
    CHECK(k.shape() == Shape{2, d, 3, 3});
    for (int64_t i = 0; i < d * 9; ++i) {
      CHECK(k.data()[i] == k.data()[d * 9 + i]);
    }
  }
  SUBCASE("zero input and zero bias give zero kernels") {
    for (double& v : a.kgen_b.data()) v = 0.0;
    Tensor<double> k = generate_kernels(Tensor<double>::zeros({1, 2, 2, d}), a);
    for (int64_t i = 0; i < k.numel(); ++i) CHECK(k.data()[i] == 0.0);
  }
  SUBCASE("kernel generator parameter count at d=64, K=3") {
    CHECK(64 * 576 + 576 == 37440);
    AdapterRecipe r = make_recipe(AdapterKind::Icon);
    r.bottleneck_dim = 64;
    ViTConfig cfg;  // tiny
    VisionTransformer<float> model(cfg, r, 0, WeightInit::Zeros);
    const auto* w = model.registry().find("blocks.0.adapter.kgen.weight");
    const auto* b = model.registry().find("blocks.0.adapter.kgen.bias");
    REQUIRE(w != nullptr);
    REQUIRE(b != nullptr);
    CHECK(w->tensor.numel() + b->tensor.numel() == 37440);
  }
}

TEST_CASE("bottleneck adapter forward") {
  const int64_t D = 6;
  const int64_t d = 3;
  BottleneckAdapter<double> a;
  a.down_w = Tensor<double>::randn({D, d}, 401, 0.4);
  a.down_b = Tensor<double>::randn({d}, 402, 0.4);
  a.up_w = Tensor<double>::randn({d, D}, 403, 0.4);
  a.up_b = Tensor<double>::zeros({D});
  Tensor<double> x = Tensor<double>::randn({2, 5, D}, 404);

  SUBCASE("zero up-projection contributes zero") {
    BottleneckAdapter<double> z = a;
    z.up_w = Tensor<double>::zeros({d, D});
    Tensor<double> out = bottleneck_forward(x, z);
    for (int64_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == 0.0);
  }
  SUBCASE("identity projections pass large positive inputs through") {
    BottleneckAdapter<double> ident;
    ident.down_w = Tensor<double>::zeros({D, D});
    ident.up_w = Tensor<double>::zeros({D, D});
    for (int64_t i = 0; i < D; ++i) {
      ident.down_w.data()[i * D + i] = 1.0;
      ident.up_w.data()[i * D + i] = 1.0;
    }
    ident.down_b = Tensor<double>::zeros({D});
    ident.up_b = Tensor<double>::zeros({D});
    Tensor<double> big = Tensor<double>::full({1, 2, D}, 25.0);
    Tensor<double> out = bottleneck_forward(big, ident);
    for (int64_t i = 0; i < out.numel(); ++i) {
      CHECK(out.data()[i] == doctest::Approx(25.0).epsilon(1e-6));
    }
  }
  SUBCASE("matches the two-matmul + gelu oracle") {
    Tensor<double> out = bottleneck_forward(x, a);
    for (int64_t r = 0; r < 10; ++r) {
      for (int64_t j = 0; j < D; ++j) {
        double acc = a.up_b.data()[j];
        for (int64_t c = 0; c < d; ++c) {
          double hidden = a.down_b.data()[c];
          for (int64_t i = 0; i < D; ++i) {
            hidden += x.data()[r * D + i] * a.down_w.data()[i * d + c];
          }
          acc += erf_gelu(hidden) * a.up_w.data()[c * D + j];
        }
        CHECK(out.data()[r * D + j] == doctest::Approx(acc).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("lora") {
  const int64_t D = 8;
  const int64_t r = 8;  // full rank for the dense-equivalence oracle
  Tensor<double> w = Tensor<double>::randn({D, D}, 501, 0.4);
  Tensor<double> x = Tensor<double>::randn({2, 3, D}, 502);

  SUBCASE("zero B leaves the frozen path bit-exact") {
    LoraPair<double> lp{Tensor<double>::randn({D, 4}, 503, 0.4),
                        Tensor<double>::zeros({4, D})};
    Tensor<double> base = matmul(x, w);
    Tensor<double> out = lora_apply(x, w, lp);
    CHECK(bit_equal(base, out));
  }
  SUBCASE("full-rank pair equals the dense update") {
    LoraPair<double> lp{Tensor<double>::randn({D, r}, 504, 0.4),
                        Tensor<double>::randn({r, D}, 505, 0.4)};
    Tensor<double> dense = add(w, matmul(lp.a, lp.b));
    Tensor<double> expect = matmul(x, dense);
    Tensor<double> out = lora_apply(x, w, lp);
    for (int64_t i = 0; i < out.numel(); ++i) {
      CHECK(out.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-6));
    }
  }
  SUBCASE("rank above the projection width is rejected") {
    ViTConfig cfg = small_cfg();
    AdapterRecipe bad = make_recipe(AdapterKind::Lora);
    bad.lora_rank = cfg.embed_dim + 1;
    CHECK_THROWS_AS(VisionTransformer<float>(cfg, bad, 1), ConfigError);
  }
  SUBCASE("trainable count per wrapped projection is 2 D r") {
    ViTConfig cfg = small_cfg();
    AdapterRecipe rec = make_recipe(AdapterKind::Lora);
    VisionTransformer<float> model(cfg, rec, 0, WeightInit::Zeros);
    const auto* la = model.registry().find("blocks.0.attn.q.lora_a");
    const auto* lb = model.registry().find("blocks.0.attn.q.lora_b");
    REQUIRE(la != nullptr);
    REQUIRE(lb != nullptr);
    CHECK(la->tensor.numel() + lb->tensor.numel() ==
          2 * cfg.embed_dim * rec.lora_rank);
  }
}

TEST_CASE("freeze policy trainable sets") {
  const ViTConfig cfg = small_cfg();
  auto trainable_names = [&](AdapterKind kind) {
    VisionTransformer<float> model(cfg, make_recipe(kind), 0, WeightInit::Zeros);
    std::vector<std::string> names;
    for (const auto& e : model.registry().entries()) {
      if (e.trainable) names.push_back(e.name);
      CHECK(e.trainable == e.tensor.requires_grad());
    }
    return names;
  };

  SUBCASE("frozen trains nothing") { CHECK(trainable_names(AdapterKind::Frozen).empty()); }
  SUBCASE("full trains everything") {
    VisionTransformer<float> model(cfg, make_recipe(AdapterKind::Full), 0,
                                   WeightInit::Zeros);
    CHECK(count_parameters(model.registry(), CountScope::Trainable) ==
          count_parameters(model.registry(), CountScope::All));
  }
  SUBCASE("linear probe trains the head only") {
    for (const auto& n : trainable_names(AdapterKind::LinearProbe)) {
      CHECK(n.rfind("head.", 0) == 0);
    }
    CHECK(trainable_names(AdapterKind::LinearProbe).size() == 2);
  }
  SUBCASE("bitfit trains backbone biases plus head") {
    for (const auto& n : trainable_names(AdapterKind::BitFit)) {
      const bool ok = n.rfind("head.", 0) == 0 ||
                      (n.size() > 5 && n.substr(n.size() - 5) == ".bias");
      CHECK(ok);
    }
  }
  SUBCASE("ln_only trains LayerNorm affine params plus head") {
    for (const auto& n : trainable_names(AdapterKind::LnOnly)) {
      const bool ok = n.rfind("head.", 0) == 0 ||
                      n.find("ln1.") != std::string::npos ||
                      n.find("ln2.") != std::string::npos ||
                      n.rfind("norm.", 0) == 0;
      CHECK(ok);
    }
    // 2 LN per block * 2 params * 2 blocks + final norm 2 + head 2
    CHECK(trainable_names(AdapterKind::LnOnly).size() == 12);
  }
  SUBCASE("adapter recipes train adapters plus head only") {
    for (AdapterKind kind :
         {AdapterKind::Icon, AdapterKind::BottleneckSequential,
          AdapterKind::AdaptformerParallel, AdapterKind::Lora}) {
      VisionTransformer<float> model(cfg, make_recipe(kind), 0, WeightInit::Zeros);
      for (const auto& e : model.registry().entries()) {
        if (e.trainable) {
          CHECK((e.owner == ParamOwner::Adapter || e.owner == ParamOwner::Head));
        } else {
          CHECK(e.owner == ParamOwner::Backbone);
        }
      }
    }
  }
}

TEST_CASE("parameter counts reproduce the ViT-B-like closed forms") {
  const ViTConfig vitb = model_preset("vitb-like");
  auto trainable_count = [&](AdapterRecipe r) {
    VisionTransformer<float> model(vitb, r, 0, WeightInit::Zeros);
    return count_parameters(model.registry(), CountScope::Trainable);
  };

  AdapterRecipe icon;  // d=64, K=3
  icon.kind = AdapterKind::Icon;
  const int64_t icon_count = trainable_count(icon);
  CHECK(icon_count == 1715824);
  CHECK(icon_adapter_param_count(768, 64, 3) == 136577);

  AdapterRecipe probe;
  probe.kind = AdapterKind::LinearProbe;
  CHECK(trainable_count(probe) == 76900);  // 768*100 + 100

  AdapterRecipe bott;
  bott.kind = AdapterKind::BottleneckSequential;
  CHECK(trainable_count(bott) == 2456164);

  AdapterRecipe af;
  af.kind = AdapterKind::AdaptformerParallel;
  const int64_t af_count = trainable_count(af);
  CHECK(std::abs(static_cast<double>(af_count) - 1.26e6) / 1.26e6 <= 0.02);

  // Ordering matches the published table: adaptformer < icon < bottleneck.
  CHECK(af_count < icon_count);
  CHECK(icon_count < trainable_count(bott));
}

TEST_CASE("icon trainable ratio sits in the 1.9 to 2.0 percent band") {
  AdapterRecipe icon;
  VisionTransformer<float> model(model_preset("vitb-like"), icon, 0,
                                 WeightInit::Zeros);
  const double ratio = trainable_ratio_percent(model.registry());
  CHECK(ratio >= 1.9);
  CHECK(ratio <= 2.0);
}

TEST_CASE("kernel-size sweep grows by the closed-form delta") {
  const ViTConfig cfg = small_cfg();
  auto count_for = [&](int64_t k) {
    AdapterRecipe r = make_recipe(AdapterKind::Icon);
    r.kernel_size = k;
    VisionTransformer<float> model(cfg, r, 0, WeightInit::Zeros);
    return count_parameters(model.registry(), CountScope::Trainable);
  };
  const int64_t d = make_recipe(AdapterKind::Icon).bottleneck_dim;
  const int64_t c1 = count_for(1);
  const int64_t c3 = count_for(3);
  const int64_t c5 = count_for(5);
  const int64_t c7 = count_for(7);
  CHECK(c1 < c3);
  CHECK(c3 < c5);
  CHECK(c5 < c7);
  CHECK(c5 - c3 == cfg.depth * d * (25 - 9) * (d + 1));
  CHECK(c7 - c5 == cfg.depth * d * (49 - 25) * (d + 1));
}

TEST_CASE("sequential and parallel icon have identical trainable counts") {
  const ViTConfig cfg = small_cfg();
  AdapterRecipe seq = make_recipe(AdapterKind::Icon);
  AdapterRecipe par = seq;
  par.placement = Placement::Parallel;
  VisionTransformer<float> a(cfg, seq, 0, WeightInit::Zeros);
  VisionTransformer<float> b(cfg, par, 0, WeightInit::Zeros);
  CHECK(count_parameters(a.registry(), CountScope::Trainable) ==
        count_parameters(b.registry(), CountScope::Trainable));
}

TEST_CASE("zero-impact start for every recipe that preserves the residual") {
  const ViTConfig cfg = small_cfg();
  const uint64_t seed = 97;
  VisionTransformer<float> reference(cfg, make_recipe(AdapterKind::Frozen), seed);
  Tensor<float> x = Tensor<float>::randn({4, 3, 16, 16}, 99);
  Tensor<float> ref_out = reference.forward(x);

  auto check_zero_impact = [&](AdapterRecipe r) {
    VisionTransformer<float> adapted(cfg, r, seed);
    CHECK(bit_equal(adapted.forward(x), ref_out));
  };

  AdapterRecipe icon_seq = make_recipe(AdapterKind::Icon);
  icon_seq.eq6_literal = false;  // residual-preserving form
  check_zero_impact(icon_seq);
  for (int64_t k : {1, 5, 7}) {
    AdapterRecipe r = icon_seq;
    r.kernel_size = k;
    check_zero_impact(r);
  }
  AdapterRecipe icon_par = make_recipe(AdapterKind::Icon);
  icon_par.placement = Placement::Parallel;
  check_zero_impact(icon_par);
  check_zero_impact(make_recipe(AdapterKind::BottleneckSequential));
  check_zero_impact(make_recipe(AdapterKind::AdaptformerParallel));
  check_zero_impact(make_recipe(AdapterKind::Lora));
  check_zero_impact(make_recipe(AdapterKind::BitFit));
  check_zero_impact(make_recipe(AdapterKind::LnOnly));
  check_zero_impact(make_recipe(AdapterKind::LinearProbe));
  check_zero_impact(make_recipe(AdapterKind::Full));
}

TEST_CASE("gamma gate: literal sequential form with gamma 0 is the attention residual") {
  const ViTConfig cfg = small_cfg();
  AdapterRecipe r = make_recipe(AdapterKind::Icon);
  r.eq6_literal = true;
  for (uint64_t seed : {1u, 2u, 3u}) {
    VisionTransformer<double> model(cfg, r, seed);
    randomize_params(model.registry(), seed + 100, 0.2);  // wake the adapter up
    for (auto& blk : model.blocks()) {
      blk.icon->gamma.data()[0] = 0.0;
    }
    Tensor<double> x = Tensor<double>::randn({2, 16, 16}, seed + 200);
    Block<double>& blk = model.blocks()[0];
    Tensor<double> attn_res = blk.attention_sub_block(x);
    Tensor<double> out = blk.mlp_sub_block(attn_res);
    CHECK(bit_equal(out, attn_res));
  }
}

TEST_CASE("sequential and parallel placements are distinct models") {
  const ViTConfig cfg = small_cfg();
  AdapterRecipe seq = make_recipe(AdapterKind::Icon);
  seq.eq6_literal = false;
  AdapterRecipe par = seq;
  par.placement = Placement::Parallel;
  const uint64_t seed = 7;
  VisionTransformer<double> a(cfg, seq, seed);
  VisionTransformer<double> b(cfg, par, seed);
  randomize_params(a.registry(), 500, 0.2);
  randomize_params(b.registry(), 500, 0.2);  // identical weights by name
  Tensor<double> x = Tensor<double>::randn({2, 3, 16, 16}, 501);
  Tensor<double> ya = a.forward(x);
  Tensor<double> yb = b.forward(x);
  double max_diff = 0;
  for (int64_t i = 0; i < ya.numel(); ++i) {
    max_diff = std::max(max_diff, std::abs(ya.data()[i] - yb.data()[i]));
  }
  CHECK(max_diff > 1e-9);
}

TEST_CASE("per-sample specialization of the dynamic adapter") {
  const ViTConfig cfg = small_cfg();
  AdapterRecipe r = make_recipe(AdapterKind::Icon);
  VisionTransformer<double> model(cfg, r, 3);
  randomize_params(model.registry(), 600, 0.3);
  const IconAdapter<double>& a = *model.blocks()[0].icon;

  Tensor<double> s0 = Tensor<double>::randn({1, 16, 16}, 601);
  Tensor<double> s1 = Tensor<double>::randn({1, 16, 16}, 602);
  auto stack = [&](const Tensor<double>& first, const Tensor<double>& second) {
    Tensor<double> out = Tensor<double>::zeros({2, 16, 16});
    for (int64_t i = 0; i < 256; ++i) {
      out.data()[i] = first.data()[i];
      out.data()[256 + i] = second.data()[i];
    }
    return out;
  };

  // Duplicated sample: duplicated rows, bit-exact.
  Tensor<double> dup = icon_forward(stack(s0, s0), a);
  for (int64_t i = 0; i < 256; ++i) {
    CHECK(dup.data()[i] == dup.data()[256 + i]);
  }

  // Replacing the second sample leaves the first row bit-identical.
  Tensor<double> mixed = icon_forward(stack(s0, s1), a);
  bool second_changed = false;
  for (int64_t i = 0; i < 256; ++i) {
    CHECK(mixed.data()[i] == dup.data()[i]);
    if (mixed.data()[256 + i] != dup.data()[256 + i]) second_changed = true;
  }
  CHECK(second_changed);
}

TEST_CASE("copying backbone params by name") {
  const ViTConfig cfg = small_cfg();
  VisionTransformer<float> src(cfg, make_recipe(AdapterKind::Full), 21);
  VisionTransformer<float> dst(cfg, make_recipe(AdapterKind::Icon), 22);
  const int64_t copied =
      copy_matching_params(src.registry(), dst.registry(), ParamOwner::Backbone);
  CHECK(copied > 0);
  Tensor<float> x = Tensor<float>::randn({2, 3, 16, 16}, 23);
  // Same backbone + zero-impact adapter (non-literal) means same function.
  AdapterRecipe nl = make_recipe(AdapterKind::Icon);
  nl.eq6_literal = false;
  VisionTransformer<float> dst2(cfg, nl, 22);
  copy_matching_params(src.registry(), dst2.registry(), ParamOwner::Backbone);
  // Head seeds differ between 21 and 22, so compare block outputs instead.
  Tensor<float> a = src.blocks()[0].forward(src.patch_embed(x));
  Tensor<float> b = dst2.blocks()[0].forward(dst2.patch_embed(x));
  CHECK(bit_equal(a, b));
}
