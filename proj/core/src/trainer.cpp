#include "iconpeft/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace iconpeft {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (learning_rate <= 0) throw ConfigError("train: learning_rate must be > 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (eps <= 0) throw ConfigError("train: eps must be > 0");
  if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
  if (grad_clip < 0) throw ConfigError("train: grad_clip must be >= 0");
}

template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::span<const int> labels) {
  if (logits.ndim() != 2) {
    throw ShapeError("cross_entropy: logits must be [B, classes], got " +
                     shape_str(logits.shape()));
  }
  const int64_t b = logits.dim(0);
  const int64_t k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != b) {
    throw ShapeError("cross_entropy: got " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(b));
  }
  for (int64_t i = 0; i < b; ++i) {
    if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= k) {
      throw DataError("cross_entropy: label " +
                      std::to_string(labels[static_cast<size_t>(i)]) +
                      " of sample " + std::to_string(i) + " is outside [0, " +
                      std::to_string(k) + ")");
    }
  }

  Tensor<S> out = Tensor<S>::zeros({1});
  const S* pl = logits.data_ptr();
  double total = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    const S* row = pl + i * k;
    S mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      sum += std::exp(static_cast<double>(row[j] - mx));
    }
    const double lse = static_cast<double>(mx) + std::log(sum);
    total += lse - static_cast<double>(row[labels[static_cast<size_t>(i)]]);
  }
  out.data()[0] = static_cast<S>(total / static_cast<double>(b));
  detail::check_finite(out, "cross_entropy");

  if (logits.requires_grad()) {
    out.set_requires_grad(true);
    if (auto* tape = Tape<S>::active()) {
      std::vector<int> labels_copy(labels.begin(), labels.end());
      tape->record(out, [logits, out, labels_copy]() mutable {
        if (!out.has_grad()) return;
        const S g = out.grad()[0];
        const int64_t b = logits.dim(0);
        const int64_t k = logits.dim(1);
        const S* pl = logits.data_ptr();
        S* gl = logits.grad().data();
        const S invb = S(1) / static_cast<S>(b);
        for (int64_t i = 0; i < b; ++i) {
          const S* row = pl + i * k;
          S mx = row[0];
          for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
          double sum = 0.0;
          for (int64_t j = 0; j < k; ++j) {
            sum += std::exp(static_cast<double>(row[j] - mx));
          }
          S* grow = gl + i * k;
          for (int64_t j = 0; j < k; ++j) {
            const double p = std::exp(static_cast<double>(row[j] - mx)) / sum;
            const double onehot = j == labels_copy[static_cast<size_t>(i)] ? 1.0 : 0.0;
            grow[j] += g * invb * static_cast<S>(p - onehot);
          }
        }
      });
    }
  }
  return out;
}

template <class S>
AdamW<S>::AdamW(const TrainConfig& cfg)
    : lr_(cfg.learning_rate),
      wd_(cfg.weight_decay),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.eps) {}

template <class S>
void AdamW<S>::step(ParameterRegistry<S>& reg) {
  // State slots are created on first contact, in registry order.
  if (slots_.empty()) {
    for (auto& e : reg.entries()) {
      if (!e.trainable) continue;
      Slot s;
      s.name = e.name;
      s.m.assign(static_cast<size_t>(e.tensor.numel()), S(0));
      s.v.assign(static_cast<size_t>(e.tensor.numel()), S(0));
      slots_.push_back(std::move(s));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  size_t si = 0;
  for (auto& e : reg.entries()) {
    if (!e.trainable) continue;
    if (si >= slots_.size() || slots_[si].name != e.name) {
      throw Error("optimizer state does not match the registry trainable set");
    }
    Slot& slot = slots_[si++];
    e.tensor.ensure_grad();
    auto g = e.tensor.grad();
    auto p = e.tensor.data();
    if (g.size() != p.size()) {
      throw Error("param/grad size mismatch for '" + e.name + "'");
    }
    const S b1 = static_cast<S>(beta1_);
    const S b2 = static_cast<S>(beta2_);
    const double decay = e.weight_decay ? wd_ : 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
      const S gi = g[i];
      slot.m[i] = b1 * slot.m[i] + (S(1) - b1) * gi;
      slot.v[i] = b2 * slot.v[i] + (S(1) - b2) * gi * gi;
      const double mhat = static_cast<double>(slot.m[i]) / bc1;
      const double vhat = static_cast<double>(slot.v[i]) / bc2;
      const double upd = mhat / (std::sqrt(vhat) + eps_);
      const double theta = static_cast<double>(p[i]);
      p[i] = static_cast<S>(theta - lr_ * upd - lr_ * decay * theta);
    }
  }
  if (si != slots_.size()) {
    throw Error("optimizer state does not match the registry trainable set");
  }
}

template <class S>
std::vector<std::string> AdamW<S>::state_names() const {
  std::vector<std::string> names;
  names.reserve(slots_.size());
  for (const auto& s : slots_) names.push_back(s.name);
  return names;
}

namespace {

template <class S>
int64_t count_correct(const Tensor<S>& logits, std::span<const int> labels) {
  const int64_t b = logits.dim(0);
  const int64_t k = logits.dim(1);
  const S* pl = logits.data_ptr();
  int64_t correct = 0;
  for (int64_t i = 0; i < b; ++i) {
    const S* row = pl + i * k;
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (best == labels[static_cast<size_t>(i)]) ++correct;
  }
  return correct;
}

template <class S>
void clip_gradients(ParameterRegistry<S>& reg, double max_norm) {
  double sq = 0.0;
  for (auto& e : reg.entries()) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    for (S g : e.tensor.grad()) {
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const S factor = static_cast<S>(max_norm / norm);
  for (auto& e : reg.entries()) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    for (S& g : e.tensor.grad()) g *= factor;
  }
}

}  // namespace

template <class S>
EvalResult evaluate(const VisionTransformer<S>& model, const Dataset& data,
                    int64_t batch_size) {
  if (data.n == 0) throw DataError("evaluate: empty dataset");
  data.validate();
  EvalResult res;
  double loss_sum = 0.0;
  int64_t correct = 0;
  for (int64_t start = 0; start < data.n; start += batch_size) {
    const int64_t end = std::min<int64_t>(start + batch_size, data.n);
    std::vector<int64_t> idx(static_cast<size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor<S> x = make_batch<S>(data, idx);
    std::vector<int> labels(static_cast<size_t>(end - start));
    for (int64_t i = start; i < end; ++i) {
      labels[static_cast<size_t>(i - start)] = data.labels[static_cast<size_t>(i)];
    }
    Tensor<S> logits = model.forward(x);
    Tensor<S> loss = cross_entropy(logits, labels);
    loss_sum += static_cast<double>(loss.item()) * static_cast<double>(end - start);
    correct += count_correct(logits, labels);
  }
  res.mean_loss = loss_sum / static_cast<double>(data.n);
  res.accuracy = static_cast<double>(correct) / static_cast<double>(data.n);
  return res;
}

template <class S>
TrainResult train(VisionTransformer<S>& model, const Dataset& train_data,
                  const Dataset* val_data, const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.n == 0) throw DataError("train: empty dataset");
  train_data.validate();
  if (train_data.num_classes != model.config().num_classes) {
    throw ConfigError("train: dataset has " +
                      std::to_string(train_data.num_classes) +
                      " classes but the model head has " +
                      std::to_string(model.config().num_classes));
  }

  AdamW<S> opt(cfg);
  auto& reg = model.registry();
  SeededRng shuffle_rng(derive_seed(cfg.seed, "train.shuffle"));
  std::vector<int64_t> order(static_cast<size_t>(train_data.n));
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    seeded_shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    int64_t correct = 0;
    for (int64_t start = 0; start < train_data.n; start += cfg.batch_size) {
      const int64_t end = std::min<int64_t>(start + cfg.batch_size, train_data.n);
      const std::span<const int64_t> idx(order.data() + start,
                                         static_cast<size_t>(end - start));
      Tensor<S> x = make_batch<S>(train_data, idx);
      std::vector<int> labels(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) {
        labels[i] = train_data.labels[static_cast<size_t>(idx[i])];
      }

      Tape<S> tape;
      Tensor<S> logits = model.forward(x);
      Tensor<S> loss = cross_entropy(logits, labels);
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(opt.steps_taken() + 1));
      }
      loss_sum += loss_value * static_cast<double>(end - start);
      correct += count_correct(logits, labels);

      tape.backward(loss);
      if (cfg.grad_clip > 0) clip_gradients(reg, cfg.grad_clip);
      opt.step(reg);
      ++result.steps;
      for (auto& e : reg.entries()) {
        if (e.trainable) e.tensor.zero_grad();
      }
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(train_data.n);
    em.train_accuracy =
        static_cast<double>(correct) / static_cast<double>(train_data.n);
    if (val_data && val_data->n > 0) {
      const EvalResult ev = evaluate(model, *val_data, cfg.batch_size);
      em.val_loss = ev.mean_loss;
      em.val_accuracy = ev.accuracy;
    }
    result.history.push_back(em);
  }
  return result;
}

template <class S>
uint64_t frozen_param_hash(const ParameterRegistry<S>& reg) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& e : reg.entries()) {
    if (e.trainable) continue;
    const auto bytes = std::as_bytes(e.tensor.data());
    for (std::byte b : bytes) {
      h ^= static_cast<unsigned char>(b);
      h *= 0x100000001b3ull;
    }
  }
  return h;
}

#define ICONPEFT_INSTANTIATE_TRAINER(S)                                       \
  template Tensor<S> cross_entropy<S>(const Tensor<S>&, std::span<const int>); \
  template class AdamW<S>;                                                    \
  template EvalResult evaluate<S>(const VisionTransformer<S>&, const Dataset&, \
                                  int64_t);                                   \
  template TrainResult train<S>(VisionTransformer<S>&, const Dataset&,        \
                                const Dataset*, const TrainConfig&);          \
  template uint64_t frozen_param_hash<S>(const ParameterRegistry<S>&);

ICONPEFT_INSTANTIATE_TRAINER(float)
ICONPEFT_INSTANTIATE_TRAINER(double)

}  // namespace iconpeft
