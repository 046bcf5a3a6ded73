#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iconpeft/data.hpp"
#include "iconpeft/vit.hpp"

namespace iconpeft {

struct TrainConfig {
  int64_t epochs = 5;
  int64_t batch_size = 16;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t seed = 42;
  double grad_clip = 0.0;  // max grad norm; 0 disables

  void validate() const;
};

// Mean over the batch of -log softmax(logits)[label], stable log-sum-exp.
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::span<const int> labels);

// Decoupled weight decay Adam over the registry's trainable set. Decay only
// touches entries flagged for it (no biases, no norm affine, no gamma/scale).
template <class S>
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg);

  void step(ParameterRegistry<S>& reg);
  int64_t steps_taken() const { return t_; }
  std::vector<std::string> state_names() const;

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  struct Slot {
    std::string name;
    std::vector<S> m, v;
  };
  std::vector<Slot> slots_;
};

struct EpochMetrics {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int64_t steps = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Deterministic evaluation; never mutates parameters.
template <class S>
EvalResult evaluate(const VisionTransformer<S>& model, const Dataset& data,
                    int64_t batch_size = 64);

// Seeded-shuffle epochs of forward/loss/backward/AdamW over the trainable
// set. Aborts with NumericError naming the step if the loss turns non-finite.
template <class S>
TrainResult train(VisionTransformer<S>& model, const Dataset& train_data,
                  const Dataset* val_data, const TrainConfig& cfg);

// FNV-1a over the raw bytes of every frozen parameter, in registry order.
template <class S>
uint64_t frozen_param_hash(const ParameterRegistry<S>& reg);

}  // namespace iconpeft
