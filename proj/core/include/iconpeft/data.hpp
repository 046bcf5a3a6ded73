#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iconpeft/tensor.hpp"

namespace iconpeft {

enum class DatasetKind { Synthetic, IdxFiles, CifarBinary };
enum class SynthLabelMode { Band, Motif, Joint };

const char* to_string(DatasetKind k);
const char* to_string(SynthLabelMode m);
DatasetKind dataset_kind_from_string(std::string_view s);
SynthLabelMode synth_label_mode_from_string(std::string_view s);

// In-memory dataset: normalized float images plus integer labels.
struct Dataset {
  int64_t n = 0;
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  int64_t num_classes = 0;
  std::vector<float> images;  // n * C * H * W
  std::vector<int> labels;    // n

  void validate() const;  // label range, size consistency
};

struct Normalization {
  std::vector<double> mean;  // per channel
  std::vector<double> stdev;
};

// Where training data comes from; serialized in the run config.
struct DatasetSource {
  DatasetKind kind = DatasetKind::Synthetic;
  int64_t num_classes = 8;
  Normalization norm;  // defaults to mean 0.5 / std 0.25 per channel

  // synthetic
  uint64_t synth_seed = 7;
  int64_t synth_n_train = 2048;
  int64_t synth_n_val = 512;
  SynthLabelMode synth_label_mode = SynthLabelMode::Joint;

  // idx_files
  std::string idx_train_images, idx_train_labels;
  std::string idx_val_images, idx_val_labels;

  // cifar_binary
  std::vector<std::string> cifar_train_files;
  std::vector<std::string> cifar_val_files;
};

// Procedural local-texture task. Every image combines a global intensity
// band with a small oriented 3x3 texture motif tiled over a patch at a
// random location; the motif is normalized to zero mean and unit variance so
// orientation is the only cue it carries. Labels cover band x motif classes
// per the label mode. Balanced and fully determined by the seed.
Dataset synth_dataset(uint64_t seed, int64_t n, int64_t classes,
                      SynthLabelMode mode = SynthLabelMode::Joint,
                      int64_t height = 32, int64_t width = 32,
                      int64_t channels = 3,
                      const Normalization* norm = nullptr);

// MNIST-style IDX pair (big-endian extents, ubyte payload).
Dataset read_idx(const std::string& images_path, const std::string& labels_path,
                 int64_t num_classes, const Normalization* norm = nullptr);

// CIFAR binary records: label byte(s) followed by 3072 channel-major pixels.
// Two label bytes (coarse, fine) when num_classes > 10; the fine label wins.
Dataset read_cifar_binary(const std::vector<std::string>& files,
                          int64_t num_classes,
                          const Normalization* norm = nullptr);

struct DataBundle {
  Dataset train;
  Dataset val;  // may be empty (n == 0)
};

DataBundle load_dataset(const DatasetSource& src);

// Copies selected samples into a batch tensor (cast to S).
template <class S>
Tensor<S> make_batch(const Dataset& data, std::span<const int64_t> indices);

}  // namespace iconpeft
