#include "iconpeft/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

namespace iconpeft {

const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Synthetic: return "synthetic";
    case DatasetKind::IdxFiles: return "idx_files";
    case DatasetKind::CifarBinary: return "cifar_binary";
  }
  return "?";
}

const char* to_string(SynthLabelMode m) {
  switch (m) {
    case SynthLabelMode::Band: return "band";
    case SynthLabelMode::Motif: return "motif";
    case SynthLabelMode::Joint: return "joint";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(std::string_view s) {
  for (DatasetKind k : {DatasetKind::Synthetic, DatasetKind::IdxFiles,
                        DatasetKind::CifarBinary}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown dataset kind '" + std::string(s) + "'");
}

SynthLabelMode synth_label_mode_from_string(std::string_view s) {
  for (SynthLabelMode m :
       {SynthLabelMode::Band, SynthLabelMode::Motif, SynthLabelMode::Joint}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown synthetic label mode '" + std::string(s) + "'");
}

void Dataset::validate() const {
  if (static_cast<int64_t>(images.size()) != n * channels * height * width) {
    throw DataError("dataset image buffer does not match declared extents");
  }
  if (static_cast<int64_t>(labels.size()) != n) {
    throw DataError("dataset label count does not match sample count");
  }
  for (int64_t i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= num_classes) {
      throw DataError("label " + std::to_string(y) + " of sample " +
                      std::to_string(i) + " is outside [0, " +
                      std::to_string(num_classes) + ")");
    }
  }
}

namespace {

Normalization default_norm(int64_t channels) {
  Normalization nm;
  nm.mean.assign(static_cast<size_t>(channels), 0.5);
  nm.stdev.assign(static_cast<size_t>(channels), 0.25);
  return nm;
}

Normalization resolve_norm(const Normalization* norm, int64_t channels) {
  if (!norm || norm->mean.empty()) return default_norm(channels);
  if (static_cast<int64_t>(norm->mean.size()) != channels ||
      static_cast<int64_t>(norm->stdev.size()) != channels) {
    throw ConfigError("normalization constants must list one value per channel");
  }
  for (double s : norm->stdev) {
    if (s <= 0) throw ConfigError("normalization std must be > 0");
  }
  return *norm;
}

// Zero-mean, unit-variance 3x3 oriented tile. Orientation is the only
// statistic that differs between motifs.
std::array<double, 9> motif_tile(int64_t motif) {
  std::array<double, 9> t{};
  const int64_t base = motif % 4;
  const double flip = (motif / 4) % 2 == 0 ? 1.0 : -1.0;
  for (int64_t y = 0; y < 3; ++y) {
    for (int64_t x = 0; x < 3; ++x) {
      bool on = false;
      switch (base) {
        case 0: on = y % 2 == 0; break;            // horizontal stripes
        case 1: on = x % 2 == 0; break;            // vertical stripes
        case 2: on = (x + y) % 3 == 0; break;      // diagonal
        case 3: on = (x - y + 6) % 3 == 0; break;  // anti-diagonal
      }
      t[static_cast<size_t>(y * 3 + x)] = on ? flip : -flip;
    }
  }
  double mu = 0;
  for (double v : t) mu += v;
  mu /= 9.0;
  double var = 0;
  for (double& v : t) {
    v -= mu;
    var += v * v;
  }
  var /= 9.0;
  const double inv = 1.0 / std::sqrt(var);
  for (double& v : t) v *= inv;
  return t;
}

void apply_normalization(Dataset& d, const Normalization& nm) {
  const int64_t plane = d.height * d.width;
  for (int64_t i = 0; i < d.n; ++i) {
    for (int64_t c = 0; c < d.channels; ++c) {
      float* p = d.images.data() + (i * d.channels + c) * plane;
      const float mean = static_cast<float>(nm.mean[static_cast<size_t>(c)]);
      const float inv = static_cast<float>(1.0 / nm.stdev[static_cast<size_t>(c)]);
      for (int64_t k = 0; k < plane; ++k) p[k] = (p[k] - mean) * inv;
    }
  }
}

}  // namespace

Dataset synth_dataset(uint64_t seed, int64_t n, int64_t classes,
                      SynthLabelMode mode, int64_t height, int64_t width,
                      int64_t channels, const Normalization* norm) {
  if (classes < 2) throw ConfigError("synth_dataset: classes must be >= 2");
  if (n < 1) throw ConfigError("synth_dataset: n must be >= 1");
  if (height < 15 || width < 15) {
    throw ConfigError("synth_dataset: images must be at least 15x15");
  }

  // Factor the requested classes into band x motif structure. Small even
  // counts split into two intensity bands; odd counts fall back to a single
  // band so the local pattern alone decides.
  const int64_t bands = (classes % 2 == 0 && classes >= 4) ? 2 : 1;
  const int64_t motifs = classes / bands;
  if (motifs > 8) throw ConfigError("synth_dataset: at most 16 classes supported");

  const int64_t joint = bands * motifs;
  Dataset d;
  d.height = height;
  d.width = width;
  d.channels = channels;
  d.n = n;
  switch (mode) {
    case SynthLabelMode::Band: d.num_classes = bands; break;
    case SynthLabelMode::Motif: d.num_classes = motifs; break;
    case SynthLabelMode::Joint: d.num_classes = joint; break;
  }
  d.images.assign(static_cast<size_t>(n * channels * height * width), 0.0f);
  d.labels.assign(static_cast<size_t>(n), 0);

  // Round-robin over joint classes keeps every label mode exactly balanced
  // whenever it divides n; a seeded shuffle then mixes the order.
  std::vector<int64_t> joint_of(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) joint_of[static_cast<size_t>(i)] = i % joint;
  SeededRng order_rng(derive_seed(seed, "synth.order"));
  seeded_shuffle(joint_of, order_rng);

  const int64_t patch = 15;  // 5x5 tiling of the 3x3 motif
  const int64_t plane = height * width;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t jc = joint_of[static_cast<size_t>(i)];
    const int64_t band = jc / motifs;
    const int64_t motif = jc % motifs;
    switch (mode) {
      case SynthLabelMode::Band: d.labels[static_cast<size_t>(i)] = static_cast<int>(band); break;
      case SynthLabelMode::Motif: d.labels[static_cast<size_t>(i)] = static_cast<int>(motif); break;
      case SynthLabelMode::Joint: d.labels[static_cast<size_t>(i)] = static_cast<int>(jc); break;
    }

    SeededRng rng(derive_seed(seed, "synth.sample." + std::to_string(i)));
    const double base = bands == 1 ? 0.5 : 0.35 + 0.3 * static_cast<double>(band);
    const auto tile = motif_tile(motif);
    const int64_t y0 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(height - patch + 1)));
    const int64_t x0 = static_cast<int64_t>(rng.below(static_cast<uint64_t>(width - patch + 1)));

    std::vector<double> tint(static_cast<size_t>(channels));
    for (double& t : tint) t = (rng.uniform() - 0.5) * 0.06;

    float* img = d.images.data() + i * channels * plane;
    for (int64_t y = 0; y < height; ++y) {
      for (int64_t x = 0; x < width; ++x) {
        const double noise = (rng.uniform() - 0.5) * 0.12;
        double texture = 0.0;
        if (y >= y0 && y < y0 + patch && x >= x0 && x < x0 + patch) {
          texture = 0.3 * tile[static_cast<size_t>(((y - y0) % 3) * 3 + (x - x0) % 3)];
        }
        for (int64_t c = 0; c < channels; ++c) {
          const double v = std::clamp(base + tint[static_cast<size_t>(c)] + noise + texture, 0.0, 1.0);
          img[c * plane + y * width + x] = static_cast<float>(v);
        }
      }
    }
  }

  apply_normalization(d, resolve_norm(norm, channels));
  d.validate();
  return d;
}

namespace {

uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("unexpected end of file in " + path);
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

std::vector<unsigned char> read_bytes(std::istream& in, size_t count,
                                      const std::string& path) {
  std::vector<unsigned char> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
  if (!in) throw DataError("unexpected end of file in " + path);
  return buf;
}

}  // namespace

Dataset read_idx(const std::string& images_path, const std::string& labels_path,
                 int64_t num_classes, const Normalization* norm) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DataError("cannot open IDX image file " + images_path);
  if (read_be32(imgs, images_path) != 2051) {
    throw DataError(images_path + " is not an IDX ubyte image file (bad magic)");
  }
  const int64_t n = read_be32(imgs, images_path);
  const int64_t rows = read_be32(imgs, images_path);
  const int64_t cols = read_be32(imgs, images_path);
  const auto pixels =
      read_bytes(imgs, static_cast<size_t>(n * rows * cols), images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw DataError("cannot open IDX label file " + labels_path);
  if (read_be32(labs, labels_path) != 2049) {
    throw DataError(labels_path + " is not an IDX label file (bad magic)");
  }
  const int64_t nl = read_be32(labs, labels_path);
  if (nl != n) {
    throw DataError("IDX image/label counts disagree: " + std::to_string(n) +
                    " vs " + std::to_string(nl));
  }
  const auto raw_labels = read_bytes(labs, static_cast<size_t>(nl), labels_path);

  Dataset d;
  d.n = n;
  d.channels = 1;
  d.height = rows;
  d.width = cols;
  d.num_classes = num_classes;
  d.images.resize(pixels.size());
  for (size_t i = 0; i < pixels.size(); ++i) {
    d.images[i] = static_cast<float>(pixels[i]) / 255.0f;
  }
  d.labels.assign(raw_labels.begin(), raw_labels.end());
  apply_normalization(d, resolve_norm(norm, d.channels));
  d.validate();
  return d;
}

Dataset read_cifar_binary(const std::vector<std::string>& files,
                          int64_t num_classes, const Normalization* norm) {
  if (files.empty()) throw DataError("cifar_binary: no files given");
  const bool two_label_bytes = num_classes > 10;
  const size_t record = (two_label_bytes ? 2 : 1) + 3072;

  Dataset d;
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.num_classes = num_classes;
  for (const std::string& path : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open CIFAR binary file " + path);
    in.seekg(0, std::ios::end);
    const auto size = static_cast<size_t>(in.tellg());
    in.seekg(0);
    if (size == 0 || size % record != 0) {
      throw DataError(path + " is not a whole number of CIFAR records");
    }
    const auto buf = read_bytes(in, size, path);
    const size_t count = size / record;
    for (size_t r = 0; r < count; ++r) {
      const unsigned char* rec = buf.data() + r * record;
      const int label = two_label_bytes ? rec[1] : rec[0];  // fine label
      d.labels.push_back(label);
      const unsigned char* px = rec + (two_label_bytes ? 2 : 1);
      for (size_t i = 0; i < 3072; ++i) {
        d.images.push_back(static_cast<float>(px[i]) / 255.0f);
      }
    }
    d.n += static_cast<int64_t>(count);
  }
  apply_normalization(d, resolve_norm(norm, d.channels));
  d.validate();
  return d;
}

DataBundle load_dataset(const DatasetSource& src) {
  DataBundle out;
  const Normalization* nm = src.norm.mean.empty() ? nullptr : &src.norm;
  switch (src.kind) {
    case DatasetKind::Synthetic:
      out.train = synth_dataset(src.synth_seed, src.synth_n_train,
                                src.num_classes, src.synth_label_mode, 32, 32, 3, nm);
      if (src.synth_n_val > 0) {
        out.val = synth_dataset(derive_seed(src.synth_seed, "val"),
                                src.synth_n_val, src.num_classes,
                                src.synth_label_mode, 32, 32, 3, nm);
      }
      break;
    case DatasetKind::IdxFiles:
      out.train = read_idx(src.idx_train_images, src.idx_train_labels,
                           src.num_classes, nm);
      if (!src.idx_val_images.empty()) {
        out.val = read_idx(src.idx_val_images, src.idx_val_labels,
                           src.num_classes, nm);
      }
      break;
    case DatasetKind::CifarBinary:
      out.train = read_cifar_binary(src.cifar_train_files, src.num_classes, nm);
      if (!src.cifar_val_files.empty()) {
        out.val = read_cifar_binary(src.cifar_val_files, src.num_classes, nm);
      }
      break;
  }
  return out;
}

template <class S>
Tensor<S> make_batch(const Dataset& data, std::span<const int64_t> indices) {
  const int64_t sample = data.channels * data.height * data.width;
  Tensor<S> batch = Tensor<S>::zeros(
      {static_cast<int64_t>(indices.size()), data.channels, data.height, data.width});
  S* dst = batch.data_ptr();
  for (size_t i = 0; i < indices.size(); ++i) {
    const float* src = data.images.data() + indices[i] * sample;
    for (int64_t k = 0; k < sample; ++k) {
      dst[static_cast<int64_t>(i) * sample + k] = static_cast<S>(src[k]);
    }
  }
  return batch;
}

template Tensor<float> make_batch<float>(const Dataset&, std::span<const int64_t>);
template Tensor<double> make_batch<double>(const Dataset&, std::span<const int64_t>);

}  // namespace iconpeft
