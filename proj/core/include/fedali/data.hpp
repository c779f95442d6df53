#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedali/tensor.hpp"

namespace fedali {

/// Windowed sensor samples plus integer class labels.
struct Dataset {
  Tensor samples;           // [N, Z, channels]
  std::vector<int> labels;  // values in [0, classes)
  std::size_t classes = 0;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  std::size_t seq_len() const { return samples.dim(1); }
  std::size_t channels() const { return samples.dim(2); }
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

Dataset concat_datasets(std::span<const Dataset> parts);

/// Per-client domain transform: static channel gains, a rotation mixing
/// adjacent channel pairs, additive noise, and per-sample phase jitter.
struct FeatureShift {
  double gain_spread = 0.4;      // gains drawn in [1-s, 1+s]
  double rotation_max_deg = 60;  // client angle in [-max, max]
  double noise_sigma = 0.1;
  double phase_jitter = 0.5;     // fraction of a window
};

struct SynthConfig {
  std::size_t classes = 5;
  std::size_t channels = 6;
  std::size_t seq_len = 16;  // Z
  std::size_t clients = 10;
  std::size_t samples_per_client = 120;
  FeatureShift shift;
  double dirichlet_alpha = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
  std::string digest() const;
};

/// Domain-shifted sequence classification: class templates are multi-channel
/// sinusoids with class-specific frequencies; each client applies its own
/// feature transform and draws class proportions from Dirichlet(alpha).
std::vector<Dataset> synth_generate(const SynthConfig& cfg);

/// Label-skew split of an existing dataset: per class, indices are divided
/// across clients by a Dirichlet(alpha) draw. Disjoint and exhaustive.
std::vector<std::vector<std::size_t>> dirichlet_partition(
    std::span<const int> labels, std::size_t n_clients, double alpha,
    std::uint64_t seed);

/// Class-stratified train/test split preserving class imbalance.
std::pair<Dataset, Dataset> stratified_split(const Dataset& data,
                                             double ratio = 0.8,
                                             std::uint64_t seed = 0);

/// One device's channel streams with a per-timestep label column.
struct LabeledStream {
  std::vector<std::string> channel_names;
  Tensor values;            // [T, channels]
  std::vector<int> labels;  // [T]
};

/// Parses the delimited-text stream container (see docs/formats.md).
LabeledStream read_stream_csv(const std::string& path);

/// Sliding windows with majority-vote labels. Streams shorter than one
/// window yield an empty dataset (with a warning).
Dataset window_segment(const LabeledStream& stream, std::size_t window = 128,
                       double overlap = 0.5);

/// read_stream_csv + per-channel z-normalization over the full stream
/// (sigma floored at 1e-8) + window_segment.
Dataset load_windows(const std::string& path, std::size_t window = 128,
                     double overlap = 0.5);

}  // namespace fedali
