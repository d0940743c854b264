#pragma once

// Deterministic synthetic image-classification tasks small enough for
// exhaustive architecture training on one core.

#include "ostr/autodiff.hpp"
#include "ostr/rng.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ostr {

struct Split {
  ad::Tensor images; // [n, C0, H, W]
  std::vector<int> labels;
  std::size_t size() const noexcept { return labels.size(); }
};

struct SplitSizes {
  std::size_t train = 2000;
  std::size_t val = 1000;
  std::size_t test = 1000;
  bool operator==(const SplitSizes&) const = default;
};

struct Dataset {
  std::string generator_id;
  std::uint64_t seed = 0;
  std::size_t classes = 0;
  double noise_sigma = 0.0;
  std::array<std::size_t, 3> image_shape{1, 8, 8};
  Split train, val, test;
};

struct BarsOptions {
  std::uint64_t seed = 0;
  SplitSizes sizes;
  std::size_t classes = 4; // 2 -> {0, 90} degrees, 4 -> {0, 45, 90, 135}
  std::size_t height = 8;
  std::size_t width = 8;
  double noise = 0.3;
  bool random_position = true;
};

// One 5-pixel bar per image at the class orientation plus N(0, noise^2) pixel noise.
Dataset gen_oriented_bars(const BarsOptions& opts);

struct CheckerOptions {
  std::uint64_t seed = 0;
  SplitSizes sizes;
  std::size_t classes = 2;
  std::size_t height = 8;
  std::size_t width = 8;
  double noise = 0.5;
};

// +-c checkerboards with random phase and contrast c in [0.25, 1]; class 0
// uses 1-pixel squares, class 1 uses 3-pixel squares. Any 3x3 average
// separates the noiseless classes: its magnitude never exceeds c/9 <= 1/9 for
// class 0 and reaches c >= 0.25 for class 1.
Dataset gen_checker_texture(const CheckerOptions& opts);

/// Serializable generator selection.
struct DatasetConfig {
  std::string generator = "oriented_bars"; // or "checker_texture"
  std::uint64_t seed = 0;
  SplitSizes sizes;
  std::size_t classes = 4;
  std::size_t height = 8;
  std::size_t width = 8;
  double noise = 0.3;
  bool random_position = true; // oriented_bars only

  bool operator==(const DatasetConfig&) const = default;
};

nlohmann::json to_json(const DatasetConfig& cfg);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);
Dataset make_dataset(const DatasetConfig& cfg);

struct Batch {
  ad::Tensor images;
  std::vector<int> labels;
};

Batch gather(const Split& split, std::span<const std::size_t> indices);
// Index lists of `batch_size`; a trailing batch is kept only when it holds
// at least two samples (batch statistics need two). Shuffled when rng given.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, Rng* rng);
std::vector<Batch> make_batches(const Split& split, std::size_t batch_size, Rng* rng);

// `<prefix>.bin` holds every split's images then labels as float64;
// `<prefix>.json` describes shapes and provenance.
void save_dataset(const Dataset& d, const std::string& prefix);
Dataset load_dataset(const std::string& prefix);

} // namespace ostr
