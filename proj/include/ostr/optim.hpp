#pragma once

#include "ostr/autodiff.hpp"
#include "ostr/matrix.hpp"
#include "ostr/supernet.hpp"

#include "json.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace ostr {

struct SgdConfig {
  double lr = 0.025; // cosine-annealed over the run down to lr_min
  double lr_min = 0.001;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  double grad_clip = 5.0; // global L2 norm; 0 disables
  bool operator==(const SgdConfig&) const = default;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
  bool operator==(const AdamConfig&) const = default;
};

nlohmann::json to_json(const SgdConfig& c);
nlohmann::json to_json(const AdamConfig& c);
SgdConfig sgd_config_from_json(const nlohmann::json& j, std::string_view where);
AdamConfig adam_config_from_json(const nlohmann::json& j, std::string_view where);
// Throws std::invalid_argument; zero learning rates pass only when allow_zero_lr.
void validate(const SgdConfig& c, std::string_view where, bool allow_zero_lr = false);
void validate(const AdamConfig& c, std::string_view where, bool allow_zero_lr = false);

// lr for 0-based `epoch` of `total_epochs`; epochs past the end stay at lr_min.
double cosine_lr(const SgdConfig& cfg, std::size_t epoch, std::size_t total_epochs);

// Heavy-ball SGD on every parameter of `body` that received a gradient,
// with global-norm clipping and L2 weight decay. Clears the gradients.
void sgd_step(NetworkBody& body, const SgdConfig& cfg, double lr, std::vector<double>& momentum);

// Bias-corrected Adam with L2 weight decay folded into the gradient.
void adam_step(ad::Tensor& param, const Matrix& grad, const AdamConfig& cfg, std::vector<double>& m,
               std::vector<double>& v, std::uint64_t& step);

} // namespace ostr
