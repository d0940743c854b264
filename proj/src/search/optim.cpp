#include "ostr/optim.hpp"

#include "ostr/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ostr {

nlohmann::json to_json(const SgdConfig& c) {
  return {{"lr", c.lr}, {"lr_min", c.lr_min}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip}};
}

nlohmann::json to_json(const AdamConfig& c) {
  return {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
}

SgdConfig sgd_config_from_json(const nlohmann::json& j, std::string_view where) {
  check_fields(j, where, {"lr", "lr_min", "momentum", "weight_decay", "grad_clip"});
  try {
    return {j.at("lr").get<double>(), j.at("lr_min").get<double>(), j.at("momentum").get<double>(),
            j.at("weight_decay").get<double>(), j.at("grad_clip").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string(where) + ": " + e.what());
  }
}

AdamConfig adam_config_from_json(const nlohmann::json& j, std::string_view where) {
  check_fields(j, where, {"lr", "beta1", "beta2", "eps", "weight_decay"});
  try {
    return {j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
            j.at("eps").get<double>(), j.at("weight_decay").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string(where) + ": " + e.what());
  }
}

void validate(const SgdConfig& c, std::string_view where, bool allow_zero_lr) {
  auto fail = [&](const std::string& m) { throw std::invalid_argument(std::string(where) + ": " + m); };
  if (allow_zero_lr ? !(c.lr >= 0.0) : !(c.lr > 0.0)) fail("lr must be > 0");
  if (c.lr_min < 0.0 || c.lr_min > c.lr) fail("lr_min must lie in [0, lr]");
  if (c.momentum < 0.0 || c.momentum >= 1.0) fail("momentum must lie in [0, 1)");
  if (c.weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (c.grad_clip < 0.0) fail("grad_clip must be >= 0");
}

void validate(const AdamConfig& c, std::string_view where, bool allow_zero_lr) {
  auto fail = [&](const std::string& m) { throw std::invalid_argument(std::string(where) + ": " + m); };
  if (allow_zero_lr ? !(c.lr >= 0.0) : !(c.lr > 0.0)) fail("lr must be > 0");
  if (c.beta1 < 0.0 || c.beta1 >= 1.0 || c.beta2 < 0.0 || c.beta2 >= 1.0) fail("betas must lie in [0, 1)");
  if (!(c.eps > 0.0)) fail("eps must be > 0");
  if (c.weight_decay < 0.0) fail("weight_decay must be >= 0");
}

double cosine_lr(const SgdConfig& cfg, std::size_t epoch, std::size_t total_epochs) {
  if (total_epochs == 0) return cfg.lr;
  const double x = static_cast<double>(std::min(epoch, total_epochs)) / static_cast<double>(total_epochs);
  return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * x));
}

void sgd_step(NetworkBody& body, const SgdConfig& cfg, double lr, std::vector<double>& momentum) {
  auto params = body.parameters();
  std::size_t n = 0;
  double sq = 0.0;
  for (auto* p : params) {
    n += p->size();
    if (!p->has_grad()) continue;
    for (double g : p->grad()) sq += g * g;
  }
  if (momentum.size() != n) throw std::invalid_argument("sgd_step: momentum buffer does not match the parameters");
  const double norm = std::sqrt(sq);
  const double clip = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / (norm + 1e-6) : 1.0;
  std::size_t k = 0;
  for (auto* p : params) {
    auto vals = p->values();
    std::span<const double> grad = p->has_grad() ? p->grad() : std::span<const double>{};
    for (std::size_t i = 0; i < vals.size(); ++i, ++k) {
      const double g = (grad.empty() ? 0.0 : clip * grad[i]) + cfg.weight_decay * vals[i];
      momentum[k] = cfg.momentum * momentum[k] + g;
      vals[i] -= lr * momentum[k];
    }
    p->clear_grad();
  }
}

void adam_step(ad::Tensor& param, const Matrix& grad, const AdamConfig& cfg, std::vector<double>& m,
               std::vector<double>& v, std::uint64_t& step) {
  if (grad.data().size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw std::invalid_argument("adam_step: gradient or moment buffers do not match the parameter");
  }
  ++step;
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.data()[i] + cfg.weight_decay * param[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    param[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
  }
}

} // namespace ostr
