#include "sktune/optim.hpp"

#include <cmath>

#include "sktune/error.hpp"

namespace sktune {

void adamw_step(std::span<Tensor> params, OptimState& state) {
  if (state.first.empty()) {
    for (const Tensor& p : params) {
      state.first.emplace_back(p.numel(), 0.0);
      state.second.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "optimizer state was built for a different parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].requires_grad() && params[i].numel() > 0 && !params[i].has_grad()) {
      throw Error(ErrorKind::MissingGrad, "parameter " + std::to_string(i) + " has no gradient");
    }
  }

  state.step += 1;
  const AdamWConfig& hp = state.hp;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hp.beta1, t);
  const double correction2 = 1.0 - std::pow(hp.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.requires_grad() || p.numel() == 0) continue;
    auto values = p.mutable_data();
    auto grad = p.grad();
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      values[j] -= hp.lr * hp.weight_decay * values[j];
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * grad[j];
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
  }
}

}  // namespace sktune
