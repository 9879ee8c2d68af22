#pragma once

#include <array>
#include <cmath>

namespace spinflight {

/// Log-scale noise parameters of the estimator. Learnable jointly with the
/// dynamics model when `learnable` is set.
struct NoiseParams {
  std::array<double, 3> log_sigma_obs{};  // log m, per axis
  std::array<double, 6> log_sigma_dyn{};  // log of velocity/spin process scales
  bool learnable = true;

  static NoiseParams from_sigmas(double sigma_obs, double sigma_dyn_v, double sigma_dyn_w) {
    NoiseParams n;
    n.log_sigma_obs.fill(std::log(sigma_obs));
    for (int i = 0; i < 3; ++i) n.log_sigma_dyn[static_cast<std::size_t>(i)] = std::log(sigma_dyn_v);
    for (int i = 3; i < 6; ++i) n.log_sigma_dyn[static_cast<std::size_t>(i)] = std::log(sigma_dyn_w);
    return n;
  }
};

/// View over noise parameters in any scalar type (tape variables during
/// training, plain doubles otherwise).
template <class T>
struct NoiseView {
  const T* log_sigma_obs = nullptr;  // 3
  const T* log_sigma_dyn = nullptr;  // 6
};

inline NoiseView<double> view(const NoiseParams& n) {
  return {n.log_sigma_obs.data(), n.log_sigma_dyn.data()};
}

}  // namespace spinflight
