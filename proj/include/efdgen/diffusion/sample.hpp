#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "efdgen/diffusion/denoiser.hpp"
#include "efdgen/diffusion/schedule.hpp"

namespace efdgen::diffusion {

// Any callable (z_k, k) -> x0 estimate; DenoiserModel qualifies through a lambda.
template <typename Denoise>
concept X0Predictor = requires(Denoise f, const Eigen::MatrixXd& z, int k) {
  { f(z, k) } -> std::convertible_to<Eigen::MatrixXd>;
};

// Ancestral sampling from z_K ~ N(0, I).  The seed fixes every noise draw.
template <X0Predictor Denoise>
Eigen::MatrixXd sample(Denoise&& denoise, const DiffusionSchedule& sched, int t_len, int channels,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] {
    Eigen::MatrixXd m(channels, t_len);
    for (Eigen::Index c = 0; c < t_len; ++c)
      for (Eigen::Index r = 0; r < channels; ++r) m(r, c) = normal(rng);
    return m;
  };
  Eigen::MatrixXd z = draw();
  const Eigen::MatrixXd no_noise = Eigen::MatrixXd::Zero(channels, t_len);
  for (int k = sched.K(); k >= 1; --k) {
    const Eigen::MatrixXd x0 = denoise(static_cast<const Eigen::MatrixXd&>(z), k);
    z = reverse_step(x0, z, k, k > 1 ? draw() : no_noise, sched);
  }
  return z;
}

inline Eigen::MatrixXd sample(const DenoiserModel& model, const DiffusionSchedule& sched, std::uint64_t seed) {
  return sample([&](const Eigen::MatrixXd& z, int k) { return model.predict(z, k); }, sched,
                model.config().length, model.config().channels, seed);
}

}  // namespace efdgen::diffusion
