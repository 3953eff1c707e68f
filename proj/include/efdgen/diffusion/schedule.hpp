#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "efdgen/error.hpp"

namespace efdgen::diffusion {

// K-step noise schedule.  Index k runs 0..K; alpha_bar[0] == 1.
struct DiffusionSchedule {
  int steps = 0;
  std::vector<double> alpha_bar;  // K+1 entries
  std::vector<double> alpha;      // alpha[k] = alpha_bar[k] / alpha_bar[k-1], alpha[0] = 1
  std::vector<double> beta;       // 1 - alpha
  std::vector<double> coef_x0;    // posterior mean weight on the x0 estimate
  std::vector<double> coef_xk;    // posterior mean weight on z_k
  std::vector<double> sigma;      // posterior standard deviation

  int K() const noexcept { return steps; }
};

inline constexpr double kCosineOffset = 0.008;
inline constexpr double kMaxBeta = 0.999;

// Cosine schedule: alpha_bar(k) = f(k)/f(0), f(k) = cos^2(((k/K + s)/(1 + s)) * pi/2).
// Betas are clipped to kMaxBeta and alpha_bar is rebuilt as the cumulative
// product of the clipped alphas, so alpha[k] * alpha_bar[k-1] == alpha_bar[k]
// holds at every step and alpha_bar stays strictly positive.
inline DiffusionSchedule cosine_schedule(int k_steps, double offset = kCosineOffset) {
  require(k_steps >= 2, ErrorCode::InvalidArgument, "schedule needs at least 2 steps");
  const double K = k_steps;
  auto f = [&](int k) {
    const double c = std::cos(((k / K + offset) / (1.0 + offset)) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0);
  DiffusionSchedule s;
  s.steps = k_steps;
  s.alpha_bar.assign(static_cast<std::size_t>(k_steps) + 1, 1.0);
  s.alpha.assign(s.alpha_bar.size(), 1.0);
  s.beta.assign(s.alpha_bar.size(), 0.0);
  s.coef_x0.assign(s.alpha_bar.size(), 0.0);
  s.coef_xk.assign(s.alpha_bar.size(), 0.0);
  s.sigma.assign(s.alpha_bar.size(), 0.0);
  double prev_raw = 1.0;
  for (int k = 1; k <= k_steps; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double raw = f(k) / f0;
    s.beta[i] = std::min(1.0 - raw / prev_raw, kMaxBeta);
    s.alpha[i] = 1.0 - s.beta[i];
    s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
    prev_raw = raw;
  }
  for (int k = 1; k <= k_steps; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double ab = s.alpha_bar[i], ab_prev = s.alpha_bar[i - 1];
    s.coef_x0[i] = std::sqrt(ab_prev) * s.beta[i] / (1.0 - ab);
    s.coef_xk[i] = std::sqrt(s.alpha[i]) * (1.0 - ab_prev) / (1.0 - ab);
    s.sigma[i] = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * s.beta[i]);
  }
  return s;
}

// z_k = sqrt(alpha_bar_k) z0 + sqrt(1 - alpha_bar_k) eps.
inline Eigen::MatrixXd forward_noise(const Eigen::MatrixXd& z0, int k, const Eigen::MatrixXd& eps,
                                     const DiffusionSchedule& sched) {
  require(z0.rows() == eps.rows() && z0.cols() == eps.cols(), ErrorCode::ShapeMismatch,
          "noise shape differs from signal shape");
  require(k >= 0 && k <= sched.K(), ErrorCode::InvalidArgument, "diffusion step out of range");
  const double ab = sched.alpha_bar[static_cast<std::size_t>(k)];
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

// One ancestral step: weighted combination of the clean estimate, the current
// sample and fresh noise.  `eps` is ignored at k == 1.
inline Eigen::MatrixXd reverse_step(const Eigen::MatrixXd& x0_hat, const Eigen::MatrixXd& z_k, int k,
                                    const Eigen::MatrixXd& eps, const DiffusionSchedule& sched) {
  require(k >= 1 && k <= sched.K(), ErrorCode::InvalidArgument, "reverse step out of range");
  const auto i = static_cast<std::size_t>(k);
  Eigen::MatrixXd out = sched.coef_x0[i] * x0_hat + sched.coef_xk[i] * z_k;
  if (k > 1) out += sched.sigma[i] * eps;
  return out;
}

}  // namespace efdgen::diffusion
