#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "efdgen/error.hpp"

namespace efdgen::diffusion {

struct LossTerms {
  double total = 0.0;
  double time_term = 0.0;
  double freq_term = 0.0;
};

// Real and imaginary parts of the unnormalised DFT along time are
// X * C and -X * S for a (channels x T) block X.
struct DftBasis {
  Eigen::MatrixXd cos;
  Eigen::MatrixXd sin;
};

inline DftBasis dft_basis(int t_len) {
  DftBasis b{Eigen::MatrixXd(t_len, t_len), Eigen::MatrixXd(t_len, t_len)};
  for (int t = 0; t < t_len; ++t)
    for (int k = 0; k < t_len; ++k) {
      const double ang = 2.0 * std::numbers::pi * static_cast<double>((static_cast<long>(k) * t) % t_len) / t_len;
      b.cos(t, k) = std::cos(ang);
      b.sin(t, k) = std::sin(ang);
    }
  return b;
}

// lambda1 * mean |z0 - z0_hat|^2 + lambda2 * mean_k |F(z0)_k - F(z0_hat)_k|^2,
// with F the DFT along time per channel and both means over channels x T.
// When `grad` is given it receives dL/d(z0_hat).
inline LossTerms hybrid_loss(const Eigen::MatrixXd& z0, const Eigen::MatrixXd& z0_hat, double lambda1,
                             double lambda2, const DftBasis& basis, Eigen::MatrixXd* grad = nullptr) {
  require(z0.rows() == z0_hat.rows() && z0.cols() == z0_hat.cols(), ErrorCode::ShapeMismatch,
          "prediction shape differs from target shape");
  require(basis.cos.rows() == z0.cols(), ErrorCode::ShapeMismatch, "DFT basis length mismatch");
  const Eigen::MatrixXd diff = z0_hat - z0;
  const double count = static_cast<double>(diff.size());
  LossTerms out;
  out.time_term = diff.squaredNorm() / count;
  Eigen::MatrixXd re, im;
  if (lambda2 != 0.0 || grad) {
    re = diff * basis.cos;
    im = diff * basis.sin;  // sign irrelevant for the magnitude
    out.freq_term = (re.squaredNorm() + im.squaredNorm()) / count;
  }
  out.total = lambda1 * out.time_term + lambda2 * out.freq_term;
  if (grad) {
    *grad = (2.0 * lambda1 / count) * diff;
    if (lambda2 != 0.0)
      *grad += (2.0 * lambda2 / count) * (re * basis.cos.transpose() + im * basis.sin.transpose());
  }
  return out;
}

inline LossTerms hybrid_loss(const Eigen::MatrixXd& z0, const Eigen::MatrixXd& z0_hat, double lambda1,
                             double lambda2) {
  return hybrid_loss(z0, z0_hat, lambda1, lambda2, dft_basis(static_cast<int>(z0.cols())));
}

}  // namespace efdgen::diffusion
