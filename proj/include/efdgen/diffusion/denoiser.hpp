#pragma once

// x0-predicting denoiser for (channels x T) series.
//
// Layout: input projection plus fixed sinusoidal time encoding, then a stack
// of pre-norm blocks (step embedding added per block, multi-head
// self-attention over time, GELU MLP), a final layer norm and three heads:
//   trend    = P_poly    (H W_t + b_t)    projection on a low-order polynomial basis
//   seasonal = P_fourier (H W_s + b_s)    projection on a Fourier basis (no DC)
//   residual = H W_r + b_r                zero-initialised
// and the prediction is their sum.  Gradients are written by hand.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "efdgen/error.hpp"

namespace efdgen::diffusion {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

// Named dense tensors sharing one layout; used for weights, gradients and
// optimizer state alike.
class ParamSet {
 public:
  int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    names_.push_back(std::move(name));
    tensors_.push_back(MatrixXd::Zero(rows, cols));
    return static_cast<int>(tensors_.size()) - 1;
  }

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  MatrixXd& operator[](std::size_t i) { return tensors_[i]; }
  const MatrixXd& operator[](std::size_t i) const { return tensors_[i]; }

  ParamSet zeros_like() const {
    ParamSet z = *this;
    for (auto& t : z.tensors_) t.setZero();
    return z;
  }
  void set_zero() {
    for (auto& t : tensors_) t.setZero();
  }
  double squared_norm() const {
    double acc = 0.0;
    for (const auto& t : tensors_) acc += t.squaredNorm();
    return acc;
  }
  long count() const {
    long n = 0;
    for (const auto& t : tensors_) n += static_cast<long>(t.size());
    return n;
  }
  void add_scaled(const ParamSet& other, double s) {
    for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i] += s * other.tensors_[i];
  }
  void scale(double s) {
    for (auto& t : tensors_) t *= s;
  }
  bool all_finite() const {
    for (const auto& t : tensors_)
      if (!t.allFinite()) return false;
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<MatrixXd> tensors_;
};

struct DenoiserConfig {
  int channels = 36;
  int length = 50;
  int width = 96;
  int heads = 4;
  int blocks = 4;
  int mlp_ratio = 2;
  int poly_degree = 3;
  int season_freqs = 0;  // 0 -> length / 2
  bool use_trend = true;
  bool use_season = true;
  bool use_residual = true;

  int frequencies() const { return season_freqs > 0 ? season_freqs : length / 2; }

  void validate() const {
    require(channels >= 1 && length >= 2, ErrorCode::InvalidConfig, "channels >= 1 and length >= 2 required");
    require(width >= 2 && width % 2 == 0, ErrorCode::InvalidConfig, "width must be even");
    require(heads >= 1 && width % heads == 0, ErrorCode::InvalidConfig, "width must be divisible by heads");
    require(blocks >= 0 && mlp_ratio >= 1 && poly_degree >= 0, ErrorCode::InvalidConfig, "bad block layout");
    require(poly_degree + 1 <= length, ErrorCode::InvalidConfig, "polynomial degree too high for length");
    require(use_trend || use_season || use_residual, ErrorCode::InvalidConfig, "all heads disabled");
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "channels=" << channels << "\nlength=" << length << "\nwidth=" << width << "\nheads=" << heads
       << "\nblocks=" << blocks << "\nmlp_ratio=" << mlp_ratio << "\npoly_degree=" << poly_degree
       << "\nseason_freqs=" << season_freqs << "\nuse_trend=" << use_trend << "\nuse_season=" << use_season
       << "\nuse_residual=" << use_residual << "\n";
    return os.str();
  }
};

namespace detail {

inline RowVectorXd sinusoid(double position, int width) {
  RowVectorXd e(width);
  const int half = width / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    e(i) = std::sin(position * freq);
    e(half + i) = std::cos(position * freq);
  }
  return e;
}

// Orthonormal basis of the column span via modified Gram-Schmidt; columns
// that become numerically zero are dropped.
inline MatrixXd orthonormalize(const MatrixXd& cols) {
  std::vector<VectorXd> basis;
  for (Eigen::Index j = 0; j < cols.cols(); ++j) {
    VectorXd v = cols.col(j);
    for (const auto& b : basis) v -= b.dot(v) * b;
    for (const auto& b : basis) v -= b.dot(v) * b;
    const double n = v.norm();
    if (n > 1e-9 * std::sqrt(static_cast<double>(cols.rows()))) basis.push_back(v / n);
  }
  MatrixXd out(cols.rows(), static_cast<Eigen::Index>(basis.size()));
  for (std::size_t j = 0; j < basis.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = basis[j];
  return out;
}

struct LnCache {
  MatrixXd xhat;
  VectorXd rstd;
};

inline constexpr double kLnEps = 1e-5;

inline MatrixXd layer_norm(const MatrixXd& x, const MatrixXd& g, const MatrixXd& b, LnCache* c) {
  const VectorXd mu = x.rowwise().mean();
  MatrixXd xc = x.colwise() - mu;
  const VectorXd var = xc.array().square().rowwise().mean();
  const VectorXd rstd = (var.array() + kLnEps).rsqrt();
  MatrixXd xhat = rstd.asDiagonal() * xc;
  MatrixXd y = (xhat.array().rowwise() * g.row(0).array()).matrix();
  y.rowwise() += b.row(0);
  if (c) {
    c->xhat = std::move(xhat);
    c->rstd = rstd;
  }
  return y;
}

inline MatrixXd layer_norm_backward(const MatrixXd& dy, const LnCache& c, const MatrixXd& g, MatrixXd& dg,
                                    MatrixXd& db) {
  dg.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db.row(0) += dy.colwise().sum();
  const MatrixXd dxhat = (dy.array().rowwise() * g.row(0).array()).matrix();
  const VectorXd m1 = dxhat.rowwise().mean();
  const VectorXd m2 = (dxhat.array() * c.xhat.array()).rowwise().mean();
  MatrixXd dx = dxhat;
  dx.colwise() -= m1;
  dx -= (c.xhat.array().colwise() * m2.array()).matrix();
  return c.rstd.asDiagonal() * dx;
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

// Tanh-form GELU written as u * sigmoid(2 t(u)), one exp per entry.
inline Eigen::ArrayXXd gelu_sigmoid(const Eigen::ArrayXXd& a) {
  return 1.0 / (1.0 + (-2.0 * kGeluC * (a + 0.044715 * a.cube())).exp());
}

inline MatrixXd gelu(const MatrixXd& u) { return (u.array() * gelu_sigmoid(u.array())).matrix(); }

inline MatrixXd gelu_grad(const MatrixXd& u) {
  const Eigen::ArrayXXd a = u.array();
  const Eigen::ArrayXXd sg = gelu_sigmoid(a);
  return (sg + a * sg * (1.0 - sg) * (2.0 * kGeluC) * (1.0 + 3.0 * 0.044715 * a.square())).matrix();
}

inline void softmax_rows(MatrixXd& s) {
  const VectorXd m = s.rowwise().maxCoeff();
  s = (s.colwise() - m).array().exp().matrix();
  const VectorXd sum = s.rowwise().sum();
  s = sum.cwiseInverse().asDiagonal() * s;
}

}  // namespace detail

struct Decomposition {
  MatrixXd prediction;  // channels x T
  MatrixXd trend;
  MatrixXd seasonal;
  MatrixXd residual;
};

class DenoiserModel {
 public:
  struct BlockIdx {
    int step_w, step_b, ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  struct BlockCache {
    MatrixXd h_in;
    detail::LnCache ln1;
    MatrixXd a_in, q, k, v, o;
    std::vector<MatrixXd> probs;
    detail::LnCache ln2;
    MatrixXd m_in, u, g;
  };

  struct Cache {
    MatrixXd x;  // T x C input
    RowVectorXd step;
    std::vector<BlockCache> blocks;
    detail::LnCache lnf;
    MatrixXd hf;
  };

  DenoiserModel() = default;

  explicit DenoiserModel(const DenoiserConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    build_layout();
    build_buffers();
    init(seed);
  }

  const DenoiserConfig& config() const noexcept { return cfg_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }
  long parameter_count() const { return params_.count(); }

  // Replaces the weights; names and shapes must match this layout.
  void load_params(const ParamSet& p) {
    require(p.size() == params_.size(), ErrorCode::BadCheckpoint, "parameter count mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      require(p.name(i) == params_.name(i) && p[i].rows() == params_[i].rows() && p[i].cols() == params_[i].cols(),
              ErrorCode::BadCheckpoint, "parameter '" + p.name(i) + "' does not match the model layout");
      params_[i] = p[i];
    }
  }

  // Switches heads on or off without touching weights (diagnostics/ablation).
  void set_heads(bool trend, bool season, bool residual) {
    cfg_.use_trend = trend;
    cfg_.use_season = season;
    cfg_.use_residual = residual;
    cfg_.validate();
  }

  MatrixXd predict(const MatrixXd& z_k, int k) const { return forward(z_k, k, nullptr); }

  Decomposition decompose(const MatrixXd& z_k, int k) const {
    Cache c;
    forward(z_k, k, &c);
    Decomposition d;
    const auto [ut, us, ur] = head_inputs(c.hf);
    d.trend = (trend_proj_ * ut).transpose();
    d.seasonal = (season_proj_ * us).transpose();
    d.residual = ur.transpose();
    d.prediction = MatrixXd::Zero(cfg_.channels, cfg_.length);
    if (cfg_.use_trend) d.prediction += d.trend;
    if (cfg_.use_season) d.prediction += d.seasonal;
    if (cfg_.use_residual) d.prediction += d.residual;
    return d;
  }

  MatrixXd forward(const MatrixXd& z_k, int k, Cache* cache) const {
    require(z_k.rows() == cfg_.channels && z_k.cols() == cfg_.length, ErrorCode::ShapeMismatch,
            "input is " + std::to_string(z_k.rows()) + "x" + std::to_string(z_k.cols()) + ", model expects " +
                std::to_string(cfg_.channels) + "x" + std::to_string(cfg_.length));
    const auto& P = params_;
    MatrixXd x = z_k.transpose();
    MatrixXd h = x * P[idx_w_in_];
    h.rowwise() += P[idx_b_in_].row(0);
    h += pos_;
    const RowVectorXd step = detail::sinusoid(static_cast<double>(k), cfg_.width);
    if (cache) {
      cache->x = x;
      cache->step = step;
      cache->blocks.resize(blocks_.size());
    }
    const int dh = cfg_.width / cfg_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
      const auto& B = blocks_[bi];
      BlockCache local;
      BlockCache& c = cache ? cache->blocks[bi] : local;
      RowVectorXd s = step * P[B.step_w] + P[B.step_b].row(0);
      h.rowwise() += s;
      c.h_in = h;
      c.a_in = detail::layer_norm(h, P[B.ln1_g], P[B.ln1_b], &c.ln1);
      c.q = c.a_in * P[B.wq];
      c.q.rowwise() += P[B.bq].row(0);
      c.k = c.a_in * P[B.wk];
      c.k.rowwise() += P[B.bk].row(0);
      c.v = c.a_in * P[B.wv];
      c.v.rowwise() += P[B.bv].row(0);
      c.o.resize(cfg_.length, cfg_.width);
      c.probs.resize(static_cast<std::size_t>(cfg_.heads));
      for (int hd = 0; hd < cfg_.heads; ++hd) {
        MatrixXd sc = scale * c.q.middleCols(hd * dh, dh).lazyProduct(c.k.middleCols(hd * dh, dh).transpose());
        detail::softmax_rows(sc);
        c.o.middleCols(hd * dh, dh) = sc.lazyProduct(c.v.middleCols(hd * dh, dh));
        c.probs[static_cast<std::size_t>(hd)] = std::move(sc);
      }
      MatrixXd attn = c.o * P[B.wo];
      attn.rowwise() += P[B.bo].row(0);
      h += attn;
      c.m_in = detail::layer_norm(h, P[B.ln2_g], P[B.ln2_b], &c.ln2);
      c.u = c.m_in * P[B.w1];
      c.u.rowwise() += P[B.b1].row(0);
      c.g = detail::gelu(c.u);
      MatrixXd mlp = c.g * P[B.w2];
      mlp.rowwise() += P[B.b2].row(0);
      h += mlp;
    }
    detail::LnCache lnf_local;
    MatrixXd hf = detail::layer_norm(h, P[idx_lnf_g_], P[idx_lnf_b_], cache ? &cache->lnf : &lnf_local);
    MatrixXd y = MatrixXd::Zero(cfg_.length, cfg_.channels);
    const auto [ut, us, ur] = head_inputs(hf);
    if (cfg_.use_trend) y += trend_proj_ * ut;
    if (cfg_.use_season) y += season_proj_ * us;
    if (cfg_.use_residual) y += ur;
    if (cache) cache->hf = std::move(hf);
    return y.transpose();
  }

  // Accumulates d(loss)/d(params) into `grads` given d(loss)/d(prediction).
  void backward(const Cache& c, const MatrixXd& grad_out, ParamSet& grads) const {
    const auto& P = params_;
    const MatrixXd dy = grad_out.transpose();  // T x C
    MatrixXd dhf = MatrixXd::Zero(cfg_.length, cfg_.width);
    auto head_back = [&](bool on, const MatrixXd* proj, int w, int b) {
      if (!on) return;
      const MatrixXd du = proj ? MatrixXd(*proj * dy) : dy;  // projections are symmetric
      grads[static_cast<std::size_t>(w)] += c.hf.transpose() * du;
      grads[static_cast<std::size_t>(b)].row(0) += du.colwise().sum();
      dhf += du * P[w].transpose();
    };
    head_back(cfg_.use_trend, &trend_proj_, idx_w_trend_, idx_b_trend_);
    head_back(cfg_.use_season, &season_proj_, idx_w_season_, idx_b_season_);
    head_back(cfg_.use_residual, nullptr, idx_w_res_, idx_b_res_);

    MatrixXd dh = detail::layer_norm_backward(dhf, c.lnf, P[idx_lnf_g_], grads[idx_lnf_g_], grads[idx_lnf_b_]);
    const int dhd = cfg_.width / cfg_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dhd));
    for (std::size_t bi = blocks_.size(); bi-- > 0;) {
      const auto& B = blocks_[bi];
      const auto& bc = c.blocks[bi];
      // MLP residual branch.
      {
        const MatrixXd& dmlp = dh;
        grads[B.w2] += bc.g.transpose() * dmlp;
        grads[B.b2].row(0) += dmlp.colwise().sum();
        MatrixXd dg = dmlp * P[B.w2].transpose();
        MatrixXd du = dg.array() * detail::gelu_grad(bc.u).array();
        grads[B.w1] += bc.m_in.transpose() * du;
        grads[B.b1].row(0) += du.colwise().sum();
        MatrixXd dm = du * P[B.w1].transpose();
        dh += detail::layer_norm_backward(dm, bc.ln2, P[B.ln2_g], grads[B.ln2_g], grads[B.ln2_b]);
      }
      // Attention residual branch.
      {
        const MatrixXd& dattn = dh;
        grads[B.wo] += bc.o.transpose() * dattn;
        grads[B.bo].row(0) += dattn.colwise().sum();
        MatrixXd d_o = dattn * P[B.wo].transpose();
        MatrixXd dq(cfg_.length, cfg_.width), dk(cfg_.length, cfg_.width), dv(cfg_.length, cfg_.width);
        for (int hd = 0; hd < cfg_.heads; ++hd) {
          const MatrixXd& pr = bc.probs[static_cast<std::size_t>(hd)];
          const auto doh = d_o.middleCols(hd * dhd, dhd);
          dv.middleCols(hd * dhd, dhd) = pr.transpose() * doh;
          MatrixXd dp = doh * bc.v.middleCols(hd * dhd, dhd).transpose();
          const VectorXd rowdot = (dp.array() * pr.array()).rowwise().sum();
          MatrixXd ds = pr.array() * (dp.colwise() - rowdot).array();
          dq.middleCols(hd * dhd, dhd) = scale * ds * bc.k.middleCols(hd * dhd, dhd);
          dk.middleCols(hd * dhd, dhd) = scale * ds.transpose() * bc.q.middleCols(hd * dhd, dhd);
        }
        grads[B.wq] += bc.a_in.transpose() * dq;
        grads[B.bq].row(0) += dq.colwise().sum();
        grads[B.wk] += bc.a_in.transpose() * dk;
        grads[B.bk].row(0) += dk.colwise().sum();
        grads[B.wv] += bc.a_in.transpose() * dv;
        grads[B.bv].row(0) += dv.colwise().sum();
        MatrixXd da = dq * P[B.wq].transpose() + dk * P[B.wk].transpose() + dv * P[B.wv].transpose();
        dh += detail::layer_norm_backward(da, bc.ln1, P[B.ln1_g], grads[B.ln1_g], grads[B.ln1_b]);
      }
      // Step embedding: s = e(k) W + b is added to every row.
      const RowVectorXd ds = dh.colwise().sum();
      grads[B.step_b].row(0) += ds;
      grads[B.step_w] += c.step.transpose() * ds;
    }
    grads[idx_w_in_] += c.x.transpose() * dh;
    grads[idx_b_in_].row(0) += dh.colwise().sum();
  }

 private:
  std::tuple<MatrixXd, MatrixXd, MatrixXd> head_inputs(const MatrixXd& hf) const {
    const auto& P = params_;
    MatrixXd ut = hf * P[idx_w_trend_];
    ut.rowwise() += P[idx_b_trend_].row(0);
    MatrixXd us = hf * P[idx_w_season_];
    us.rowwise() += P[idx_b_season_].row(0);
    MatrixXd ur = hf * P[idx_w_res_];
    ur.rowwise() += P[idx_b_res_].row(0);
    return {std::move(ut), std::move(us), std::move(ur)};
  }

  void build_layout() {
    const int C = cfg_.channels, D = cfg_.width, F = cfg_.width * cfg_.mlp_ratio;
    idx_w_in_ = params_.add("in.w", C, D);
    idx_b_in_ = params_.add("in.b", 1, D);
    for (int b = 0; b < cfg_.blocks; ++b) {
      const std::string p = "block" + std::to_string(b) + ".";
      BlockIdx B{};
      B.step_w = params_.add(p + "step.w", D, D);
      B.step_b = params_.add(p + "step.b", 1, D);
      B.ln1_g = params_.add(p + "ln1.g", 1, D);
      B.ln1_b = params_.add(p + "ln1.b", 1, D);
      B.wq = params_.add(p + "attn.wq", D, D);
      B.bq = params_.add(p + "attn.bq", 1, D);
      B.wk = params_.add(p + "attn.wk", D, D);
      B.bk = params_.add(p + "attn.bk", 1, D);
      B.wv = params_.add(p + "attn.wv", D, D);
      B.bv = params_.add(p + "attn.bv", 1, D);
      B.wo = params_.add(p + "attn.wo", D, D);
      B.bo = params_.add(p + "attn.bo", 1, D);
      B.ln2_g = params_.add(p + "ln2.g", 1, D);
      B.ln2_b = params_.add(p + "ln2.b", 1, D);
      B.w1 = params_.add(p + "mlp.w1", D, F);
      B.b1 = params_.add(p + "mlp.b1", 1, F);
      B.w2 = params_.add(p + "mlp.w2", F, D);
      B.b2 = params_.add(p + "mlp.b2", 1, D);
      blocks_.push_back(B);
    }
    idx_lnf_g_ = params_.add("final.ln.g", 1, D);
    idx_lnf_b_ = params_.add("final.ln.b", 1, D);
    idx_w_trend_ = params_.add("trend.w", D, C);
    idx_b_trend_ = params_.add("trend.b", 1, C);
    idx_w_season_ = params_.add("season.w", D, C);
    idx_b_season_ = params_.add("season.b", 1, C);
    idx_w_res_ = params_.add("residual.w", D, C);
    idx_b_res_ = params_.add("residual.b", 1, C);
  }

  void build_buffers() {
    const int T = cfg_.length, D = cfg_.width;
    pos_.resize(T, D);
    for (int t = 0; t < T; ++t) pos_.row(t) = detail::sinusoid(static_cast<double>(t), D);

    MatrixXd poly(T, cfg_.poly_degree + 1);
    for (int t = 0; t < T; ++t) {
      const double tau = T > 1 ? static_cast<double>(t) / (T - 1) : 0.0;
      for (int p = 0; p <= cfg_.poly_degree; ++p) poly(t, p) = std::pow(tau, p);
    }
    const MatrixXd qp = detail::orthonormalize(poly);
    trend_proj_ = qp * qp.transpose();

    const int nf = cfg_.frequencies();
    MatrixXd four(T, 2 * nf);
    for (int t = 0; t < T; ++t)
      for (int f = 1; f <= nf; ++f) {
        const double ang = 2.0 * std::numbers::pi * f * t / T;
        four(t, 2 * (f - 1)) = std::cos(ang);
        four(t, 2 * (f - 1) + 1) = std::sin(ang);
      }
    const MatrixXd qs = detail::orthonormalize(four);
    season_proj_ = qs * qs.transpose();
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](int i, double stddev) {
      auto& m = params_[static_cast<std::size_t>(i)];
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = stddev * normal(rng);
    };
    const double D = cfg_.width;
    const double depth_scale = 1.0 / std::sqrt(2.0 * std::max(1, cfg_.blocks));
    fill(idx_w_in_, 1.0 / std::sqrt(static_cast<double>(cfg_.channels)));
    for (const auto& B : blocks_) {
      fill(B.step_w, 0.5 / std::sqrt(D));
      params_[B.ln1_g].setOnes();
      params_[B.ln2_g].setOnes();
      fill(B.wq, 1.0 / std::sqrt(D));
      fill(B.wk, 1.0 / std::sqrt(D));
      fill(B.wv, 1.0 / std::sqrt(D));
      fill(B.wo, depth_scale / std::sqrt(D));
      fill(B.w1, 1.0 / std::sqrt(D));
      fill(B.w2, depth_scale / std::sqrt(D * cfg_.mlp_ratio));
    }
    params_[idx_lnf_g_].setOnes();
    fill(idx_w_trend_, 0.1 / std::sqrt(D));
    fill(idx_w_season_, 0.1 / std::sqrt(D));
    // residual head stays zero
  }

  DenoiserConfig cfg_;
  ParamSet params_;
  std::vector<BlockIdx> blocks_;
  int idx_w_in_ = 0, idx_b_in_ = 0, idx_lnf_g_ = 0, idx_lnf_b_ = 0;
  int idx_w_trend_ = 0, idx_b_trend_ = 0, idx_w_season_ = 0, idx_b_season_ = 0, idx_w_res_ = 0, idx_b_res_ = 0;
  MatrixXd pos_;
  MatrixXd trend_proj_;
  MatrixXd season_proj_;
};

}  // namespace efdgen::diffusion
