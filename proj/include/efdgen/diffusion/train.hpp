#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "efdgen/diffusion/denoiser.hpp"
#include "efdgen/diffusion/loss.hpp"
#include "efdgen/diffusion/schedule.hpp"
#include "efdgen/error.hpp"

namespace efdgen::diffusion {

struct TrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  int batch_size = 32;
  int steps = 2000;
  double learning_rate = 1e-3;
  double min_lr_fraction = 0.1;  // cosine decay floor
  int warmup_steps = 50;
  double grad_clip = 1.0;        // global norm; <= 0 disables
  double ema_decay = 0.995;
  int diffusion_steps = 200;
  std::uint64_t seed = 0;
  int threads = 1;
  int log_every = 1;
  DenoiserConfig model;

  void validate() const {
    require(lambda1 >= 0.0 && lambda2 >= 0.0, ErrorCode::InvalidConfig, "loss weights must be non-negative");
    require(lambda1 > 0.0 || lambda2 > 0.0, ErrorCode::InvalidConfig, "lambda1 and lambda2 cannot both be 0");
    require(batch_size >= 1 && steps >= 1, ErrorCode::InvalidConfig, "batch size and step budget must be >= 1");
    require(learning_rate > 0.0, ErrorCode::InvalidConfig, "learning rate must be positive");
    require(ema_decay >= 0.0 && ema_decay < 1.0, ErrorCode::InvalidConfig, "EMA decay must be in [0, 1)");
    require(diffusion_steps >= 2, ErrorCode::InvalidConfig, "need at least 2 diffusion steps");
    require(threads >= 1, ErrorCode::InvalidConfig, "threads must be >= 1");
    model.validate();
  }
};

struct TrainRecord {
  int step = 0;
  double loss = 0.0;
  double time_term = 0.0;
  double freq_term = 0.0;
  double learning_rate = 0.0;
};

inline void write_training_log(std::ostream& os, const std::vector<TrainRecord>& log) {
  os << "step,loss,time_term,freq_term,learning_rate\n";
  os.precision(10);
  for (const auto& r : log)
    os << r.step << ',' << r.loss << ',' << r.time_term << ',' << r.freq_term << ',' << r.learning_rate << '\n';
}

class Adam {
 public:
  explicit Adam(const ParamSet& like, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(like.zeros_like()), v_(like.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamSet& params, const ParamSet& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
      params[i].array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
  }

 private:
  ParamSet m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

struct TrainResult {
  DenoiserModel model;  // EMA weights
  std::vector<TrainRecord> log;
  double seconds = 0.0;
};

inline double scheduled_lr(const TrainConfig& cfg, int step) {
  if (step < cfg.warmup_steps) return cfg.learning_rate * (step + 1) / cfg.warmup_steps;
  const double span = std::max(1, cfg.steps - cfg.warmup_steps);
  const double progress = std::min(1.0, (step - cfg.warmup_steps) / span);
  const double floor = cfg.min_lr_fraction;
  return cfg.learning_rate * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

// Loss and parameter gradient for one (z0, k, eps) example, accumulated into
// `grads` with weight `weight`.
inline LossTerms accumulate_example(const DenoiserModel& model, const Eigen::MatrixXd& z0, int k,
                                    const Eigen::MatrixXd& eps, const DiffusionSchedule& sched,
                                    const DftBasis& basis, double lambda1, double lambda2, double weight,
                                    ParamSet& grads) {
  DenoiserModel::Cache cache;
  const Eigen::MatrixXd zk = forward_noise(z0, k, eps, sched);
  const Eigen::MatrixXd pred = model.forward(zk, k, &cache);
  Eigen::MatrixXd g;
  const auto terms = hybrid_loss(z0, pred, lambda1, lambda2, basis, &g);
  g *= weight;
  model.backward(cache, g, grads);
  return terms;
}

// Minimises the hybrid loss with k ~ U{1..K} per example, Adam updates,
// cosine learning-rate decay and an EMA copy of the weights (returned).
// `on_ema` sees the EMA weights after every step.
inline TrainResult train(const std::vector<Eigen::MatrixXd>& dataset, TrainConfig cfg,
                         const std::function<void(const TrainRecord&)>& on_step = {},
                         const std::function<void(int, const ParamSet&)>& on_ema = {}) {
  require(!dataset.empty(), ErrorCode::EmptyDataset, "training set is empty");
  const auto rows = dataset.front().rows(), cols = dataset.front().cols();
  for (const auto& z : dataset)
    require(z.rows() == rows && z.cols() == cols, ErrorCode::ShapeMismatch, "training series differ in shape");
  cfg.model.channels = static_cast<int>(rows);
  cfg.model.length = static_cast<int>(cols);
  cfg.validate();

  const auto started = std::chrono::steady_clock::now();
  const auto sched = cosine_schedule(cfg.diffusion_steps);
  const auto basis = dft_basis(static_cast<int>(cols));
  DenoiserModel model(cfg.model, cfg.seed);
  ParamSet ema = model.params();
  Adam adam(model.params());
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::uniform_int_distribution<int> pick_k(1, sched.K());
  std::normal_distribution<double> normal(0.0, 1.0);

  TrainResult result;
  const int threads = std::min(cfg.threads, cfg.batch_size);
  std::vector<ParamSet> partial(static_cast<std::size_t>(threads), model.params().zeros_like());
  std::vector<LossTerms> partial_terms(static_cast<std::size_t>(threads));

  struct Example {
    std::size_t index;
    int k;
    Eigen::MatrixXd eps;
  };
  std::vector<Example> batch(static_cast<std::size_t>(cfg.batch_size));

  for (int step = 0; step < cfg.steps; ++step) {
    // All randomness is drawn on this thread in a fixed order.
    for (auto& ex : batch) {
      ex.index = pick(rng);
      ex.k = pick_k(rng);
      ex.eps.resize(rows, cols);
      for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) ex.eps(r, c) = normal(rng);
    }
    const double weight = 1.0 / cfg.batch_size;
    auto work = [&](int tid) {
      auto& g = partial[static_cast<std::size_t>(tid)];
      g.set_zero();
      LossTerms acc;
      for (int b = tid; b < cfg.batch_size; b += threads) {
        const auto& ex = batch[static_cast<std::size_t>(b)];
        const auto t = accumulate_example(model, dataset[ex.index], ex.k, ex.eps, sched, basis, cfg.lambda1,
                                          cfg.lambda2, weight, g);
        acc.total += weight * t.total;
        acc.time_term += weight * t.time_term;
        acc.freq_term += weight * t.freq_term;
      }
      partial_terms[static_cast<std::size_t>(tid)] = acc;
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (int tid = 0; tid < threads; ++tid) pool.emplace_back(work, tid);
    }
    ParamSet& grads = partial[0];
    LossTerms terms = partial_terms[0];
    for (int tid = 1; tid < threads; ++tid) {
      grads.add_scaled(partial[static_cast<std::size_t>(tid)], 1.0);
      terms.total += partial_terms[static_cast<std::size_t>(tid)].total;
      terms.time_term += partial_terms[static_cast<std::size_t>(tid)].time_term;
      terms.freq_term += partial_terms[static_cast<std::size_t>(tid)].freq_term;
    }
    if (!std::isfinite(terms.total) || !grads.all_finite())
      throw Error(ErrorCode::NonFiniteLoss, "non-finite loss at step " + std::to_string(step) +
                                                " (time term " + std::to_string(terms.time_term) +
                                                ", freq term " + std::to_string(terms.freq_term) + ")");
    if (cfg.grad_clip > 0.0) {
      const double norm = std::sqrt(grads.squared_norm());
      if (norm > cfg.grad_clip) grads.scale(cfg.grad_clip / norm);
    }
    const double lr = scheduled_lr(cfg, step);
    adam.step(model.params(), grads, lr);

    const double decay = std::min(cfg.ema_decay, (1.0 + step) / (10.0 + step));
    ema.scale(decay);
    ema.add_scaled(model.params(), 1.0 - decay);

    TrainRecord rec{step, terms.total, terms.time_term, terms.freq_term, lr};
    if (step % std::max(1, cfg.log_every) == 0 || step + 1 == cfg.steps) result.log.push_back(rec);
    if (on_step) on_step(rec);
    if (on_ema) on_ema(step, ema);
  }
  model.load_params(ema);
  result.model = std::move(model);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

// Mean hybrid loss of `model` over fixed (z0, k, eps) triples.
inline double evaluate_loss(const DenoiserModel& model, const std::vector<Eigen::MatrixXd>& z0,
                            const std::vector<int>& ks, const std::vector<Eigen::MatrixXd>& eps,
                            const DiffusionSchedule& sched, double lambda1, double lambda2) {
  require(z0.size() == ks.size() && z0.size() == eps.size() && !z0.empty(), ErrorCode::ShapeMismatch,
          "validation batch parts differ in size");
  const auto basis = dft_basis(static_cast<int>(z0.front().cols()));
  double acc = 0.0;
  for (std::size_t i = 0; i < z0.size(); ++i) {
    const auto zk = forward_noise(z0[i], ks[i], eps[i], sched);
    acc += hybrid_loss(z0[i], model.predict(zk, ks[i]), lambda1, lambda2, basis).total;
  }
  return acc / static_cast<double>(z0.size());
}

}  // namespace efdgen::diffusion
