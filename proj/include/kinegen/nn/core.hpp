#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "kinegen/common.hpp"
#include "kinegen/rng.hpp"

namespace kinegen::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Named parameter arrays with fixed shapes. Creation order is preserved;
// it is the iteration, serialization and optimizer-state order.
class ParameterStore {
 public:
  ParameterStore() = default;
  explicit ParameterStore(std::uint64_t seed) : seed_(seed) {}

  Mat& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) {
      throw validation_error("parameter already exists: " + name);
    }
    index_[name] = entries_.size();
    entries_.emplace_back(name, Mat::Zero(rows, cols));
    return entries_.back().second;
  }

  Mat& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw validation_error("no parameter: " + name);
    return entries_[it->second].second;
  }

  const Mat& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw validation_error("no parameter: " + name);
    return entries_[it->second].second;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  const std::pair<std::string, Mat>& entry(std::size_t i) const {
    return entries_[i];
  }
  Mat& value(std::size_t i) { return entries_[i].second; }

  std::uint64_t seed() const { return seed_; }

  // same names and shapes, all zeros; used for gradients
  ParameterStore zeros_like() const {
    ParameterStore out(seed_);
    for (const auto& [name, value] : entries_) {
      out.create(name, value.rows(), value.cols());
    }
    return out;
  }

  void set_zero() {
    for (auto& [name, value] : entries_) value.setZero();
  }

  bool all_finite() const {
    for (const auto& [name, value] : entries_) {
      if (!value.allFinite()) return false;
    }
    return true;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, value] : entries_) {
      n += static_cast<std::size_t>(value.size());
    }
    return n;
  }

 private:
  std::vector<std::pair<std::string, Mat>> entries_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t seed_ = 0;
};

// uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)], filled in storage order
inline void init_uniform(Mat& m, Rng& rng, Eigen::Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      m(i, j) = rng.uniform(-bound, bound);
    }
  }
}

// --- activations -----------------------------------------------------

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// writable-expression arguments follow the usual Eigen const_cast idiom
// tanh through the vectorized exp kernel: (1-e)/(1+e) with e = exp(-2|x|).
// Exact identity, saturates to ±1 without overflow, and several times
// faster than the libm fallback Eigen uses for double tanh.
template <typename Derived>
inline void tanh_inplace(const Eigen::MatrixBase<Derived>& expr) {
  auto& m = const_cast<Eigen::MatrixBase<Derived>&>(expr);
  using Plain = typename Eigen::MatrixBase<Derived>::PlainObject;
  Plain e = (-2.0 * m.array().abs()).exp();
  Plain t = ((1.0 - e.array()) / (1.0 + e.array())).matrix();
  m = (m.array() >= 0.0).select(t, -t);
}

// sigmoid(x) = (1 + tanh(x/2)) / 2, sharing the fast tanh path
template <typename Derived>
inline void sigmoid_inplace(const Eigen::MatrixBase<Derived>& expr) {
  auto& m = const_cast<Eigen::MatrixBase<Derived>&>(expr);
  m = 0.5 * m;
  tanh_inplace(m);
  m = 0.5 * (m.array() + 1.0).matrix();
}

enum class Activation { identity, sigmoid, relu, tanh };

template <typename Derived>
inline void apply_activation(Activation act,
                             const Eigen::MatrixBase<Derived>& expr) {
  auto& m = const_cast<Eigen::MatrixBase<Derived>&>(expr);
  switch (act) {
    case Activation::identity: return;
    case Activation::sigmoid: sigmoid_inplace(m); return;
    case Activation::relu: m = m.cwiseMax(0.0); return;
    case Activation::tanh: tanh_inplace(m); return;
  }
}

// derivative expressed through the activation output y
inline Mat activation_grad_from_output(Activation act, const Mat& y) {
  switch (act) {
    case Activation::identity: return Mat::Ones(y.rows(), y.cols());
    case Activation::sigmoid: return (y.array() * (1.0 - y.array())).matrix();
    case Activation::relu:
      return (y.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - y.array().square()).matrix();
  }
  return Mat::Ones(y.rows(), y.cols());
}

// --- losses ----------------------------------------------------------

inline double mse(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw shape_error("mse: shape mismatch");
  }
  if (a.size() == 0) throw validation_error("mse: empty input");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

// d mse(a, b) / d a
inline Mat mse_grad(const Mat& a, const Mat& b) {
  return (a - b) * (2.0 / static_cast<double>(a.size()));
}

// numerically stable binary cross-entropy from the raw logit
inline double bce_with_logits(double logit, double target) {
  return std::max(logit, 0.0) - logit * target +
         std::log1p(std::exp(-std::abs(logit)));
}

inline double bce_with_logits_grad(double logit, double target) {
  return sigmoid(logit) - target;
}

// mean over a row vector of logits against a constant 0/1 target
inline double bce_with_logits_mean(const Mat& logits, double target) {
  if (logits.size() == 0) throw validation_error("bce: empty logits");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      sum += bce_with_logits(logits(i, j), target);
    }
  }
  return sum / static_cast<double>(logits.size());
}

inline Mat bce_with_logits_mean_grad(const Mat& logits, double target) {
  Mat g(logits.rows(), logits.cols());
  const double scale = 1.0 / static_cast<double>(logits.size());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      g(i, j) = (sigmoid(logits(i, j)) - target) * scale;
    }
  }
  return g;
}

inline Vec softmax(const Vec& logits) {
  if (logits.size() == 0) throw validation_error("softmax: empty logits");
  const double shift = logits.maxCoeff();
  Vec e = (logits.array() - shift).exp();
  return e / e.sum();
}

// columnwise softmax + cross-entropy against integer labels; returns the
// mean loss and writes the logit gradient
inline double softmax_cross_entropy(const Mat& logits,
                                    const std::vector<int>& labels,
                                    Mat* dlogits) {
  if (static_cast<std::size_t>(logits.cols()) != labels.size()) {
    throw shape_error("softmax_cross_entropy: label count mismatch");
  }
  const double inv_n = 1.0 / static_cast<double>(logits.cols());
  double loss = 0.0;
  if (dlogits) dlogits->resize(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const Vec p = softmax(logits.col(j));
    const int y = labels[static_cast<std::size_t>(j)];
    loss -= std::log(std::max(p(y), 1e-300));
    if (dlogits) {
      dlogits->col(j) = p * inv_n;
      (*dlogits)(y, j) -= inv_n;
    }
  }
  return loss * inv_n;
}

// --- optimizer -------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second-moment update with bias correction. State is kept per
// parameter entry, matched by position, so the store layout must not
// change between steps.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }

  void step(ParameterStore& params, const ParameterStore& grads) {
    if (params.size() != grads.size()) {
      throw shape_error("adam: parameter/gradient store mismatch");
    }
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        const Mat& p = params.entry(i).second;
        m_[i] = Mat::Zero(p.rows(), p.cols());
        v_[i] = Mat::Zero(p.rows(), p.cols());
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Mat& g = grads.entry(i).second;
      if (!g.allFinite()) {
        throw numerical_error("non-finite gradient for parameter '" +
                              grads.entry(i).first + "'");
      }
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
      v_[i].array() =
          config_.beta2 * v_[i].array() + (1.0 - config_.beta2) * g.array().square();
      params.value(i).array() -=
          config_.lr * (m_[i].array() / bc1) /
          ((v_[i].array() / bc2).sqrt() + config_.eps);
    }
  }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

// --- gradient verification -------------------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;

  bool ok(double tolerance) const { return worst <= tolerance; }
};

// Central finite differences against an analytically computed gradient.
// loss_fn() evaluates the loss at the store's current values; grads holds
// the analytic gradient at the unperturbed point. Discrepancies below
// abs_floor pass outright: that is the roundoff scale of the difference
// quotient itself, where a relative criterion would only amplify noise.
template <typename LossFn>
GradCheckReport grad_check(LossFn&& loss_fn, ParameterStore& params,
                           const ParameterStore& grads, double step = 1e-5,
                           double abs_floor = 1e-8) {
  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& p = params.value(i);
    const Mat& g = grads.entry(i).second;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + step;
      const double up = loss_fn();
      p.data()[k] = saved - step;
      const double down = loss_fn();
      p.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = g.data()[k];
      const double diff = std::abs(numeric - analytic);
      if (diff <= abs_floor) continue;
      const double denom = std::max(std::abs(numeric), std::abs(analytic));
      worst = std::max(worst, diff / denom);
    }
    report.entries.push_back({params.entry(i).first, worst});
    report.worst = std::max(report.worst, worst);
  }
  return report;
}

}  // namespace kinegen::nn
