#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kinegen/common.hpp"
#include "kinegen/ingest.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/types.hpp"

namespace kinegen {

// Parametric stand-in for the human dataset: per-class bell profiles with
// published duration statistics, plus chosen amplitude magnitudes that
// keep the qualitative class ordering (careful slower and flatter, heavy
// slightly flatter than light).

struct ClassStats {
  int count = 0;
  double md_mean = 0.0, md_std = 0.0;  // seconds
  double pa_mean = 0.0, pa_std = 0.0;  // m/s
};

struct SurrogateConfig {
  // indexed in ClassLabel::all() order: W1-NC, W2-NC, W1-C, W2-C
  std::array<ClassStats, 4> classes = {{
      {248, 1.44, 0.17, 1.0, 0.12},
      {251, 1.61, 0.19, 0.93, 0.12},
      {254, 2.62, 0.63, 0.6, 0.08},
      {248, 3.04, 0.69, 0.558, 0.08},
  }};
  double a = 2.0, b = 2.0;  // profile shape exponents
  double noise_std = 0.02;  // m/s
  double rate = 22.0;       // samples per second
  std::uint64_t seed = 0;

  void validate() const {
    for (const ClassStats& c : classes) {
      if (c.count <= 0) {
        throw validation_error("surrogate: class counts must be positive");
      }
      if (c.md_mean <= 0.0 || c.pa_mean <= 0.0) {
        throw validation_error("surrogate: class means must be positive");
      }
      if (c.md_std < 0.0 || c.pa_std < 0.0) {
        throw validation_error("surrogate: class stds must be nonnegative");
      }
    }
    if (a <= 0.0 || b <= 0.0) {
      throw validation_error("surrogate: shape exponents must be positive");
    }
    if (noise_std < 0.0) {
      throw validation_error("surrogate: noise std must be nonnegative");
    }
    if (rate <= 0.0) {
      throw validation_error("surrogate: rate must be positive");
    }
  }
};

namespace detail {

// normal draw confined to mean +- 3 std and the positive axis
inline double truncated_normal(Rng& rng, double mean, double std) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double x = rng.gaussian(mean, std);
    if (x > 0.0 && std::abs(x - mean) <= 3.0 * std) return x;
  }
  throw numerical_error("truncated_normal: no admissible draw");
}

}  // namespace detail

// Noiseless bell v(tau) = peak * tau^a (1-tau)^b / max, sampled on
// round(duration*rate)+1 points. Samples are floored at the trim
// threshold so that trimming removes exactly the sentinels added by
// make_surrogate, never the profile body.
inline std::vector<double> surrogate_profile(double peak, double duration,
                                             double a, double b,
                                             double rate) {
  const int n = std::max(
      2, static_cast<int>(std::lround(duration * rate)) + 1);
  const double shape_max =
      std::pow(a, a) * std::pow(b, b) / std::pow(a + b, a + b);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double tau = static_cast<double>(i) / static_cast<double>(n - 1);
    const double shape = std::pow(tau, a) * std::pow(1.0 - tau, b);
    v[static_cast<std::size_t>(i)] =
        std::max(peak * shape / shape_max, trim_threshold);
  }
  return v;
}

inline TrialSet make_surrogate(const SurrogateConfig& cfg) {
  cfg.validate();
  TrialSet set;
  set.provenance = Provenance::surrogate;
  const auto labels = ClassLabel::all();
  for (std::size_t ci = 0; ci < labels.size(); ++ci) {
    const ClassStats& stats = cfg.classes[ci];
    for (int i = 0; i < stats.count; ++i) {
      // one counter-based stream per trial, so generation order is free
      Rng rng(mix_seed(mix_seed(cfg.seed, 40 + ci),
                       static_cast<std::uint64_t>(i)));
      const double duration =
          detail::truncated_normal(rng, stats.md_mean, stats.md_std);
      const double peak =
          detail::truncated_normal(rng, stats.pa_mean, stats.pa_std);

      Trial t;
      t.trial_id = "sur-" + labels[ci].str() + "-" + std::to_string(i);
      t.label = labels[ci];
      t.rate = cfg.rate;
      t.v = surrogate_profile(peak, duration, cfg.a, cfg.b, cfg.rate);
      for (double& v : t.v) {
        v = std::max(v + cfg.noise_std * rng.gaussian(), trim_threshold);
      }
      // sub-threshold sentinels, trimmed away like rest samples in a
      // real recording
      t.v.insert(t.v.begin(), 0.002);
      t.v.push_back(0.002);
      set.trials.push_back(std::move(t));
    }
  }
  set.validate();
  return set;
}

}  // namespace kinegen
